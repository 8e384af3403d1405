//! Statistical text watermarking tuned for low-entropy generation.
//!
//! A keyed hash of the previous token splits the vocabulary into a green
//! list and a red complement; generation nudges green logits up by a bias
//! delta, and detection standardizes the green-token count of a suspect
//! text into a z-statistic. In low-entropy text (code, templates, boilerplate)
//! most steps are forced, so biasing or scoring them only adds noise. This
//! crate builds the full toolchain around that observation:
//!
//! - [`watermark`]: vocabulary partitioning, logit biasing, and gated
//!   generation (bias always, above a true-entropy threshold, or where a
//!   trained tagger predicts high entropy).
//! - [`detect`]: full, entropy-gated, entropy-weighted, and tagger-gated
//!   detection over token sequences, with or without model access.
//! - [`navigator`]: per-document search for the detection entropy threshold.
//! - [`tagger`]: hashed n-gram features and small MLP heads that predict
//!   "is this step low-entropy?" without the reference model.
//! - [`model`]: n-gram and fixed-schedule toy models driving the pipeline.
//! - [`eval`]: null calibration, detection metrics, substitution attacks
//!   and parameter sweeps.
//! - [`cli`]: the `lowent-wm` binary wiring it all together.
//!
//! Every random choice flows through [`rng::Prng`], a splitmix64 generator
//! with explicit state and named sub-streams, so any run replays bit-exactly
//! from its seed.
//!
//! The `examples/` directory is the guided tour; each example is runnable
//! on its own and prints what it demonstrates:
//!
//! ```text
//! cargo run --example generate_and_detect    # end-to-end watermark + z-score
//! cargo run --example entropy_gating         # why low-entropy steps hurt
//! cargo run --example train_tagger           # fit an entropy-tagger bank
//! cargo run --example ie_pipeline            # model-free tagger detection
//! cargo run --example threshold_navigator    # per-document tau search
//! cargo run --example type1_calibration      # null FPR vs the z threshold
//! cargo run --example substitution_attack    # robustness under corruption
//! cargo run --example sweep                  # parameter grid -> CSV table
//! ```

pub mod cli;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod navigator;
pub mod rng;
pub mod tagger;
pub mod watermark;

pub use detect::{
    detect_ewd, detect_full, detect_ie, detect_ie_traced, detect_selective, DetectionReport,
    EntropySource,
};
pub use error::{Error, Result};
pub use model::{LogitProvider, Model, TokenId};
pub use navigator::{navigate, Direction, NavigatorConfig, NavigatorResult, TauStats};
pub use tagger::TaggerBank;
pub use watermark::{generate, EntropyGate, Scheme, WatermarkConfig};
