//! Evaluation harness: detection metrics, null calibration, robustness
//! attacks and parameter sweeps.

pub mod attack;
pub mod calibrate;
pub mod metrics;
pub mod sweep;

pub use attack::{substitution_attack, AttackSampler};
pub use calibrate::{type1_calibration, CalibrationReport, DEFAULT_CALIBRATION_VOCAB};
pub use metrics::{auroc, ppr, tpr_at_fpr, ues, MetricsReport, ScoreSet};
pub use sweep::{sweep, SweepCell, SweepPlan, SweepRow, SweepTable};
