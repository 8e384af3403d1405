//! Cross schemes with bias strengths, score every cell, and render the
//! result as CSV.

use lowent_wm::eval::SweepPlan;
use lowent_wm::model::{ControlledEntropyModel, Model, ScheduleEntry};
use lowent_wm::{Scheme, WatermarkConfig};

fn main() -> lowent_wm::Result<()> {
    let schedule = vec![
        ScheduleEntry { target_entropy: 0.1, peak: 9 },
        ScheduleEntry { target_entropy: 2.8, peak: 17 },
        ScheduleEntry { target_entropy: 0.1, peak: 3 },
        ScheduleEntry { target_entropy: 2.8, peak: 28 },
    ];
    let model = Model::Controlled(ControlledEntropyModel::new(40, schedule)?);

    let plan = SweepPlan {
        schemes: vec![Scheme::Kgw, Scheme::Sweet],
        gammas: vec![0.25, 0.5],
        deltas: vec![1.0, 3.0],
        taus: vec![0.6],
        navigator_ablation: false,
        n_docs: 40,
        doc_len: 120,
        seed: 42,
    };
    println!(
        "{} cells, {} documents each, {} tokens per document\n",
        plan.cells().len(),
        plan.n_docs,
        plan.doc_len
    );

    let base = WatermarkConfig::default();
    let table = lowent_wm::eval::sweep(&model, None, &base, &plan)?;
    print!("{}", table.to_csv());
    Ok(())
}
