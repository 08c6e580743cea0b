//! Index convergence on the dengue dissimilarity surface as the sample
//! size grows: sum of ST, and agreement of sum S with sum |S|.
//!
//! ```bash
//! cargo run --release --example convergence_series
//! ```

use std::sync::Arc;

use csb::models::{dengue_model, DengueModel};
use csb::sensitivity::convergence_analysis;
use csb::{EvalCounter, FactorVector, LossConfig, Objective, TimeGrid};

fn main() -> csb::Result<()> {
    let grid = TimeGrid::uniform(0.0, 1.0, 53)?;
    let x_hat = FactorVector::from(DengueModel::nominal());
    let obj = Objective::against_nominal(
        Arc::new(dengue_model()),
        &x_hat,
        &grid,
        Default::default(),
        LossConfig::default(),
        EvalCounter::new(),
    )?;
    let series = convergence_analysis(&obj, &DengueModel::estimation_box(), &[250, 500, 1000], 5)?;
    println!("{:>6} {:>8} {:>8} {:>8} {:>10}", "n", "sum ST", "sum S", "sum |S|", "disagree");
    for p in &series.points {
        println!(
            "{:>6} {:>8.3} {:>8.3} {:>8.3} {:>10.4}",
            p.sample_size, p.sum_s_total, p.sum_s_first, p.sum_abs_s_first, p.sign_disagreement()
        );
    }
    Ok(())
}
