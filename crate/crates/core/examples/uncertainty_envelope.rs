//! Monte-Carlo uncertainty analysis of two dengue boxes: the estimation
//! ranges and a narrow box around the nominal.
//!
//! ```bash
//! cargo run --release --example uncertainty_envelope
//! ```

use std::sync::Arc;

use csb::models::{dengue_model, DengueModel};
use csb::sampling::{monte_carlo, uncertainty_analysis};
use csb::{EvalCounter, FactorVector, Interval, LossConfig, Objective, TimeGrid};

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
    let thr = obj.threshold(1.3)?;
    let wide = DengueModel::estimation_box();
    let narrow = wide.with_intervals(
        x_hat.values().iter().map(|&v| Interval::new(0.99 * v, 1.01 * v)).collect::<csb::Result<_>>()?,
    )?;
    for (label, bx) in [("estimation ranges", &wide), ("nominal +/- 1%", &narrow)] {
        let mc = monte_carlo(&obj, bx, 500, 3)?;
        let ua = uncertainty_analysis(&obj, &mc, &thr);
        let mid = &ua.envelope[ua.envelope.len() / 2];
        println!(
            "{label}: {:.1}% under threshold, week {} cases q05 {:.0} q50 {:.0} q95 {:.0} (nominal {:.0})",
            100.0 * ua.fraction_below, mid.time, mid.q05, mid.q50, mid.q95, mid.nominal
        );
    }
    Ok(())
}
