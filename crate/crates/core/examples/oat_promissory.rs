//! One-at-a-time boundary search on `y(t) = x1` with a squared loss.
//!
//! The contour for lambda = 1.3 is exactly [0.7, 1.3], so the promissory
//! bounds land just outside it.
//!
//! ```bash
//! cargo run --release --example oat_promissory
//! ```

use std::sync::Arc;

use csb::models::identity_model;
use csb::oat::{promissory_box, OatConfig};
use csb::{EvalCounter, FactorVector, LossConfig, Objective, TimeGrid};

fn main() -> csb::Result<()> {
    let grid = TimeGrid::uniform(0.0, 1.0, 4)?;
    let x_hat = FactorVector::new(vec![1.0])?;
    let obj = Objective::against_nominal(
        Arc::new(identity_model()),
        &x_hat,
        &grid,
        Default::default(),
        LossConfig::new(2.0)?,
        EvalCounter::new(),
    )?;
    let pb = promissory_box(&obj, &x_hat, None, &OatConfig::default())?;
    println!("threshold {:.6}", pb.threshold.threshold_value);
    for d in &pb.diagnostics {
        println!(
            "{}: down {:.6} (phi {:.6}, {} evals), up {:.6} (phi {:.6}, {} evals)",
            d.factor, d.down.value, d.down.phi, d.down.evaluations, d.up.value, d.up.phi, d.up.evaluations
        );
    }
    Ok(())
}
