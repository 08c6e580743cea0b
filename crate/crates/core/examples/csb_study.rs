//! Repeated shrink runs from one promissory box on `y(t) = x1 + 2·x2`. The
//! contour is a diagonal band, so each seed settles on a slightly different box.
//!
//! ```bash
//! cargo run --release --example csb_study
//! ```

use std::sync::Arc;

use csb::models::additive_model;
use csb::oat::{promissory_box, OatConfig};
use csb::sampling::quantile_sorted;
use csb::shrink::{csb_estimate, ShrinkConfig};
use csb::{EvalCounter, FactorVector, LossConfig, Objective, TimeGrid};

fn main() -> csb::Result<()> {
    let grid = TimeGrid::uniform(0.0, 1.0, 4)?;
    let x_hat = FactorVector::new(vec![1.0, 1.0])?;
    let obj = Objective::against_nominal(
        Arc::new(additive_model()),
        &x_hat,
        &grid,
        Default::default(),
        LossConfig::new(2.0)?,
        EvalCounter::new(),
    )?;
    let pb = promissory_box(&obj, &x_hat, None, &OatConfig::default())?;
    let mut bounds = vec![Vec::new(); 4];
    for seed in 0..20 {
        let (bx, _) = csb_estimate(&obj, &x_hat, &pb.bx, &ShrinkConfig { seed: seed * 1000, ..Default::default() })?;
        for (j, iv) in bx.intervals().iter().enumerate() {
            bounds[2 * j].push(iv.lower);
            bounds[2 * j + 1].push(iv.upper);
        }
    }
    for (i, v) in bounds.iter_mut().enumerate() {
        v.sort_by(f64::total_cmp);
        let q = [0.0, 0.25, 0.5, 0.75, 1.0].map(|q| quantile_sorted(v, q));
        let side = if i % 2 == 0 { "lower" } else { "upper" };
        println!(
            "x{} {side}: min {:.4} q1 {:.4} median {:.4} q3 {:.4} max {:.4}",
            i / 2 + 1, q[0], q[1], q[2], q[3], q[4]
        );
    }
    Ok(())
}
