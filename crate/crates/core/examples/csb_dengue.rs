//! Promissory box then shrink for the dengue model at its table nominal.
//!
//! ```bash
//! cargo run --release --example csb_dengue -- 7
//! ```
//! The optional argument is the shrink seed.

use std::sync::Arc;

use csb::models::{dengue_model, DengueModel};
use csb::oat::{promissory_box, OatConfig};
use csb::sampling::monte_carlo;
use csb::shrink::{csb_estimate, ShrinkConfig};
use csb::{EvalCounter, FactorVector, LossConfig, Objective, TimeGrid};

fn main() -> csb::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let grid = TimeGrid::uniform(0.0, 1.0, 53)?;
    let x_hat = FactorVector::from(DengueModel::nominal());
    let counter = EvalCounter::new();
    let obj = Objective::against_nominal(
        Arc::new(dengue_model()),
        &x_hat,
        &grid,
        Default::default(),
        LossConfig::default(),
        counter.clone(),
    )?;
    let search = DengueModel::estimation_box();
    let pb = promissory_box(&obj, &x_hat, Some(&search), &OatConfig::default())?;
    let cfg = ShrinkConfig { seed, ..Default::default() };
    let (bx, trace) = csb_estimate(&obj, &x_hat, &pb.bx, &cfg)?;

    println!("{:?} after {} iterations, {} evaluations", trace.termination, trace.iterations(), trace.eval_count);
    println!("{:>10} {:>14} {:>14} {:>14}", "factor", "nominal", "lower", "upper");
    for ((name, iv), x) in bx.names().iter().zip(bx.intervals()).zip(x_hat.values()) {
        println!("{name:>10} {x:>14.6e} {:>14.6e} {:>14.6e}", iv.lower, iv.upper);
    }
    let recheck = monte_carlo(&obj, &bx, cfg.n, seed ^ 0x5eed)?;
    println!("fresh sample below threshold: {:.3}", recheck.fraction_below(trace.threshold));
    println!("total evaluations: {}", counter.get());
    Ok(())
}
