//! Multi-start fitting against noisy synthetic data, the 10 % filter and
//! the median confidence intervals.
//!
//! ```bash
//! cargo run --release --example fit_median_ci
//! ```

use std::sync::Arc;

use csb::estimation::{filter_fits, median_ci, multi_start_fit, FitConfig};
use csb::models::{decay_model, integrate};
use csb::{EvalCounter, FactorVector, LossConfig, Objective, Orthotope, TimeGrid, Trajectory};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

fn main() -> csb::Result<()> {
    let model = Arc::new(decay_model());
    let grid = TimeGrid::uniform(0.0, 0.25, 21)?;
    let truth = FactorVector::new(vec![2.0, 0.7])?;
    let clean = integrate(model.as_ref(), &truth, &grid, &Default::default())?;

    let mut rng = csb::rng::StreamRng::seed_from_u64(42);
    let noise = Normal::new(0.0, 0.03).unwrap();
    let noisy = clean.values().iter().map(|v| v * (1.0 + noise.sample(&mut rng))).collect();
    let data = Trajectory::new(grid, noisy)?;

    let obj = Objective::against_data(model, data, Default::default(), LossConfig::new(2.0)?, EvalCounter::new());
    let bx = Orthotope::new(
        vec!["y0".into(), "rate".into()],
        vec![csb::Interval::new(0.0, 5.0)?, csb::Interval::new(0.0, 3.0)?],
    )?;
    let fits = multi_start_fit(&obj, &bx, &FitConfig { n_starts: 40, seed: 1, ..Default::default() })?;
    let kept = filter_fits(&fits, 0.10);
    let (nominal, ci) = median_ci(bx.names().to_vec(), &kept)?;
    println!("{} of {} fits kept", kept.len(), fits.len());
    for ((name, iv), m) in ci.names.iter().zip(&ci.intervals).zip(nominal.values()) {
        println!("{name}: median {m:.5}, interval [{:.5}, {:.5}]", iv.lower, iv.upper);
    }
    Ok(())
}
