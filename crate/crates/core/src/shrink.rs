//! Uncertainty-based interval shrinking: the confidence sub-contour box (CSB)
//! estimator.
//!
//! Each outer iteration runs a Latin-hypercube Monte-Carlo on the current box
//! `Θ`. If at least `delta · N` outputs are under the threshold the box is
//! returned. Otherwise the best `ψ = max(ε, round(η·N))` samples are kept and a
//! per-factor histogram cut proposes a new box; bins holding fewer than
//! `ξ · max` surviving samples are dropped and the interval becomes the sample
//! range of the remaining bins. A cut that would exclude the nominal value is
//! shifted back over it. When nothing changes, the bin grid is refined and,
//! once all grids are spent, fewer samples are kept.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{FactorVector, Interval, Orthotope};
use crate::error::{CsbError, Result};
use crate::loss::Objective;
use crate::sampling::monte_carlo;

/// Smallest number of kept samples the stall response may shrink to.
pub const MIN_KEPT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShrinkConfig {
    pub lambda: f64,
    /// Samples per iteration.
    pub n: usize,
    pub imax: usize,
    /// Fraction of samples kept at minimum (the rest, highest outputs, are dropped).
    pub eta: f64,
    /// Bins under `xi` times the fullest bin are cut.
    pub xi: f64,
    /// Stop once this fraction of outputs is under the threshold.
    pub delta: f64,
    pub seed: u64,
}

impl Default for ShrinkConfig {
    fn default() -> Self {
        Self {
            lambda: 1.3,
            n: 1000,
            imax: 500,
            eta: 0.5,
            xi: 0.63,
            delta: 0.95,
            seed: 0,
        }
    }
}

impl ShrinkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CsbError::InvalidArgument(m));
        if self.n < MIN_KEPT {
            return bad(format!("shrink.n must be >= {MIN_KEPT}, got {}", self.n));
        }
        bin_count_candidates(self.n)?;
        if self.imax < 1 {
            return bad("shrink.imax must be >= 1".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("shrink.eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return bad(format!("shrink.xi must lie in (0, 1), got {}", self.xi));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return bad(format!("shrink.delta must lie in (0, 1], got {}", self.delta));
        }
        if !(self.lambda > 0.0) {
            return bad("shrink.lambda must be positive".into());
        }
        Ok(())
    }
}

/// Divisors `r` of `n` with `2 <= r <= n/10`, ascending.
pub fn bin_count_candidates(n: usize) -> Result<Vec<usize>> {
    let bins: Vec<usize> = (2..=n / 10).filter(|r| n.is_multiple_of(*r)).collect();
    if bins.is_empty() {
        return Err(CsbError::NoBinCandidates(n));
    }
    Ok(bins)
}

/// Histogram cut of one factor over the edges of `current`.
pub fn csb_histogram(samples: &[f64], n_bins: usize, xi: f64, current: Interval) -> Result<Interval> {
    histogram_cut(samples, n_bins, xi, current).map(|(iv, _)| iv)
}

/// [`csb_histogram`] that also counts the samples falling outside the result.
pub fn histogram_cut(samples: &[f64], n_bins: usize, xi: f64, current: Interval) -> Result<(Interval, usize)> {
    if samples.is_empty() {
        return Err(CsbError::InvalidArgument("histogram of an empty sample".into()));
    }
    if n_bins < 2 {
        return Err(CsbError::InvalidArgument(format!("need at least two bins, got {n_bins}")));
    }
    let width = current.width();
    if width == 0.0 {
        return Ok((current, 0));
    }
    let bin_of = |v: f64| {
        let b = ((v - current.lower) / width * n_bins as f64).floor();
        (b.max(0.0) as usize).min(n_bins - 1)
    };
    let mut counts = vec![0usize; n_bins];
    for &v in samples {
        counts[bin_of(v)] += 1;
    }
    let max = *counts.iter().max().expect("n_bins >= 2") as f64;
    let cut = xi * max;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut removed = 0;
    for &v in samples {
        if counts[bin_of(v)] as f64 >= cut {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    for &v in samples {
        if v < lo || v > hi {
            removed += 1;
        }
    }
    Ok((Interval::new(lo, hi)?, removed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protected {
    pub lower: f64,
    pub upper: f64,
    /// The plain shift did not yield a valid interval around the nominal and a
    /// reduced shift (or a plain stretch to the nominal) was used.
    pub adjusted: bool,
}

/// Moves an interval that lost the nominal value back over it.
///
/// With `lower > x_hat` the shift is `0.1·(x_hat + upper)/2` and the result is
/// `(x_hat - shift, upper - shift)`; otherwise the shift is
/// `0.1·(x_hat + lower)/2` and the result `(lower + shift, x_hat + shift)`.
/// When that would invert the interval or miss `x_hat` (narrow intervals,
/// opposite signs) the shift is halved up to 30 times, after which the
/// interval is simply stretched to reach `x_hat`.
pub fn protect_criteria(lower: f64, upper: f64, x_hat: f64) -> Protected {
    let above = lower > x_hat;
    let full = if above {
        0.1 * (x_hat + upper) / 2.0
    } else {
        0.1 * (x_hat + lower) / 2.0
    };
    let apply = |s: f64| {
        if above {
            (x_hat - s, upper - s)
        } else {
            (lower + s, x_hat + s)
        }
    };
    let valid = |(lo, hi): (f64, f64)| lo <= x_hat && x_hat <= hi && lo <= hi;

    let mut s = full;
    for attempt in 0..=30 {
        let cand = apply(s);
        if valid(cand) {
            return Protected { lower: cand.0, upper: cand.1, adjusted: attempt > 0 };
        }
        s *= 0.5;
    }
    Protected {
        lower: lower.min(x_hat),
        upper: upper.max(x_hat),
        adjusted: true,
    }
}

/// Stall response. `tau` is the 1-based index into the bin-count list.
///
/// Moves to the next (finer) grid; once every grid was tried, returns to the
/// first and keeps `round(N·(ψ/N)^1.1)` samples, never fewer than
/// [`MIN_KEPT`] (or `ψ` itself if already smaller).
pub fn change_parameters(psi: usize, tau: usize, n_bins_len: usize, n: usize) -> (usize, usize) {
    if tau < n_bins_len {
        return (tau + 1, psi);
    }
    let frac = psi as f64 / n as f64;
    let next = (n as f64 * frac.powf(1.1)).round() as usize;
    (1, next.max(MIN_KEPT.min(psi)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    Converged,
    Imax,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    /// Box that was sampled in this iteration.
    pub bx: Vec<Interval>,
    pub fraction_below: f64,
    /// Kept samples of the accepted cut (or of the last attempt when stalled).
    pub psi: usize,
    /// Bin count of the accepted cut.
    pub n_bins: usize,
    pub attempts: usize,
    pub protected: Vec<String>,
    /// Shifts that needed the reduced-shift fallback.
    pub protect_adjusted: Vec<String>,
    /// No parameterisation changed the box.
    pub stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkTrace {
    pub records: Vec<IterationRecord>,
    pub eval_count: u64,
    pub termination: Termination,
    pub threshold: f64,
}

impl ShrinkTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Runs the shrink loop from `promissory` around `x_hat`.
///
/// `objective` must measure dissimilarity against the trajectory of `x_hat`.
/// Iteration `c` (0-based) samples with seed `cfg.seed + c`.
pub fn csb_estimate(
    objective: &Objective,
    x_hat: &FactorVector,
    promissory: &Orthotope,
    cfg: &ShrinkConfig,
) -> Result<(Orthotope, ShrinkTrace)> {
    cfg.validate()?;
    let k = promissory.dim();
    if x_hat.len() != k || objective.num_factors() != k {
        return Err(CsbError::DimensionMismatch { expected: k, got: x_hat.len() });
    }
    if !promissory.contains(x_hat)? {
        return Err(CsbError::InvalidArgument(
            "nominal point lies outside the promissory box".into(),
        ));
    }

    let thr = objective.threshold(cfg.lambda)?.threshold_value;
    let n = cfg.n;
    let eta_kept = (cfg.eta * n as f64).round() as usize;
    let bins = bin_count_candidates(n)?;
    let mut theta = promissory.clone();
    let mut records = Vec::new();
    let mut evals = 0u64;

    for c in 0..cfg.imax {
        let seed = cfg.seed.wrapping_add(c as u64);
        let mc = monte_carlo(objective, &theta, n, seed)?;
        evals += mc.eval_count;
        let eps = mc.count_below(thr);
        let fraction = eps as f64 / n as f64;
        let mut rec = IterationRecord {
            iteration: c + 1,
            seed,
            bx: theta.intervals().to_vec(),
            fraction_below: fraction,
            psi: 0,
            n_bins: 0,
            attempts: 0,
            protected: Vec::new(),
            protect_adjusted: Vec::new(),
            stalled: false,
        };
        if fraction >= cfg.delta {
            records.push(rec);
            return Ok((
                theta,
                ShrinkTrace { records, eval_count: evals, termination: Termination::Converged, threshold: thr },
            ));
        }

        let columns: Vec<Vec<f64>> = (0..k).map(|j| mc.matrix.column(j)).collect();
        let mut psi = eps.max(eta_kept).min(n);
        let mut tau = 1;
        loop {
            rec.attempts += 1;
            let nb = bins[tau - 1];
            let mut protected = Vec::new();
            let mut adjusted = Vec::new();
            let mut phi = Vec::with_capacity(k);
            let mut any_cut = false;
            for (j, col) in columns.iter().enumerate() {
                let (mut iv, outside) = histogram_cut(&col[..psi], nb, cfg.xi, theta.interval(j))?;
                any_cut |= outside > 0;
                let xi_hat = x_hat.values()[j];
                if iv.lower > xi_hat || iv.upper < xi_hat {
                    let p = protect_criteria(iv.lower, iv.upper, xi_hat);
                    iv = Interval::new(p.lower, p.upper)?;
                    protected.push(theta.names()[j].clone());
                    if p.adjusted {
                        adjusted.push(theta.names()[j].clone());
                    }
                }
                phi.push(iv);
            }
            rec.psi = psi;
            rec.n_bins = nb;
            rec.protected = protected;
            rec.protect_adjusted = adjusted;
            // tightening to the sample range alone is not a cut
            if any_cut && phi.as_slice() != theta.intervals() {
                theta = theta.with_intervals(phi)?;
                break;
            }
            let (t2, p2) = change_parameters(psi, tau, bins.len(), n);
            if t2 == 1 && p2 == psi {
                rec.stalled = true;
                break;
            }
            tau = t2;
            psi = p2;
        }
        records.push(rec);
    }

    Ok((
        theta,
        ShrinkTrace { records, eval_count: evals, termination: Termination::Imax, threshold: thr },
    ))
}
