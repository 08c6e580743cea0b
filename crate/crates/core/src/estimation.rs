//! Multi-start factor estimation against data and the median confidence
//! interval over the near-optimal fits.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FactorVector, Interval, Orthotope};
use crate::error::{CsbError, Result};
use crate::loss::Objective;
use crate::report::fmt_f64;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_starts: usize,
    /// Function tolerance of the local minimiser.
    pub tol: f64,
    /// Objective evaluations allowed per start.
    pub max_evals: usize,
    /// Fits within `(1 + filter) · min` are kept for the median CI.
    pub filter: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_starts: 100,
            tol: 1e-6,
            max_evals: 1000,
            filter: 0.10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub start_index: usize,
    pub x_star: FactorVector,
    pub final_loss: f64,
    pub start_point: FactorVector,
    pub converged: bool,
    pub eval_count: usize,
}

/// Bounded Nelder–Mead on the unit cube with dimension-adaptive coefficients.
/// Restarts once from the best vertex after the simplex collapses.
struct NelderMead<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
    dim: usize,
    tol: f64,
    max_evals: usize,
    evals: usize,
}

impl<F: Fn(&[f64]) -> f64> NelderMead<'_, F> {
    /// Past the budget every point reads as `+inf`, so the simplex never moves
    /// onto an unevaluated vertex.
    fn call(&mut self, u: &[f64]) -> f64 {
        if self.evals >= self.max_evals {
            return f64::INFINITY;
        }
        self.evals += 1;
        let v = (self.f)(u);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn clamp(u: &mut [f64]) {
        for v in u {
            *v = v.clamp(0.0, 1.0);
        }
    }

    fn simplex(&mut self, start: &[f64], step: f64) -> Vec<(Vec<f64>, f64)> {
        let mut s = Vec::with_capacity(self.dim + 1);
        let f0 = self.call(start);
        s.push((start.to_vec(), f0));
        for i in 0..self.dim {
            let mut p = start.to_vec();
            p[i] = if p[i] + step <= 1.0 { p[i] + step } else { p[i] - step };
            let fp = self.call(&p);
            s.push((p, fp));
        }
        s
    }

    /// Returns `(best point, best value, converged)`.
    fn run(&mut self, start: &[f64]) -> (Vec<f64>, f64, bool) {
        let n = self.dim as f64;
        let (alpha, beta, gamma, delta) =
            (1.0, 1.0 + 2.0 / n, 0.75 - 0.5 / n, 1.0 - 1.0 / n);

        let mut s = self.simplex(start, 0.05);
        let mut restarted = false;
        let mut last_restart_best = f64::INFINITY;
        loop {
            s.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = s[0].1;
            let worst = s[self.dim].1;
            let spread = worst - best;
            let diameter = s[1..]
                .iter()
                .flat_map(|(p, _)| p.iter().zip(&s[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            let collapsed = spread.is_finite()
                && spread <= self.tol * best.abs().max(1.0)
                && diameter <= self.tol;
            if collapsed {
                if restarted && last_restart_best - best <= self.tol * best.abs().max(1.0) {
                    return (s[0].0.clone(), best, true);
                }
                if self.evals + self.dim + 1 > self.max_evals {
                    return (s[0].0.clone(), best, true);
                }
                restarted = true;
                last_restart_best = best;
                let x0 = s[0].0.clone();
                s = self.simplex(&x0, 0.05);
                continue;
            }
            if self.evals >= self.max_evals {
                return (s[0].0.clone(), best, false);
            }

            let mut centroid = vec![0.0; self.dim];
            for (p, _) in &s[..self.dim] {
                for (c, v) in centroid.iter_mut().zip(p) {
                    *c += v / n;
                }
            }
            let along = |t: f64, worst: &[f64]| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(worst)
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                Self::clamp(&mut p);
                p
            };
            let worst_p = s[self.dim].0.clone();
            let xr = along(alpha, &worst_p);
            let fr = self.call(&xr);
            if fr < s[0].1 {
                let xe = along(alpha * beta, &worst_p);
                let fe = self.call(&xe);
                s[self.dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < s[self.dim - 1].1 {
                s[self.dim] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < s[self.dim].1 {
                let xc = along(alpha * gamma, &worst_p);
                let fc = self.call(&xc);
                (xc, fc)
            } else {
                let xc = along(-gamma, &worst_p);
                let fc = self.call(&xc);
                (xc, fc)
            };
            if fc < s[self.dim].1.min(fr) {
                s[self.dim] = (xc, fc);
                continue;
            }
            let x0 = s[0].0.clone();
            for v in s.iter_mut().skip(1) {
                for (a, b) in v.0.iter_mut().zip(&x0) {
                    *a = b + delta * (*a - b);
                }
                v.1 = self.call(&v.0.clone());
            }
        }
    }
}

fn to_unit(bx: &Orthotope, x: &[f64]) -> Vec<f64> {
    bx.intervals()
        .iter()
        .zip(x)
        .map(|(iv, v)| if iv.width() > 0.0 { (v - iv.lower) / iv.width() } else { 0.5 })
        .collect()
}

fn from_unit(bx: &Orthotope, u: &[f64]) -> Vec<f64> {
    bx.intervals()
        .iter()
        .zip(u)
        .map(|(iv, t)| iv.lower + t * iv.width())
        .collect()
}

/// Minimises `objective` inside `bx` from one start point.
pub fn local_fit(
    objective: &Objective,
    bx: &Orthotope,
    start: &FactorVector,
    tol: f64,
    max_evals: usize,
) -> (FactorVector, f64, bool, usize) {
    let f = |u: &[f64]| objective.eval_slice(&from_unit(bx, u));
    let mut nm = NelderMead { f: &f, dim: bx.dim(), tol, max_evals, evals: 0 };
    let (u, fx, converged) = nm.run(&to_unit(bx, start.values()));
    (FactorVector(from_unit(bx, &u)), fx, converged, nm.evals)
}

/// Start points drawn uniformly from `bx`, one per start, in start order.
pub fn draw_starts(bx: &Orthotope, n_starts: usize, seed: u64) -> Vec<FactorVector> {
    let mut rng = rng_from_seed(seed);
    (0..n_starts)
        .map(|_| {
            FactorVector(
                bx.intervals()
                    .iter()
                    .map(|iv| iv.lower + iv.width() * rng.random::<f64>())
                    .collect(),
            )
        })
        .collect()
}

/// Independent bounded local fits from random starts. `objective` must compare
/// against data. Results are ordered by start index.
pub fn multi_start_fit(objective: &Objective, bx: &Orthotope, cfg: &FitConfig) -> Result<Vec<FitResult>> {
    if cfg.n_starts == 0 {
        return Err(CsbError::InvalidArgument("fit.n_starts must be >= 1".into()));
    }
    if bx.dim() != objective.num_factors() {
        return Err(CsbError::DimensionMismatch {
            expected: objective.num_factors(),
            got: bx.dim(),
        });
    }
    let starts = draw_starts(bx, cfg.n_starts, cfg.seed);
    let results: Vec<FitResult> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, start)| {
            let (x_star, final_loss, converged, eval_count) =
                local_fit(objective, bx, &start, cfg.tol, cfg.max_evals);
            FitResult { start_index: i, x_star, final_loss, start_point: start, converged, eval_count }
        })
        .collect();
    if results.iter().all(|r| !r.final_loss.is_finite()) {
        return Err(CsbError::AllStartsFailed);
    }
    Ok(results)
}

/// Keeps fits whose loss is within `(1 + tolerance_fraction)` of the best.
pub fn filter_fits(results: &[FitResult], tolerance_fraction: f64) -> Vec<FitResult> {
    let min = results
        .iter()
        .map(|r| r.final_loss)
        .filter(|l| l.is_finite())
        .fold(f64::INFINITY, f64::min);
    let cutoff = (1.0 + tolerance_fraction) * min;
    results
        .iter()
        .filter(|r| r.final_loss <= cutoff)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianCi {
    pub names: Vec<String>,
    pub intervals: Vec<Interval>,
    pub n_filtered: usize,
    pub sigma: Vec<f64>,
}

impl MedianCi {
    pub fn write_csv<W: Write>(&self, nominal: &FactorVector, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["factor", "median", "lower", "upper", "sigma", "n"])?;
        for (i, name) in self.names.iter().enumerate() {
            wr.write_record([
                name.clone(),
                fmt_f64(nominal.values()[i]),
                fmt_f64(self.intervals[i].lower),
                fmt_f64(self.intervals[i].upper),
                fmt_f64(self.sigma[i]),
                self.n_filtered.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `median ± 1.96·sqrt(pi/2)·sigma/sqrt(n)` per factor over the rows of `values`.
pub fn median_ci_from_values(names: Vec<String>, values: &[Vec<f64>]) -> Result<(FactorVector, MedianCi)> {
    let n = values.len();
    if n < 2 {
        return Err(CsbError::InvalidArgument(format!(
            "median CI needs at least two fits, got {n}"
        )));
    }
    let k = names.len();
    let mut medians = Vec::with_capacity(k);
    let mut sigma = Vec::with_capacity(k);
    let mut intervals = Vec::with_capacity(k);
    let z = 1.96 * (std::f64::consts::PI / 2.0).sqrt();
    for j in 0..k {
        let col: Vec<f64> = values.iter().map(|r| r[j]).collect();
        let m = median(&col);
        let s = sample_std(&col);
        let half = z * s / (n as f64).sqrt();
        medians.push(m);
        sigma.push(s);
        intervals.push(Interval::new(m - half, m + half)?);
    }
    Ok((
        FactorVector(medians),
        MedianCi { names, intervals, n_filtered: n, sigma },
    ))
}

pub fn median_ci(names: Vec<String>, filtered: &[FitResult]) -> Result<(FactorVector, MedianCi)> {
    let values: Vec<Vec<f64>> = filtered.iter().map(|r| r.x_star.0.clone()).collect();
    median_ci_from_values(names, &values)
}

/// One row per start: start point, minimiser, loss, evaluations, converged.
pub fn write_fits_csv<W: Write>(names: &[String], fits: &[FitResult], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["start".to_string()];
    header.extend(names.iter().map(|n| format!("start_{n}")));
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend(["loss", "evals", "converged"].map(String::from));
    wr.write_record(&header)?;
    for r in fits {
        let mut rec = vec![r.start_index.to_string()];
        rec.extend(r.start_point.values().iter().map(|&v| fmt_f64(v)));
        rec.extend(r.x_star.values().iter().map(|&v| fmt_f64(v)));
        rec.push(fmt_f64(r.final_loss));
        rec.push(r.eval_count.to_string());
        rec.push(r.converged.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
