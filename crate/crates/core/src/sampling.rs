//! Latin-hypercube designs, Monte-Carlo evaluation with sorted outputs and
//! uncertainty-analysis summaries.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{FactorVector, Orthotope};
use crate::error::{CsbError, Result};
use crate::loss::{Objective, ThresholdSpec};
use crate::report::fmt_f64;
use crate::rng::rng_from_seed;

/// `N × k` sample matrix, row-major, one column per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    n: usize,
    k: usize,
    data: Vec<f64>,
    seed: u64,
}

impl DesignMatrix {
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let k = names.len();
        if rows.is_empty() {
            return Err(CsbError::InvalidArgument("design needs at least one row".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * k);
        for r in rows {
            if r.len() != k {
                return Err(CsbError::DimensionMismatch { expected: k, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { names, n: rows.len(), k, data, seed })
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.k + j] = v;
    }

    /// Rows reordered so that new row `r` is old row `order[r]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        Self { data, ..self.clone() }
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    pub fn write_csv<W: Write>(&self, w: W, outputs: Option<&[f64]>) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if outputs.is_some() {
            header.push("dissimilarity");
        }
        wr.write_record(&header)?;
        for (i, row) in self.iter_rows().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            if let Some(out) = outputs {
                rec.push(fmt_f64(out[i]));
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Latin-hypercube plan `S = (P - R) / N` mapped onto `bx` by the uniform
/// inverse CDF. `R` is drawn strictly inside `(0, 1)`.
pub fn latin_hypercube(bx: &Orthotope, n: usize, seed: u64) -> Result<DesignMatrix> {
    if n == 0 {
        return Err(CsbError::InvalidArgument("sample size must be >= 1".into()));
    }
    let k = bx.dim();
    let mut rng = rng_from_seed(seed);
    let mut data = vec![0.0; n * k];
    let mut perm: Vec<usize> = (1..=n).collect();
    for (j, iv) in bx.intervals().iter().enumerate() {
        perm.shuffle(&mut rng);
        let width = iv.width();
        for (i, &p) in perm.iter().enumerate() {
            let r = loop {
                let r: f64 = rng.random();
                if r > 0.0 {
                    break r;
                }
            };
            let s = (p as f64 - r) / n as f64;
            data[i * k + j] = if width == 0.0 {
                iv.lower
            } else {
                iv.lower + s * width
            };
        }
    }
    Ok(DesignMatrix {
        names: bx.names().to_vec(),
        n,
        k,
        data,
        seed,
    })
}

/// Evaluates `objective` on every row in parallel; results follow row order.
pub fn evaluate_rows(objective: &Objective, design: &DesignMatrix) -> Vec<f64> {
    (0..design.rows())
        .into_par_iter()
        .map(|i| objective.eval(&FactorVector(design.row(i).to_vec())))
        .collect()
}

/// Outputs sorted ascending with the design rows permuted to match.
#[derive(Debug, Clone)]
pub struct McResult {
    pub outputs: Vec<f64>,
    pub matrix: DesignMatrix,
    pub eval_count: u64,
}

impl McResult {
    /// Sorts `(design, outputs)` pairs by output; ties keep row order.
    pub fn from_unsorted(design: DesignMatrix, outputs: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..outputs.len()).collect();
        order.sort_by(|&a, &b| outputs[a].total_cmp(&outputs[b]));
        let sorted: Vec<f64> = order.iter().map(|&i| outputs[i]).collect();
        Self {
            eval_count: outputs.len() as u64,
            matrix: design.permuted(&order),
            outputs: sorted,
        }
    }

    pub fn count_below(&self, threshold: f64) -> usize {
        // outputs are sorted, so this is a partition point
        self.outputs.partition_point(|&y| y <= threshold)
    }

    pub fn fraction_below(&self, threshold: f64) -> f64 {
        self.count_below(threshold) as f64 / self.outputs.len() as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        self.matrix.write_csv(w, Some(&self.outputs))
    }
}

/// LHS design on `bx`, dissimilarity per row, sorted ascending.
pub fn monte_carlo(objective: &Objective, bx: &Orthotope, n: usize, seed: u64) -> Result<McResult> {
    if bx.dim() != objective.num_factors() {
        return Err(CsbError::DimensionMismatch {
            expected: objective.num_factors(),
            got: bx.dim(),
        });
    }
    let design = latin_hypercube(bx, n, seed)?;
    let outputs = evaluate_rows(objective, &design);
    Ok(McResult::from_unsorted(design, outputs))
}

/// Per-time-point summary of the simulated trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopePoint {
    pub time: f64,
    pub nominal: f64,
    pub min: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UaSummary {
    pub threshold: f64,
    pub n: usize,
    pub fraction_below: f64,
    /// Row indices (in the sorted design) whose dissimilarity exceeds the threshold.
    pub exceeding: Vec<usize>,
    pub failed: usize,
    pub envelope: Vec<EnvelopePoint>,
}

impl UaSummary {
    pub fn write_envelope_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["time", "nominal", "min", "q05", "q50", "q95", "max"])?;
        for p in &self.envelope {
            wr.write_record(
                [p.time, p.nominal, p.min, p.q05, p.q50, p.q95, p.max].map(fmt_f64),
            )?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Exceedance statistics plus a trajectory envelope. Trajectories are
/// recomputed from the design rows, so this costs `N` more evaluations.
pub fn uncertainty_analysis(
    objective: &Objective,
    mc: &McResult,
    thr: &ThresholdSpec,
) -> UaSummary {
    let n = mc.outputs.len();
    let below = mc.count_below(thr.threshold_value);
    let exceeding: Vec<usize> = (below..n).collect();

    let trajectories: Vec<Option<Vec<f64>>> = (0..mc.matrix.rows())
        .into_par_iter()
        .map(|i| {
            objective
                .trajectory(&FactorVector(mc.matrix.row(i).to_vec()))
                .ok()
                .map(|t| t.values().to_vec())
        })
        .collect();
    let ok: Vec<&Vec<f64>> = trajectories.iter().flatten().collect();
    let failed = n - ok.len();

    let grid = objective.grid();
    let nominal = objective.reference().values();
    let envelope = grid
        .points()
        .iter()
        .enumerate()
        .map(|(t, &time)| {
            let mut col: Vec<f64> = ok.iter().map(|v| v[t]).collect();
            col.sort_by(f64::total_cmp);
            EnvelopePoint {
                time,
                nominal: nominal[t],
                min: col.first().copied().unwrap_or(f64::NAN),
                q05: quantile_sorted(&col, 0.05),
                q50: quantile_sorted(&col, 0.50),
                q95: quantile_sorted(&col, 0.95),
                max: col.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect();

    UaSummary {
        threshold: thr.threshold_value,
        n,
        fraction_below: below as f64 / n as f64,
        exceeding,
        failed,
        envelope,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeGrid;
    use crate::loss::{EvalCounter, LossConfig};
    use crate::models::identity_model;
    use std::sync::Arc;

    fn identity_objective() -> Objective {
        Objective::against_nominal(
            Arc::new(identity_model()),
            &vec![1.0].into(),
            &TimeGrid::uniform(0.0, 1.0, 3).unwrap(),
            Default::default(),
            LossConfig::default(),
            EvalCounter::new(),
        )
        .unwrap()
    }

    fn stratum_counts(col: &[f64], lo: f64, hi: f64, r: usize) -> Vec<usize> {
        let mut c = vec![0; r];
        for &v in col {
            let idx = (((v - lo) / (hi - lo)) * r as f64).floor() as usize;
            c[idx.min(r - 1)] += 1;
        }
        c
    }

    #[test]
    fn single_sample_is_inside_unit_interval() {
        let bx = Orthotope::from_bounds(&[(0.0, 1.0)]).unwrap();
        let d = latin_hypercube(&bx, 1, 3).unwrap();
        let v = d.get(0, 0);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn deciles_hold_one_sample_each() {
        let bx = Orthotope::from_bounds(&[(0.0, 1.0)]).unwrap();
        let d = latin_hypercube(&bx, 10, 11).unwrap();
        assert_eq!(stratum_counts(&d.column(0), 0.0, 1.0, 10), vec![1; 10]);
    }

    #[test]
    fn degenerate_interval_gives_constant_column() {
        let bx = Orthotope::from_bounds(&[(5.0, 5.0)]).unwrap();
        let d = latin_hypercube(&bx, 10, 0).unwrap();
        assert_eq!(d.column(0), vec![5.0; 10]);
    }

    #[test]
    fn seed_determinism() {
        let bx = Orthotope::from_bounds(&[(0.0, 1.0), (-3.0, 7.0)]).unwrap();
        assert_eq!(latin_hypercube(&bx, 50, 9).unwrap(), latin_hypercube(&bx, 50, 9).unwrap());
        assert_ne!(latin_hypercube(&bx, 50, 9).unwrap(), latin_hypercube(&bx, 50, 10).unwrap());
    }

    #[test]
    fn degenerate_box_gives_zero_outputs() {
        let obj = identity_objective();
        let bx = Orthotope::from_bounds(&[(1.0, 1.0)]).unwrap();
        let mc = monte_carlo(&obj, &bx, 5, 1).unwrap();
        assert_eq!(mc.outputs, vec![0.0; 5]);
    }

    #[test]
    fn stratification_puts_a_sample_near_nominal() {
        let obj = identity_objective();
        let bx = Orthotope::from_bounds(&[(0.0, 2.0)]).unwrap();
        for seed in 0..20 {
            let mc = monte_carlo(&obj, &bx, 100, seed).unwrap();
            assert!(mc.outputs[0] < 0.01, "seed {seed}: {}", mc.outputs[0]);
        }
    }

    #[test]
    fn sorted_rows_reproduce_outputs() {
        let obj = identity_objective();
        let bx = Orthotope::from_bounds(&[(0.0, 3.0)]).unwrap();
        let design = latin_hypercube(&bx, 40, 5).unwrap();
        let raw = evaluate_rows(&obj, &design);
        let mc = McResult::from_unsorted(design, raw.clone());
        assert!(mc.outputs.windows(2).all(|w| w[0] <= w[1]));
        for (j, &y) in mc.outputs.iter().enumerate() {
            assert_eq!(obj.eval_slice(mc.matrix.row(j)), y);
        }
        let mut a = raw;
        a.sort_by(f64::total_cmp);
        assert_eq!(a, mc.outputs);
    }

    #[test]
    fn ties_keep_original_order() {
        let names = vec!["a".to_string()];
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64]).collect();
        let d = DesignMatrix::from_rows(names, &rows, 0).unwrap();
        let mc = McResult::from_unsorted(d, vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(mc.matrix.column(0), vec![1.0, 3.0, 0.0, 2.0]);
    }

    #[test]
    fn fraction_examples() {
        let names = vec!["a".to_string()];
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let d = DesignMatrix::from_rows(names, &rows, 0).unwrap();
        let mc = McResult::from_unsorted(d, vec![0.3, 0.1, 0.2]);
        assert!((mc.fraction_below(0.15) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mc.fraction_below(1.0), 1.0);
    }

    #[test]
    fn ua_on_small_box_is_all_below() {
        let obj = identity_objective();
        let thr = obj.threshold(1.3).unwrap();
        let bx = Orthotope::from_bounds(&[(0.9, 1.1)]).unwrap();
        let mc = monte_carlo(&obj, &bx, 50, 2).unwrap();
        let ua = uncertainty_analysis(&obj, &mc, &thr);
        assert_eq!(ua.fraction_below, 1.0);
        assert!(ua.exceeding.is_empty());
        assert_eq!(ua.envelope.len(), 3);
        assert!(ua.envelope.iter().all(|p| p.min >= 0.9 && p.max <= 1.1));
    }

    #[test]
    fn quantiles() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.0);
        assert_eq!(quantile_sorted(&v, 0.0), 0.0);
        assert_eq!(quantile_sorted(&v, 0.875), 3.5);
    }

    #[test]
    fn csv_has_dissimilarity_column() {
        let obj = identity_objective();
        let bx = Orthotope::from_bounds(&[(0.0, 2.0)]).unwrap();
        let mc = monte_carlo(&obj, &bx, 3, 1).unwrap();
        let mut buf = Vec::new();
        mc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x1,dissimilarity\n"));
        assert_eq!(text.lines().count(), 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn stratified_for_every_divisor(n in 1usize..200, seed in any::<u64>(), lo in -50.0f64..50.0, w in 0.1f64..100.0) {
                let bx = Orthotope::from_bounds(&[(lo, lo + w), (0.0, 1.0)]).unwrap();
                let d = latin_hypercube(&bx, n, seed).unwrap();
                for r in (1..=n).filter(|r| n % r == 0) {
                    for j in 0..2 {
                        let iv = bx.interval(j);
                        let c = stratum_counts(&d.column(j), iv.lower, iv.upper, r);
                        prop_assert!(c.iter().all(|&x| x == n / r));
                    }
                }
            }
        }
    }
}
