//! First- and total-order variance-based indices with paired designs, and
//! convergence series over increasing sample sizes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::domain::{Interval, Orthotope};
use crate::error::{CsbError, Result};
use crate::loss::Objective;
use crate::report::fmt_f64;
use crate::rng::stream_seed;
use crate::sampling::{evaluate_rows, latin_hypercube, DesignMatrix};

pub const MIN_SAMPLE: usize = 16;

/// The `A`, `B` and `A_B^(i)` matrices of one estimate.
#[derive(Debug, Clone)]
pub struct SaltelliDesign {
    pub a: DesignMatrix,
    pub b: DesignMatrix,
    pub ab: Vec<DesignMatrix>,
}

impl SaltelliDesign {
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn k(&self) -> usize {
        self.a.cols()
    }

    pub fn total_rows(&self) -> usize {
        self.n() * (self.k() + 2)
    }
}

/// `A_B^(i)`: `a` with column `i` taken from `b`.
pub fn swap_column(a: &DesignMatrix, b: &DesignMatrix, i: usize) -> DesignMatrix {
    let mut m = a.clone();
    for r in 0..a.rows() {
        m.set(r, i, b.get(r, i));
    }
    m
}

/// `A` and `B` are the two halves of a single `2k`-column hypercube over `bx`.
pub fn saltelli_design(bx: &Orthotope, n: usize, seed: u64) -> Result<SaltelliDesign> {
    if n < MIN_SAMPLE {
        return Err(CsbError::InvalidArgument(format!(
            "sensitivity sample size must be >= {MIN_SAMPLE}, got {n}"
        )));
    }
    let k = bx.dim();
    let mut names: Vec<String> = bx.names().iter().map(|s| format!("{s}_a")).collect();
    names.extend(bx.names().iter().map(|s| format!("{s}_b")));
    let mut intervals = bx.intervals().to_vec();
    intervals.extend_from_slice(bx.intervals());
    let doubled = Orthotope::new(names, intervals)?;
    let joint = latin_hypercube(&doubled, n, seed)?;

    let half = |offset: usize| -> Result<DesignMatrix> {
        let rows: Vec<Vec<f64>> = joint.iter_rows().map(|r| r[offset..offset + k].to_vec()).collect();
        DesignMatrix::from_rows(bx.names().to_vec(), &rows, seed)
    };
    let a = half(0)?;
    let b = half(k)?;
    let ab = (0..k).map(|i| swap_column(&a, &b, i)).collect();
    Ok(SaltelliDesign { a, b, ab })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStatus {
    Ok,
    /// Output variance is zero; indices are undefined and reported as NaN.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub names: Vec<String>,
    pub s_first: Vec<f64>,
    pub s_total: Vec<f64>,
    pub sample_size: usize,
    pub variance: f64,
    pub status: IndexStatus,
    pub box_intervals: Vec<Interval>,
    pub eval_count: u64,
}

impl SensitivityReport {
    pub fn sum_first(&self) -> f64 {
        self.s_first.iter().sum()
    }

    pub fn sum_abs_first(&self) -> f64 {
        self.s_first.iter().map(|s| s.abs()).sum()
    }

    pub fn sum_total(&self) -> f64 {
        self.s_total.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["factor", "S", "ST"])?;
        for (i, name) in self.names.iter().enumerate() {
            wr.write_record([name.clone(), fmt_f64(self.s_first[i]), fmt_f64(self.s_total[i])])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Indices from precomputed outputs. `f_ab[i]` holds the outputs of `A_B^(i)`.
pub fn sobol_indices(f_a: &[f64], f_b: &[f64], f_ab: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>, f64, IndexStatus)> {
    let n = f_a.len();
    if f_b.len() != n || f_ab.iter().any(|c| c.len() != n) {
        return Err(CsbError::DimensionMismatch {
            expected: n,
            got: f_b.len(),
        });
    }
    if f_a.iter().chain(f_b).chain(f_ab.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(CsbError::NonFinite("sensitivity outputs"));
    }
    let pooled: Vec<f64> = f_a.iter().chain(f_b).copied().collect();
    let m = mean(&pooled);
    let var = pooled.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (pooled.len() as f64 - 1.0);
    let k = f_ab.len();
    let first = f_a.first().copied().unwrap_or(0.0);
    let constant = f_a.iter().chain(f_b).chain(f_ab.iter().flatten()).all(|&v| v == first);
    if constant || var == 0.0 {
        return Ok((vec![f64::NAN; k], vec![f64::NAN; k], var, IndexStatus::Degenerate));
    }
    let nf = n as f64;
    let mut s = Vec::with_capacity(k);
    let mut st = Vec::with_capacity(k);
    for col in f_ab {
        let first: f64 = (0..n).map(|j| f_b[j] * (col[j] - f_a[j])).sum::<f64>() / nf;
        let total: f64 = (0..n).map(|j| (f_a[j] - col[j]).powi(2)).sum::<f64>() / (2.0 * nf);
        s.push(first / var);
        st.push(total / var);
    }
    Ok((s, st, var, IndexStatus::Ok))
}

/// Indices of an arbitrary scalar function over `bx`.
pub fn sensitivity_of<F>(f: F, bx: &Orthotope, n: usize, seed: u64) -> Result<SensitivityReport>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    use rayon::prelude::*;
    let design = saltelli_design(bx, n, seed)?;
    let eval = |m: &DesignMatrix| -> Vec<f64> {
        (0..m.rows()).into_par_iter().map(|r| f(m.row(r))).collect()
    };
    let f_a = eval(&design.a);
    let f_b = eval(&design.b);
    let f_ab: Vec<Vec<f64>> = design.ab.iter().map(eval).collect();
    let (s_first, s_total, variance, status) = sobol_indices(&f_a, &f_b, &f_ab)?;
    Ok(SensitivityReport {
        names: bx.names().to_vec(),
        s_first,
        s_total,
        sample_size: n,
        variance,
        status,
        box_intervals: bx.intervals().to_vec(),
        eval_count: design.total_rows() as u64,
    })
}

/// Indices of the dissimilarity surface of `objective` over `bx`.
/// Fails when any evaluation fails to integrate.
pub fn sensitivity_analysis(objective: &Objective, bx: &Orthotope, n: usize, seed: u64) -> Result<SensitivityReport> {
    let design = saltelli_design(bx, n, seed)?;
    let f_a = evaluate_rows(objective, &design.a);
    let f_b = evaluate_rows(objective, &design.b);
    let f_ab: Vec<Vec<f64>> = design.ab.iter().map(|m| evaluate_rows(objective, m)).collect();
    let (s_first, s_total, variance, status) = sobol_indices(&f_a, &f_b, &f_ab)?;
    Ok(SensitivityReport {
        names: bx.names().to_vec(),
        s_first,
        s_total,
        sample_size: n,
        variance,
        status,
        box_intervals: bx.intervals().to_vec(),
        eval_count: design.total_rows() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub sample_size: usize,
    pub seed: u64,
    pub report: SensitivityReport,
    pub sum_s_first: f64,
    pub sum_abs_s_first: f64,
    pub sum_s_total: f64,
}

impl ConvergencePoint {
    /// `|ΣS − Σ|S|| / Σ|S|`, zero when every index is zero.
    pub fn sign_disagreement(&self) -> f64 {
        if self.sum_abs_s_first == 0.0 {
            0.0
        } else {
            (self.sum_s_first - self.sum_abs_s_first).abs() / self.sum_abs_s_first
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSeries {
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceSeries {
    /// Largest per-factor ST change between the two largest sizes.
    pub fn last_total_change(&self) -> Option<f64> {
        let [.., a, b] = self.points.as_slice() else {
            return None;
        };
        Some(
            a.report
                .s_total
                .iter()
                .zip(&b.report.s_total)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        let names = self.points.first().map(|p| p.report.names.clone()).unwrap_or_default();
        let mut header = vec!["size".to_string()];
        header.extend(names.iter().map(|n| format!("ST_{n}")));
        header.extend(["sum_ST", "sum_S", "sum_abs_S", "status"].map(String::from));
        wr.write_record(&header)?;
        for p in &self.points {
            let mut rec = vec![p.sample_size.to_string()];
            rec.extend(p.report.s_total.iter().map(|&v| fmt_f64(v)));
            rec.push(fmt_f64(p.sum_s_total));
            rec.push(fmt_f64(p.sum_s_first));
            rec.push(fmt_f64(p.sum_abs_s_first));
            rec.push(match p.report.status {
                IndexStatus::Ok => "ok".into(),
                IndexStatus::Degenerate => "degenerate".into(),
            });
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Seed used for sample size `n` in a convergence series.
pub fn convergence_seed(root: u64, n: usize) -> u64 {
    stream_seed(root, &format!("sa-n{n}"))
}

pub fn convergence_analysis(objective: &Objective, bx: &Orthotope, sizes: &[usize], seed: u64) -> Result<ConvergenceSeries> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CsbError::InvalidArgument("sizes must be strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let s = convergence_seed(seed, n);
        let report = sensitivity_analysis(objective, bx, n, s)?;
        points.push(ConvergencePoint {
            sample_size: n,
            seed: s,
            sum_s_first: report.sum_first(),
            sum_abs_s_first: report.sum_abs_first(),
            sum_s_total: report.sum_total(),
            report,
        });
    }
    Ok(ConvergenceSeries { points })
}
