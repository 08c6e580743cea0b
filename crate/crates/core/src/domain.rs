//! Value types shared across the pipeline: factor intervals, search boxes,
//! factor vectors, time grids and sampled trajectories.
//!
//! Factor order is the configuration declaration order and is used as the
//! column index everywhere (design matrices, diagnostics, CSV tables).

use serde::{Deserialize, Serialize};

use crate::error::{CsbError, Result};

/// Closed interval `[lower, upper]` of one factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower > upper {
            return Err(CsbError::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Maps `target` into the unit coordinates of `reference`.
///
/// The reference maps to `[0, 1]`; values outside it fall outside `[0, 1]`.
pub fn normalize_interval(target: Interval, reference: Interval) -> Result<Interval> {
    let width = reference.width();
    if width <= 0.0 {
        return Err(CsbError::ZeroWidthReference);
    }
    Ok(Interval {
        lower: (target.lower - reference.lower) / width,
        upper: (target.upper - reference.lower) / width,
    })
}

/// A k-dimensional box: the search box, the promissory box or a CSB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orthotope {
    names: Vec<String>,
    intervals: Vec<Interval>,
}

impl Orthotope {
    pub fn new(names: Vec<String>, intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() || names.len() != intervals.len() {
            return Err(CsbError::DimensionMismatch {
                expected: names.len().max(1),
                got: intervals.len(),
            });
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(CsbError::DuplicateFactor(name.clone()));
            }
        }
        for iv in &intervals {
            Interval::new(iv.lower, iv.upper)?;
        }
        Ok(Self { names, intervals })
    }

    /// Builds a box from `(lower, upper)` pairs with generated names `x1..xk`.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let names = (1..=bounds.len()).map(|i| format!("x{i}")).collect();
        let intervals = bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(names, intervals)
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn interval(&self, i: usize) -> Interval {
        self.intervals[i]
    }

    pub fn midpoint(&self) -> FactorVector {
        FactorVector(self.intervals.iter().map(Interval::midpoint).collect())
    }

    /// Same names, new intervals.
    pub fn with_intervals(&self, intervals: Vec<Interval>) -> Result<Self> {
        Self::new(self.names.clone(), intervals)
    }

    pub fn contains(&self, x: &FactorVector) -> Result<bool> {
        contains(self, x)
    }
}

/// True iff every coordinate of `x` lies in the matching closed interval.
pub fn contains(bx: &Orthotope, x: &FactorVector) -> Result<bool> {
    if bx.dim() != x.len() {
        return Err(CsbError::DimensionMismatch {
            expected: bx.dim(),
            got: x.len(),
        });
    }
    Ok(bx
        .intervals
        .iter()
        .zip(x.values())
        .all(|(iv, &v)| iv.contains(v)))
}

/// One value per factor, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorVector(pub Vec<f64>);

impl FactorVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CsbError::NonFinite("factor vector"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with factor `i` replaced by `value`.
    pub fn with(&self, i: usize, value: f64) -> Self {
        let mut v = self.0.clone();
        v[i] = value;
        Self(v)
    }
}

impl From<Vec<f64>> for FactorVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Strictly increasing sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2
            || points.iter().any(|t| !t.is_finite())
            || points.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(CsbError::InvalidGrid);
        }
        Ok(Self { points })
    }

    /// `count` points `start, start+step, ...`.
    pub fn uniform(start: f64, step: f64, count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }
}

/// Observable values sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CsbError::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CsbError::NonFinite("trajectory"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise `factor * y`, used for the uncertainty threshold.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}
