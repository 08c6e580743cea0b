//! One-at-a-time construction of the promissory search box.
//!
//! For every factor the nominal value is pushed up and down along a geometric
//! ladder (all other factors held at nominal) until the dissimilarity leaves
//! the contour; the crossing is then refined by bisection so that the bound
//! sits in the band `(threshold, band · threshold]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{FactorVector, Interval, Orthotope};
use crate::error::{CsbError, Result};
use crate::loss::{Objective, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OatConfig {
    /// Uncertainty multiplier used for the threshold.
    pub lambda: f64,
    /// Ladder ratio of the upward search, in `(1, 2]`.
    pub up: f64,
    /// Ladder ratio of the downward search, in `(0, 1)`.
    pub down: f64,
    pub imax: usize,
    pub band: f64,
}

impl Default for OatConfig {
    fn default() -> Self {
        Self {
            lambda: 1.3,
            up: 1.5,
            down: 0.7,
            imax: 100,
            band: 1.1,
        }
    }
}

impl OatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CsbError::InvalidArgument(m.to_string()));
        if !(self.up > 1.0 && self.up <= 2.0) {
            return bad("oat.up must lie in (1, 2]");
        }
        if !(self.down > 0.0 && self.down < 1.0) {
            return bad("oat.down must lie in (0, 1)");
        }
        if self.imax < 1 {
            return bad("oat.imax must be >= 1");
        }
        if !(self.band > 1.0) {
            return bad("oat.band must be > 1");
        }
        if !(self.lambda > 0.0) {
            return bad("oat.lambda must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

/// Outcome of one directional search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSearch {
    pub direction: Direction,
    pub value: f64,
    /// Dissimilarity at `value`.
    pub phi: f64,
    /// True when `phi` landed in `(threshold, band · threshold]`.
    pub resolved: bool,
    /// Ladder rungs visited.
    pub rungs: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSearch {
    pub factor: String,
    pub nominal: f64,
    pub up: BoundSearch,
    pub down: BoundSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromissoryBox {
    pub bx: Orthotope,
    pub threshold: ThresholdSpec,
    pub diagnostics: Vec<FactorSearch>,
}

impl PromissoryBox {
    pub fn all_unresolved(&self) -> bool {
        self.diagnostics
            .iter()
            .all(|d| !d.up.resolved && !d.down.resolved)
    }
}

/// How a ladder coordinate maps to a factor value.
#[derive(Debug, Clone, Copy)]
enum Ladder {
    /// `value = coord · nominal`, coordinates `1, g, g², ...`.
    Scale { nominal: f64, ratio: f64 },
    /// `value = nominal + sign · coord`, coordinates `0, s, s·g, s·g², ...`.
    Offset { nominal: f64, sign: f64, step: f64, growth: f64 },
}

impl Ladder {
    fn origin(&self) -> f64 {
        match self {
            Ladder::Scale { .. } => 1.0,
            Ladder::Offset { .. } => 0.0,
        }
    }

    fn rung(&self, j: usize) -> f64 {
        match *self {
            Ladder::Scale { ratio, .. } => ratio.powi(j as i32),
            Ladder::Offset { step, growth, .. } => step * growth.powi(j as i32 - 1),
        }
    }

    fn value(&self, coord: f64) -> f64 {
        match *self {
            Ladder::Scale { nominal, .. } => coord * nominal,
            Ladder::Offset { nominal, sign, .. } => nominal + sign * coord,
        }
    }
}

struct Probe<'a> {
    objective: &'a Objective,
    x_hat: &'a FactorVector,
    factor: usize,
    threshold: f64,
    band: f64,
    evaluations: usize,
}

impl Probe<'_> {
    fn phi(&mut self, value: f64) -> f64 {
        self.evaluations += 1;
        self.objective.eval(&self.x_hat.with(self.factor, value))
    }

    fn in_band(&self, phi: f64) -> bool {
        phi > self.threshold && phi <= self.band * self.threshold
    }

    /// Halves `[a, b]` (ladder coordinates) until the band is hit or `imax`
    /// halvings are spent. Returns `(coord, phi, resolved)`.
    fn bisect(&mut self, ladder: &Ladder, mut a: f64, mut b: f64, imax: usize) -> (f64, f64, bool) {
        let mut mid = 0.5 * (a + b);
        let mut phi = f64::NAN;
        for _ in 0..imax {
            phi = self.phi(ladder.value(mid));
            if self.in_band(phi) {
                return (mid, phi, true);
            }
            if phi <= self.threshold {
                a = mid;
            } else {
                b = mid;
            }
            mid = 0.5 * (a + b);
        }
        (mid, phi, false)
    }

    fn search(&mut self, ladder: Ladder, direction: Direction, imax: usize) -> BoundSearch {
        let mut prev = ladder.origin();
        let mut last = prev;
        let mut last_phi = 0.0;
        for j in 1..=imax {
            let coord = ladder.rung(j);
            let phi = self.phi(ladder.value(coord));
            last = coord;
            last_phi = phi;
            if phi <= self.threshold {
                prev = coord;
                continue;
            }
            let (coord, phi, resolved) = if phi > self.band * self.threshold {
                self.bisect(&ladder, prev, coord, imax)
            } else {
                (coord, phi, true)
            };
            return BoundSearch {
                direction,
                value: ladder.value(coord),
                phi,
                resolved,
                rungs: j,
                evaluations: self.evaluations,
            };
        }
        BoundSearch {
            direction,
            value: ladder.value(last),
            phi: last_phi,
            resolved: false,
            rungs: imax,
            evaluations: self.evaluations,
        }
    }
}

fn search_factor(
    objective: &Objective,
    x_hat: &FactorVector,
    i: usize,
    name: &str,
    search_width: Option<f64>,
    threshold: f64,
    cfg: &OatConfig,
) -> Result<FactorSearch> {
    let nominal = x_hat.values()[i];
    let (up_ladder, down_ladder) = if nominal != 0.0 {
        (
            Ladder::Scale { nominal, ratio: cfg.up },
            Ladder::Scale { nominal, ratio: cfg.down },
        )
    } else {
        let w = search_width.filter(|w| *w > 0.0).ok_or_else(|| {
            CsbError::InvalidArgument(format!(
                "factor `{name}` has a zero nominal and no search interval width"
            ))
        })?;
        (
            Ladder::Offset { nominal, sign: 1.0, step: (cfg.up - 1.0) * w, growth: cfg.up },
            Ladder::Offset { nominal, sign: -1.0, step: (1.0 - cfg.down) * w, growth: cfg.up },
        )
    };

    let mut probe = Probe {
        objective,
        x_hat,
        factor: i,
        threshold,
        band: cfg.band,
        evaluations: 0,
    };
    let up = probe.search(up_ladder, Direction::Up, cfg.imax);
    probe.evaluations = 0;
    let down = probe.search(down_ladder, Direction::Down, cfg.imax);
    Ok(FactorSearch {
        factor: name.to_string(),
        nominal,
        up,
        down,
    })
}

/// Builds the promissory box around `x_hat`.
///
/// `objective` must measure dissimilarity against the trajectory of `x_hat`.
/// `search` supplies interval widths for factors whose nominal is zero.
pub fn promissory_box(
    objective: &Objective,
    x_hat: &FactorVector,
    search: Option<&Orthotope>,
    cfg: &OatConfig,
) -> Result<PromissoryBox> {
    cfg.validate()?;
    let k = objective.num_factors();
    if x_hat.len() != k {
        return Err(CsbError::DimensionMismatch { expected: k, got: x_hat.len() });
    }
    let thr = objective.threshold(cfg.lambda)?;
    let names: Vec<String> = match search {
        Some(bx) => bx.names().to_vec(),
        None => objective.model().factor_names().to_vec(),
    };

    let diagnostics = (0..k)
        .into_par_iter()
        .map(|i| {
            let width = search.map(|bx| bx.interval(i).width());
            search_factor(objective, x_hat, i, &names[i], width, thr.threshold_value, cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let intervals = diagnostics
        .iter()
        .map(|d| {
            // a negative nominal moves away from zero on the upward ladder
            let (a, b) = (d.up.value, d.down.value);
            let lo = a.min(b).min(d.nominal);
            let hi = a.max(b).max(d.nominal);
            Interval::new(lo, hi)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(PromissoryBox {
        bx: Orthotope::new(names, intervals)?,
        threshold: thr,
        diagnostics,
    })
}

/// Result of [`bisection`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOutcome {
    pub value: f64,
    pub phi: f64,
    pub resolved: bool,
    pub evaluations: usize,
}

/// Refines the crossing between ladder rungs `gamma^tau` and `gamma^(tau+1)`
/// for factor `factor`. The bracket must straddle the band.
#[allow(clippy::too_many_arguments)]
pub fn bisection(
    objective: &Objective,
    x_hat: &FactorVector,
    factor: usize,
    gamma: f64,
    tau: i32,
    threshold: f64,
    band: f64,
    imax: usize,
) -> Result<BisectionOutcome> {
    let ladder = Ladder::Scale { nominal: x_hat.values()[factor], ratio: gamma };
    let (a, b) = (gamma.powi(tau), gamma.powi(tau + 1));
    let mut probe = Probe {
        objective,
        x_hat,
        factor,
        threshold,
        band,
        evaluations: 0,
    };
    let phi_a = probe.phi(ladder.value(a));
    let phi_b = probe.phi(ladder.value(b));
    if !(phi_a <= threshold) || !(phi_b > band * threshold) {
        return Err(CsbError::InvalidBracket(format!(
            "phi({a}) = {phi_a}, phi({b}) = {phi_b}, threshold = {threshold}"
        )));
    }
    let (coord, phi, resolved) = probe.bisect(&ladder, a, b, imax);
    Ok(BisectionOutcome {
        value: ladder.value(coord),
        phi,
        resolved,
        evaluations: probe.evaluations,
    })
}
