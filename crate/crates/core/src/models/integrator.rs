//! Dormand–Prince 5(4) with proportional step-size control. Steps are
//! shortened to land on every grid point, so the output needs no interpolation.

use serde::{Deserialize, Serialize};

use super::Model;
use crate::domain::TimeGrid;
use crate::error::IntegrationError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-8,
            max_steps: 100_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

/// Full model state at each grid point, row-major (`grid.len() × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSeries {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl StateSeries {
    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_new: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
        }
    }
}

fn rms_norm(v: &[f64], y: &[f64], cfg: &IntegratorConfig) -> f64 {
    let n = v.len() as f64;
    (v.iter()
        .zip(y)
        .map(|(vi, yi)| {
            let sc = cfg.abs_tol + cfg.rel_tol * yi.abs();
            (vi / sc).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn initial_step(
    model: &dyn Model,
    factors: &[f64],
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    cfg: &IntegratorConfig,
) -> Result<f64, IntegrationError> {
    let d0 = rms_norm(y0, y0, cfg);
    let d1 = rms_norm(f0, y0, cfg);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    model.rhs(t0 + h0, &y1, factors, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_norm(&diff, y0, cfg) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates `model` from `grid.start()` and returns the full state at every grid point.
pub fn solve(
    model: &dyn Model,
    factors: &[f64],
    grid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<StateSeries, IntegrationError> {
    let n = model.state_dim();
    let mut y = model.initial_state(factors)?;
    if y.len() != n {
        return Err(IntegrationError::Domain(format!(
            "initial state has {} entries, model declares {n}",
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteState(grid.start()));
    }

    let times = grid.points();
    let mut out = Vec::with_capacity(times.len() * n);
    out.extend_from_slice(&y);
    let mut next = 1;

    let mut t = grid.start();
    let t_end = grid.end();
    let mut st = Stages::new(n);
    let mut f = vec![0.0; n];
    model.rhs(t, &y, factors, &mut f)?;
    let mut h = initial_step(model, factors, t, &y, &f, t_end - t, cfg)?;
    let mut steps = 0usize;

    while next < times.len() {
        if steps >= cfg.max_steps {
            return Err(IntegrationError::StepLimit(cfg.max_steps));
        }
        steps += 1;
        let target = times[next];
        let remaining = target - t;
        let proposed = h;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow(t));
        }

        let err = dp_step(model, factors, t, h, &y, &f, &mut st, cfg)?;

        if !err.is_finite() || err > 1.0 {
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).max(FAC_MIN)
            } else {
                FAC_MIN
            };
            h *= fac.min(1.0);
            continue;
        }

        let t_new = if last { target } else { t + h };
        // k[6] holds f(t_new, y_new) (first-same-as-last)
        if last {
            out.extend_from_slice(&st.y_new);
            next += 1;
        }

        y.copy_from_slice(&st.y_new);
        f.copy_from_slice(&st.k[6]);
        t = t_new;

        let fac = if err == 0.0 {
            FAC_MAX
        } else {
            (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
        };
        // a step shortened to land on a grid point does not shrink the next one
        h = if last { proposed.max(h * fac) } else { h * fac };
    }

    if out.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteState(t));
    }
    Ok(StateSeries { dim: n, data: out })
}

/// One trial step; fills `st.y_new` and `st.k`, returns the scaled error norm.
#[allow(clippy::too_many_arguments)]
fn dp_step(
    model: &dyn Model,
    p: &[f64],
    t: f64,
    h: f64,
    y: &[f64],
    f0: &[f64],
    st: &mut Stages,
    cfg: &IntegratorConfig,
) -> Result<f64, IntegrationError> {
    let n = y.len();
    let Stages { k, tmp, y_new } = st;
    let y_new = y_new.as_mut_slice();
    k[0].copy_from_slice(f0);

    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k[0][i];
    }
    model.rhs(t + C2 * h, tmp, p, &mut k[1])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
    }
    model.rhs(t + C3 * h, tmp, p, &mut k[2])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
    }
    model.rhs(t + C4 * h, tmp, p, &mut k[3])?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
    }
    model.rhs(t + C5 * h, tmp, p, &mut k[4])?;
    for i in 0..n {
        tmp[i] = y[i]
            + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i]
                + A65 * k[4][i]);
    }
    model.rhs(t + h, tmp, p, &mut k[5])?;
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * k[0][i] + A73 * k[2][i] + A74 * k[3][i] + A75 * k[4][i]
                + A76 * k[5][i]);
    }
    if y_new.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    let (k6, head) = k.split_last_mut().expect("seven stages");
    model.rhs(t + h, y_new, p, k6)?;

    let mut acc = 0.0f64;
    for i in 0..n {
        let e = h
            * (E1 * head[0][i] + E3 * head[2][i] + E4 * head[3][i] + E5 * head[4][i]
                + E6 * head[5][i]
                + E7 * k6[i]);
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
        acc = acc.max((e / sc).abs());
    }
    Ok(acc)
}
