//! Vector-borne transmission model with susceptible/infected mosquitoes and
//! susceptible/infected/recovered humans.
//!
//! State `(M_s, M_i, H_s, H_i, H_r)`; observable `H_i`. The total human
//! population `H` is a problem constant, `H_i(0)` is taken from the first data
//! value and `H_r(0) = H - H_s(0) - H_i(0)`. The mosquito total `M = M_s + M_i`
//! is recomputed at every evaluation.

use serde::{Deserialize, Serialize};

use super::Model;
use crate::domain::{Interval, Orthotope};
use crate::error::IntegrationError;

/// `(name, estimation range, nominal)` for the nine estimated factors.
pub const DENGUE_FACTORS: [(&str, (f64, f64), f64); 9] = [
    ("M_s0", (0.0, 20_000_000.0), 2_110_000.0),
    ("M_i0", (0.0, 1000.0), 670.0),
    ("H_s0", (150_000.0, 400_000.0), 281_000.0),
    ("Lambda_v", (0.0, 20_000.0), 7800.0),
    ("beta_m", (0.0, 4.0), 0.064),
    ("mu_m", (0.0, 0.9), 0.1665),
    ("beta_h", (0.0, 4.0), 0.48),
    ("mu_h", (0.0, 0.0009), 0.00066),
    ("gamma_h", (0.5, 1.8), 0.500),
];

const MS0: usize = 0;
const MI0: usize = 1;
const HS0: usize = 2;
const LAMBDA_V: usize = 3;
const BETA_M: usize = 4;
const MU_M: usize = 5;
const BETA_H: usize = 6;
const MU_H: usize = 7;
const GAMMA_H: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DengueConstants {
    /// Total human population `H`, held constant.
    pub total_humans: f64,
    /// `H_i(0)`: first observed case count.
    pub initial_infected: f64,
}

impl Default for DengueConstants {
    fn default() -> Self {
        Self {
            total_humans: 410_000.0,
            initial_infected: 10.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DengueModel {
    constants: DengueConstants,
    factor_names: Vec<String>,
}

impl DengueModel {
    pub fn new(constants: DengueConstants) -> Result<Self, IntegrationError> {
        if !(constants.total_humans > 0.0) || !constants.total_humans.is_finite() {
            return Err(IntegrationError::Domain(format!(
                "total human population must be positive, got {}",
                constants.total_humans
            )));
        }
        if !constants.initial_infected.is_finite() {
            return Err(IntegrationError::Domain("initial infected is not finite".into()));
        }
        Ok(Self {
            constants,
            factor_names: DENGUE_FACTORS.iter().map(|f| f.0.to_string()).collect(),
        })
    }

    pub fn constants(&self) -> &DengueConstants {
        &self.constants
    }

    /// Table nominal values in factor order.
    pub fn nominal() -> Vec<f64> {
        DENGUE_FACTORS.iter().map(|f| f.2).collect()
    }

    pub fn estimation_ranges() -> Vec<(f64, f64)> {
        DENGUE_FACTORS.iter().map(|f| f.1).collect()
    }

    /// The estimation ranges as a named search box.
    pub fn estimation_box() -> Orthotope {
        let intervals = DENGUE_FACTORS
            .iter()
            .map(|f| Interval::new(f.1 .0, f.1 .1).expect("ordered ranges"))
            .collect();
        let names = DENGUE_FACTORS.iter().map(|f| f.0.to_string()).collect();
        Orthotope::new(names, intervals).expect("nine named ranges")
    }
}

/// Dengue model with default constants.
pub fn dengue_model() -> DengueModel {
    DengueModel::new(DengueConstants::default()).expect("default constants are valid")
}

impl Model for DengueModel {
    fn name(&self) -> &str {
        "dengue"
    }

    fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    fn state_dim(&self) -> usize {
        5
    }

    fn initial_state(&self, x: &[f64]) -> Result<Vec<f64>, IntegrationError> {
        let h = self.constants.total_humans;
        let hi = self.constants.initial_infected;
        let m = x[MS0] + x[MI0];
        if !(m > 0.0) {
            return Err(IntegrationError::Domain(format!(
                "initial mosquito population must be positive, got {m}"
            )));
        }
        Ok(vec![x[MS0], x[MI0], x[HS0], hi, h - x[HS0] - hi])
    }

    fn rhs(
        &self,
        _t: f64,
        s: &[f64],
        x: &[f64],
        d: &mut [f64],
    ) -> Result<(), IntegrationError> {
        let h = self.constants.total_humans;
        let (ms, mi, hs, hi, hr) = (s[0], s[1], s[2], s[3], s[4]);
        let m = ms + mi;
        if !(m > 0.0) {
            return Err(IntegrationError::Domain(format!(
                "mosquito population became non-positive ({m})"
            )));
        }
        let to_mosquito = x[BETA_M] * hi * ms / h;
        let to_human = x[BETA_H] * mi * hs / m;
        d[0] = x[LAMBDA_V] - to_mosquito - x[MU_M] * ms;
        d[1] = to_mosquito - x[MU_M] * mi;
        d[2] = x[MU_H] * h - to_human - x[MU_H] * hs;
        d[3] = to_human - (x[MU_H] + x[GAMMA_H]) * hi;
        d[4] = x[GAMMA_H] * hi - x[MU_H] * hr;
        Ok(())
    }

    fn observable(&self, s: &[f64]) -> f64 {
        s[3]
    }
}
