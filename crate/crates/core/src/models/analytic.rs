//! Closed-form models used as oracles. Their outputs are constant in time
//! (zero vector field) except for the exponential decay model.

use super::Model;
use crate::error::IntegrationError;

type StateFn = fn(&[f64]) -> Vec<f64>;
type RhsFn = fn(f64, &[f64], &[f64], &mut [f64]);
type ObsFn = fn(&[f64]) -> f64;

pub struct AnalyticModel {
    name: String,
    factor_names: Vec<String>,
    state_dim: usize,
    init: StateFn,
    rhs: RhsFn,
    observable: ObsFn,
}

impl std::fmt::Debug for AnalyticModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticModel")
            .field("name", &self.name)
            .field("factor_names", &self.factor_names)
            .finish()
    }
}

fn frozen(_t: f64, _y: &[f64], _p: &[f64], dydt: &mut [f64]) {
    dydt.fill(0.0);
}

fn names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("x{i}")).collect()
}

impl Model for AnalyticModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn initial_state(&self, factors: &[f64]) -> Result<Vec<f64>, IntegrationError> {
        Ok((self.init)(factors))
    }

    fn rhs(
        &self,
        t: f64,
        state: &[f64],
        factors: &[f64],
        dydt: &mut [f64],
    ) -> Result<(), IntegrationError> {
        (self.rhs)(t, state, factors, dydt);
        Ok(())
    }

    fn observable(&self, state: &[f64]) -> f64 {
        (self.observable)(state)
    }
}

/// `y(t) = x1`.
pub fn identity_model() -> AnalyticModel {
    identity_with_dummies(0)
}

/// `y(t) = x1` with `dummies` extra factors that never reach the output.
pub fn identity_with_dummies(dummies: usize) -> AnalyticModel {
    AnalyticModel {
        name: "identity".into(),
        factor_names: names(1 + dummies),
        state_dim: 1,
        init: |x| vec![x[0]],
        rhs: frozen,
        observable: |s| s[0],
    }
}

/// `y(t) = x1 + 2·x2`.
pub fn additive_model() -> AnalyticModel {
    AnalyticModel {
        name: "additive".into(),
        factor_names: names(2),
        state_dim: 2,
        init: |x| x.to_vec(),
        rhs: frozen,
        observable: |s| s[0] + 2.0 * s[1],
    }
}

/// `y(t) = x1·x2`.
pub fn interaction_model() -> AnalyticModel {
    AnalyticModel {
        name: "interaction".into(),
        factor_names: names(2),
        state_dim: 2,
        init: |x| x.to_vec(),
        rhs: frozen,
        observable: |s| s[0] * s[1],
    }
}

/// `y' = -rate·y`, `y(0) = y0`; factors `(y0, rate)`.
pub fn decay_model() -> AnalyticModel {
    AnalyticModel {
        name: "decay".into(),
        factor_names: vec!["y0".into(), "rate".into()],
        state_dim: 1,
        init: |x| vec![x[0]],
        rhs: |_t, y, p, dydt| dydt[0] = -p[1] * y[0],
        observable: |s| s[0],
    }
}

pub fn test_models() -> Vec<AnalyticModel> {
    vec![identity_model(), additive_model(), interaction_model()]
}
