//! Deterministic dynamic models `Y = f(X, t)` and their numerical integration.

mod analytic;
mod dengue;
mod integrator;

pub use analytic::{
    additive_model, decay_model, identity_model, identity_with_dummies, interaction_model,
    test_models, AnalyticModel,
};
pub use dengue::{dengue_model, DengueConstants, DengueModel, DENGUE_FACTORS};
pub use integrator::{solve, IntegratorConfig, StateSeries};

use crate::domain::{FactorVector, TimeGrid, Trajectory};
use crate::error::IntegrationError;

/// A deterministic ODE model whose factors are parameters and initial conditions.
///
/// Implementations must be pure: identical inputs give identical outputs.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Factor names in declaration order (parameters and initial conditions).
    fn factor_names(&self) -> &[String];

    fn state_dim(&self) -> usize;

    /// Initial state at the first grid time, built from the factors and any
    /// derived constants.
    fn initial_state(&self, factors: &[f64]) -> Result<Vec<f64>, IntegrationError>;

    fn rhs(
        &self,
        t: f64,
        state: &[f64],
        factors: &[f64],
        dydt: &mut [f64],
    ) -> Result<(), IntegrationError>;

    /// Scalar quantity compared against data.
    fn observable(&self, state: &[f64]) -> f64;

    fn num_factors(&self) -> usize {
        self.factor_names().len()
    }
}

/// Integrates the model and samples its observable on `grid`.
pub fn integrate(
    model: &dyn Model,
    x: &FactorVector,
    grid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrationError> {
    if x.len() != model.num_factors() {
        return Err(IntegrationError::Domain(format!(
            "model `{}` expects {} factors, got {}",
            model.name(),
            model.num_factors(),
            x.len()
        )));
    }
    if x.values().iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::Domain("non-finite factor".into()));
    }
    let states = solve(model, x.values(), grid, cfg)?;
    let values: Vec<f64> = (0..states.len())
        .map(|i| model.observable(states.state(i)))
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFiniteState(grid.points()[pos]));
    }
    Ok(Trajectory::new(grid.clone(), values).expect("length and finiteness checked"))
}
