//! Trajectory dissimilarity, the scalarised objective and the uncertainty
//! threshold.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{FactorVector, TimeGrid, Trajectory};
use crate::error::{CsbError, IntegrationError, Result};
use crate::models::{integrate, IntegratorConfig, Model};

/// Distance-penalisation exponent of the loss (`alpha = 2` is the MSE).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 2.0 }
    }
}

impl LossConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha < 1.0 {
            return Err(CsbError::InvalidArgument(format!(
                "loss exponent must be finite and >= 1, got {alpha}"
            )));
        }
        Ok(Self { alpha })
    }

    #[inline]
    fn penalty(&self, d: f64) -> f64 {
        if self.alpha == 2.0 {
            d * d
        } else if self.alpha == 1.0 {
            d.abs()
        } else {
            d.abs().powf(self.alpha)
        }
    }
}

/// Mean of `|y_t - y_hat_t|^alpha` over the grid.
pub fn loss(y: &Trajectory, y_hat: &Trajectory, cfg: &LossConfig) -> Result<f64> {
    if y.grid() != y_hat.grid() {
        return Err(CsbError::GridMismatch);
    }
    Ok(loss_values(y.values(), y_hat.values(), cfg))
}

fn loss_values(y: &[f64], y_hat: &[f64], cfg: &LossConfig) -> f64 {
    let sum: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| cfg.penalty(a - b))
        .sum();
    sum / y.len() as f64
}

/// Multiplier applied to the nominal output to define the contour threshold.
///
/// A percentage `p` corresponds to the multiplier `1 + p/100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyLevel(f64);

impl UncertaintyLevel {
    pub fn multiplier(m: f64) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(CsbError::InvalidArgument(format!(
                "uncertainty multiplier must be positive, got {m}"
            )));
        }
        Ok(Self(m))
    }

    pub fn percent(p: f64) -> Result<Self> {
        Self::multiplier(1.0 + p / 100.0)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub lambda: f64,
    pub threshold_value: f64,
}

/// `loss(lambda · y_hat, y_hat)`.
pub fn threshold(y_hat: &Trajectory, lambda: f64, cfg: &LossConfig) -> Result<ThresholdSpec> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(CsbError::InvalidArgument(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let scaled = y_hat.scaled(lambda);
    Ok(ThresholdSpec {
        lambda,
        threshold_value: loss(&scaled, y_hat, cfg)?,
    })
}

/// Shared tally of model evaluations. Clones share the same count.
#[derive(Debug, Clone, Default)]
pub struct EvalCounter(Arc<AtomicU64>);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn incr(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Scalar objective `phi(X) = loss(f(X), reference)`.
///
/// The reference is either the nominal trajectory `f(X_hat)` or observed data.
/// Every call to [`Objective::eval`] or [`Objective::trajectory`] counts as one
/// model evaluation.
#[derive(Clone)]
pub struct Objective {
    model: Arc<dyn Model>,
    reference: Trajectory,
    integrator: IntegratorConfig,
    loss: LossConfig,
    counter: EvalCounter,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("model", &self.model.name())
            .field("loss", &self.loss)
            .field("evals", &self.counter.get())
            .finish()
    }
}

impl Objective {
    /// Dissimilarity against the trajectory of `x_hat`. Fails when the nominal
    /// point itself cannot be integrated.
    pub fn against_nominal(
        model: Arc<dyn Model>,
        x_hat: &FactorVector,
        grid: &TimeGrid,
        integrator: IntegratorConfig,
        loss: LossConfig,
        counter: EvalCounter,
    ) -> Result<Self> {
        counter.incr();
        let reference = integrate(model.as_ref(), x_hat, grid, &integrator)?;
        Ok(Self {
            model,
            reference,
            integrator,
            loss,
            counter,
        })
    }

    pub fn against_data(
        model: Arc<dyn Model>,
        data: Trajectory,
        integrator: IntegratorConfig,
        loss: LossConfig,
        counter: EvalCounter,
    ) -> Self {
        Self {
            model,
            reference: data,
            integrator,
            loss,
            counter,
        }
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn Model> {
        Arc::clone(&self.model)
    }

    pub fn reference(&self) -> &Trajectory {
        &self.reference
    }

    pub fn grid(&self) -> &TimeGrid {
        self.reference.grid()
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    pub fn integrator(&self) -> &IntegratorConfig {
        &self.integrator
    }

    pub fn counter(&self) -> &EvalCounter {
        &self.counter
    }

    pub fn num_factors(&self) -> usize {
        self.model.num_factors()
    }

    pub fn threshold(&self, lambda: f64) -> Result<ThresholdSpec> {
        threshold(&self.reference, lambda, &self.loss)
    }

    pub fn trajectory(&self, x: &FactorVector) -> std::result::Result<Trajectory, IntegrationError> {
        self.counter.incr();
        integrate(self.model.as_ref(), x, self.grid(), &self.integrator)
    }

    pub fn try_eval(&self, x: &FactorVector) -> std::result::Result<f64, IntegrationError> {
        let y = self.trajectory(x)?;
        Ok(loss_values(y.values(), self.reference.values(), &self.loss))
    }

    /// Integration failures map to `+inf` so they sort to the tail.
    pub fn eval(&self, x: &FactorVector) -> f64 {
        self.try_eval(x).unwrap_or(f64::INFINITY)
    }

    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        self.eval(&FactorVector(x.to_vec()))
    }
}

/// Outcome of a single dissimilarity evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissimilarity {
    pub value: f64,
    /// Set when integration failed and `value` is `+inf`.
    pub failed: bool,
}

/// `loss(f(x), f(x_hat))`. Counts one evaluation.
#[allow(clippy::too_many_arguments)]
pub fn dissimilarity(
    model: &dyn Model,
    x: &FactorVector,
    x_hat: &FactorVector,
    grid: &TimeGrid,
    integrator: &IntegratorConfig,
    cfg: &LossConfig,
    counter: &EvalCounter,
) -> Result<Dissimilarity> {
    let y_hat = integrate(model, x_hat, grid, integrator)?;
    counter.incr();
    Ok(match integrate(model, x, grid, integrator) {
        Ok(y) => Dissimilarity {
            value: loss_values(y.values(), y_hat.values(), cfg),
            failed: false,
        },
        Err(_) => Dissimilarity {
            value: f64::INFINITY,
            failed: true,
        },
    })
}
