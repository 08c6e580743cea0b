//! Confidence sub-contour boxes for nonlinear dynamic models.
//!
//! The pipeline starts from a nominal factor vector, searches a promissory box
//! one factor at a time ([`oat`]), then shrinks it with Latin-hypercube
//! Monte-Carlo until almost every sample fits within the dissimilarity
//! threshold ([`shrink`]). [`estimation`] gives the median confidence
//! intervals for comparison and [`sensitivity`] the variance-based indices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod domain;
pub mod error;
pub mod estimation;
pub mod loss;
pub mod models;
pub mod oat;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod sensitivity;
pub mod shrink;

pub use domain::{FactorVector, Interval, Orthotope, TimeGrid, Trajectory};
pub use error::{CsbError, IntegrationError, Result};
pub use loss::{EvalCounter, LossConfig, Objective};
