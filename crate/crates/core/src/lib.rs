//! Margin-level pursuit for binary linear classification.
//!
//! The training objective drives the empirical margin distribution toward a
//! prescribed level `gamma` through a scaled soft-truncation loss whose
//! influence function is bounded. The same influence function defines a
//! robust location estimate of the margins, interpolating between the
//! sample median (small scale) and the sample mean (large scale). The
//! calibration module computes the exact transform relating excess
//! surrogate risk to excess misclassification risk via closed-form cubic
//! root-finding, and the harness module runs multi-trial comparisons
//! against a Pegasos baseline with CSV traces.

pub mod calibration;
pub mod cubic;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod loss;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{LinearModel, ScaledLoss};
