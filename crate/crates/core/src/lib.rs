//! Discriminative robust deep dictionary learning.
//!
//! A network is a stack of synthesis dictionaries learned greedily, one
//! layer at a time. The first layer fits the data under an l1 loss (robust
//! to sparse outliers), middle layers use ordinary least squares, and the
//! last layer learns sparse codes jointly with a linear classifier mapping
//! codes to one-hot class targets.
//!
//! Matrices are [`Mat`] (`nalgebra::DMatrix<f64>`, column-major); one column
//! is one sample or one coefficient vector.

pub mod activations;
pub mod error;
pub mod hsidata;
pub mod layers;
pub mod metrics;
pub mod network;
pub mod random;
pub mod solvers;

pub use activations::{Activation, ActivationKind};
pub use error::{Error, Result};
pub use layers::{FinalTrainConfig, Layer, RobustTrainConfig};
pub use metrics::ConfusionMatrix;
pub use network::{DrddlModel, FeatureScaling, TrainSpec};
pub use solvers::{IstaConfig, SolveReport};

/// Dense real matrix, column-major.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;

pub(crate) fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}
