//! Prediction-rigidity uncertainty quantification.
//!
//! The dense kernels in [`linalg`], the metrics in [`eval`] and the
//! last-layer state in [`llpr`] are generic over [`Scalar`] (`f32`/`f64`).
//! Models, training, kernels and data handling are `f64`.

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod llpr;
pub mod models;
pub mod ntk;
pub mod persist;
pub mod rigidity;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use linalg::{CholeskyFactor, DenseMatrix};
pub use data::Dataset;
pub use models::{Activation, MlpArchitecture, Regressor};
pub use scalar::Scalar;

pub type Matrix = DenseMatrix<f64>;
pub type SpdFactor = CholeskyFactor<f64>;
pub type LlprState = llpr::LastLayerState<f64>;
