//! Wasserstein distributionally robust learning.

// `!(a < b)` is used on purpose so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod scalar;

pub mod attacks;
pub mod data;
pub mod experiment;
pub mod federated;
pub mod model;
pub mod rng;
pub mod robust;
pub mod train;
pub mod transport;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Dataset, LabelKind, MetricsRow};
pub use model::{Datum, Loss, LossKind, LossModel, ModelParams, Regularizer};
pub use robust::RobustConfig;
pub use train::{Algorithm, TrainerConfig};
pub use transport::TransportCost;

/// Double-precision aliases for the common case.
pub type Params = ModelParams<f64>;
pub type Sample = Datum<f64>;
pub type Model = LossModel<f64>;
pub type Data = Dataset<f64>;
pub type Cost = TransportCost<f64>;
pub type Robust = RobustConfig<f64>;
pub type Trainer = TrainerConfig<f64>;
