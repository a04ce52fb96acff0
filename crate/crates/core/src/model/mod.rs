//! Parameter containers, loss models with analytic gradients, and
//! regularizers with closed-form proximal operators.

mod loss;
mod params;
mod regularizer;

pub use loss::{grad_features, grad_theta, loss, Lipschitz, Loss, LossKind, LossModel};
pub use params::{Datum, ModelParams};
pub use regularizer::{prox_augmented, soft_threshold, Regularizer};
