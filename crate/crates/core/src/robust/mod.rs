//! The perturbed loss `psi`, the epsilon-accurate inner maximization oracle,
//! the one-dimensional dual objective, Danskin gradients of the robust
//! surrogate, and the subgradient stationarity measure.

mod dual;
mod oracle;
mod stationarity;

pub use dual::{dual_objective, dual_objective_weighted, DualValue, GammaChoice, InnerSolver};
pub use oracle::{ascend, curvature, inner_max_oracle, Ascent, OracleOutput};
pub use stationarity::{full_gradient, robust_objective, stationarity_distance};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Datum, Loss, ModelParams};
use crate::scalar::Scalar;
use crate::transport::TransportCost;

/// Radius, dual-variable floor and oracle tolerances of the robust surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig<F> {
    /// Wasserstein ball radius.
    pub rho: F,
    /// Lower end of the admissible dual set `[gamma0, inf)`.
    pub gamma0: F,
    /// Target accuracy of the inner maximization.
    pub oracle_eps: F,
    /// Gradient ascent step of the inner maximization.
    pub oracle_step: F,
    pub oracle_max_iters: usize,
}

impl<F: Scalar> RobustConfig<F> {
    pub fn new(rho: F, gamma0: F) -> Self {
        Self {
            rho,
            gamma0,
            oracle_eps: F::of(1e-8),
            oracle_step: F::of(0.02),
            oracle_max_iters: 1000,
        }
    }

    pub fn with_oracle(mut self, eps: F, step: F, max_iters: usize) -> Self {
        self.oracle_eps = eps;
        self.oracle_step = step;
        self.oracle_max_iters = max_iters;
        self
    }

    /// Checks ranges and, when the loss declares `L_zz`, that `gamma0`
    /// exceeds `L_zz / mu` so the inner problem is strongly concave on the
    /// whole admissible set.
    pub fn validate<L: Loss<F> + ?Sized>(&self, model: &L, cost: &TransportCost<F>) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.rho >= F::zero() && self.rho.is_finite()) {
            errs.push(format!("rho must be finite and >= 0, got {}", self.rho));
        }
        if !self.gamma0.is_finite() {
            errs.push("gamma0 must be finite".to_string());
        }
        if !(self.oracle_eps > F::zero()) {
            errs.push("oracle_eps must be > 0".to_string());
        }
        if !(self.oracle_step > F::zero()) {
            errs.push("oracle_step must be > 0".to_string());
        }
        if self.oracle_max_iters == 0 {
            errs.push("oracle_max_iters must be >= 1".to_string());
        }
        if let Some(l_zz) = model.lipschitz().zz {
            let mu = cost.mu();
            if mu <= F::zero() || mu * self.gamma0 - l_zz <= F::zero() {
                errs.push(format!(
                    "gamma0 = {} does not exceed L_zz / mu = {} / {}",
                    self.gamma0, l_zz, mu
                ));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// `psi(theta_bar, zeta; z) = l(theta; (zeta, y)) + gamma (rho - c(x, zeta))`.
pub fn psi<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    zeta: &[F],
    z: &Datum<F>,
    rho: F,
    c: &TransportCost<F>,
) -> F {
    model.loss(&params.theta, zeta, z.y) + params.gamma * (rho - c.cost(&z.x, zeta))
}

/// `grad_zeta psi = grad_x l(theta; (zeta, y)) - gamma grad_zeta c(x, zeta)`.
pub fn grad_zeta_psi<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    zeta: &[F],
    z: &Datum<F>,
    c: &TransportCost<F>,
) -> Vec<F> {
    let gl = model.grad_features(&params.theta, zeta, z.y);
    let gc = c.grad_zeta(&z.x, zeta);
    gl.iter()
        .zip(&gc)
        .map(|(&a, &b)| a - params.gamma * b)
        .collect()
}

/// Gradient of `psi` over `(theta, gamma)` with `zeta` held fixed.
pub fn grad_params_psi<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    zeta: &[F],
    z: &Datum<F>,
    rho: F,
    c: &TransportCost<F>,
) -> ModelParams<F> {
    ModelParams::new(
        model.grad_theta(&params.theta, zeta, z.y),
        rho - c.cost(&z.x, zeta),
    )
}

/// Danskin gradient of `sup_zeta psi` at `params`: the gradient of `psi` at
/// the oracle's maximizer.
pub fn danskin_gradient<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
) -> Result<ModelParams<F>> {
    let out = inner_max_oracle(model, params, z, cfg, c)?;
    Ok(grad_params_psi(model, params, &out.zeta, z, cfg.rho, c))
}

/// Mean of per-sample gradients, summed in sample order regardless of how
/// the samples were evaluated.
pub(crate) fn mean_gradient<F: Scalar>(dim: usize, grads: &[ModelParams<F>]) -> ModelParams<F> {
    let mut sum = ModelParams::zeros(dim);
    for g in grads {
        for (s, &v) in sum.theta.iter_mut().zip(&g.theta) {
            *s = *s + v;
        }
        sum.gamma = sum.gamma + g.gamma;
    }
    let inv = F::one() / F::of_usize(grads.len().max(1));
    for s in sum.theta.iter_mut() {
        *s = *s * inv;
    }
    sum.gamma = sum.gamma * inv;
    sum
}

/// Per-sample map in parallel with results returned in sample order.
pub(crate) fn par_map_samples<F, T, G>(samples: &[&Datum<F>], f: G) -> Result<Vec<T>>
where
    F: Scalar,
    T: Send,
    G: Fn(&Datum<F>) -> Result<T> + Sync + Send,
{
    samples
        .par_iter()
        .enumerate()
        .map(|(i, z)| f(z).map_err(|e| e.at_sample(i)))
        .collect()
}
