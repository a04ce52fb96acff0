use crate::model::ModelParams;
use crate::scalar::Scalar;

/// Convex, non-negative regularizer with a closed-form proximal operator.
///
/// `None`, `L1` and `SquaredL2` act on the model weights. `GammaIndicator` is
/// the indicator of `[gamma0, inf)` and acts on the dual variable; applied to a
/// plain vector it constrains every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer<F> {
    None,
    L1 { beta: F },
    SquaredL2 { beta: F },
    GammaIndicator { gamma0: F },
}

impl<F: Scalar> Regularizer<F> {
    pub fn is_gamma_indicator(&self) -> bool {
        matches!(self, Regularizer::GammaIndicator { .. })
    }

    /// `r(v)`; `+inf` outside the indicator's domain.
    pub fn value(&self, v: &[F]) -> F {
        match *self {
            Regularizer::None => F::zero(),
            Regularizer::L1 { beta } => beta * v.iter().fold(F::zero(), |a, &x| a + x.abs()),
            Regularizer::SquaredL2 { beta } => beta * crate::scalar::norm2_sq(v),
            Regularizer::GammaIndicator { gamma0 } => {
                if v.iter().all(|&g| g >= gamma0) {
                    F::zero()
                } else {
                    F::infinity()
                }
            }
        }
    }

    /// `argmin_u alpha r(u) + 0.5 |u - v|^2`.
    pub fn prox(&self, alpha: F, v: &[F]) -> Vec<F> {
        debug_assert!(alpha > F::zero());
        match *self {
            Regularizer::None => v.to_vec(),
            Regularizer::L1 { beta } => {
                let t = alpha * beta;
                v.iter().map(|&x| soft_threshold(x, t)).collect()
            }
            Regularizer::SquaredL2 { beta } => {
                let s = F::one() + F::of(2.0) * alpha * beta;
                v.iter().map(|&x| x / s).collect()
            }
            Regularizer::GammaIndicator { gamma0 } => v.iter().map(|&g| g.max(gamma0)).collect(),
        }
    }

    /// Value on an augmented parameter: weight regularizers read `theta`, the
    /// indicator reads `gamma`.
    pub fn value_params(&self, p: &ModelParams<F>) -> F {
        if self.is_gamma_indicator() {
            self.value(&[p.gamma])
        } else {
            self.value(&p.theta)
        }
    }

    /// Prox on an augmented parameter; the block the regularizer does not
    /// touch passes through unchanged.
    pub fn prox_params(&self, alpha: F, p: &ModelParams<F>) -> ModelParams<F> {
        if self.is_gamma_indicator() {
            ModelParams::new(p.theta.clone(), self.prox(alpha, &[p.gamma])[0])
        } else {
            ModelParams::new(self.prox(alpha, &p.theta), p.gamma)
        }
    }

    /// Minimum-norm element of `grad + ∂r(v)`, coordinatewise.
    pub fn min_norm_subgradient(&self, v: &[F], grad: &[F]) -> Vec<F> {
        match *self {
            Regularizer::None => grad.to_vec(),
            Regularizer::L1 { beta } => v
                .iter()
                .zip(grad)
                .map(|(&x, &g)| {
                    if x != F::zero() {
                        g + beta * x.signum()
                    } else {
                        g.signum() * (g.abs() - beta).max(F::zero())
                    }
                })
                .collect(),
            Regularizer::SquaredL2 { beta } => v
                .iter()
                .zip(grad)
                .map(|(&x, &g)| g + F::of(2.0) * beta * x)
                .collect(),
            // Normal cone of [gamma0, inf) at the boundary is (-inf, 0].
            Regularizer::GammaIndicator { gamma0 } => v
                .iter()
                .zip(grad)
                .map(|(&x, &g)| if x > gamma0 || g <= F::zero() { g } else { F::zero() })
                .collect(),
        }
    }
}

/// Proximal step on the full augmented parameter: `reg` on the weights and
/// projection of `gamma` onto `[gamma0, inf)`.
pub fn prox_augmented<F: Scalar>(reg: &Regularizer<F>, gamma0: F, alpha: F, v: &ModelParams<F>) -> ModelParams<F> {
    let theta = if reg.is_gamma_indicator() {
        v.theta.clone()
    } else {
        reg.prox(alpha, &v.theta)
    };
    ModelParams::new(theta, v.gamma.max(gamma0))
}

pub fn soft_threshold<F: Scalar>(x: F, t: F) -> F {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        F::zero()
    }
}
