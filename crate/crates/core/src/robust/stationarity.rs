use crate::error::Result;
use crate::model::{Datum, Loss, ModelParams, Regularizer};
use crate::robust::{danskin_gradient, inner_max_oracle, mean_gradient, par_map_samples, RobustConfig};
use crate::scalar::{norm2_sq, Scalar};
use crate::transport::TransportCost;

/// Full-batch gradient of the smooth part `f` of the robust surrogate.
pub fn full_gradient<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    data: &[Datum<F>],
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
) -> Result<ModelParams<F>> {
    let refs: Vec<&Datum<F>> = data.iter().collect();
    let grads = par_map_samples(&refs, |z| danskin_gradient(model, params, z, cfg, c))?;
    Ok(mean_gradient(params.dim(), &grads))
}

/// Full-batch robust objective `F = f + r`, with the inner suprema
/// evaluated by the oracle.
pub fn robust_objective<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    reg: &Regularizer<F>,
    data: &[Datum<F>],
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
) -> Result<F> {
    let refs: Vec<&Datum<F>> = data.iter().collect();
    let vals = par_map_samples(&refs, |z| inner_max_oracle(model, params, z, cfg, c).map(|o| o.psi_value))?;
    let mean = vals.iter().fold(F::zero(), |a, &v| a + v) / F::of_usize(vals.len().max(1));
    Ok(mean + reg.value_params(params))
}

/// `dist(0, grad f + ∂r + ∂h)` where `h` is the indicator of
/// `[gamma0, inf)` on the dual variable.
pub fn stationarity_distance<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    reg: &Regularizer<F>,
    data: &[Datum<F>],
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
) -> Result<F> {
    let g = full_gradient(model, params, data, cfg, c)?;
    Ok(subgradient_distance(reg, cfg.gamma0, params, &g))
}

/// Norm of the minimum-norm element of `grad + ∂(r + h)` at `params`.
pub fn subgradient_distance<F: Scalar>(
    reg: &Regularizer<F>,
    gamma0: F,
    params: &ModelParams<F>,
    grad: &ModelParams<F>,
) -> F {
    let theta_part = if reg.is_gamma_indicator() {
        grad.theta.clone()
    } else {
        reg.min_norm_subgradient(&params.theta, &grad.theta)
    };
    let gamma_part = Regularizer::GammaIndicator { gamma0 }.min_norm_subgradient(&[params.gamma], &[grad.gamma]);
    (norm2_sq(&theta_part) + gamma_part[0] * gamma_part[0]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_case_is_gradient_norm() {
        let p = ModelParams::new(vec![0.3, -0.2], 2.0);
        let g = ModelParams::new(vec![3.0, 4.0], 0.0);
        assert_eq!(subgradient_distance(&Regularizer::None, 1.0, &p, &g), 5.0);
    }

    #[test]
    fn zero_weights_inside_l1_interval() {
        let p = ModelParams::new(vec![0.0, 0.0], 2.0);
        let g = ModelParams::new(vec![0.4, -0.9], -0.25);
        let d = subgradient_distance(&Regularizer::L1 { beta: 1.0 }, 1.0, &p, &g);
        assert_eq!(d, 0.25);
    }

    #[test]
    fn gamma_at_floor_absorbs_positive_gradient() {
        let p = ModelParams::new(vec![], 1.0);
        let g = ModelParams::new(vec![], 5.0);
        assert_eq!(subgradient_distance(&Regularizer::None, 1.0, &p, &g), 0.0);
    }
}
