use crate::error::{Error, Result};
use crate::model::{Datum, Loss, ModelParams};
use crate::robust::{grad_zeta_psi, psi, RobustConfig};
use crate::scalar::{dist2, norm2_sq, Scalar};
use crate::transport::TransportCost;

/// Result of the inner maximization for one datum.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput<F> {
    pub zeta: Vec<F>,
    pub psi_value: F,
    /// Number of ascent steps taken.
    pub iters: usize,
    /// Whether the gradient-norm certificate `|grad|^2 <= 2 lambda eps` was met
    /// (otherwise the iteration cap was hit).
    pub certified: bool,
}

/// Strong-concavity modulus `lambda = mu gamma - L_zz` of `zeta -> psi`.
///
/// `L_zz` is taken from the declared metadata, else from the loss's
/// closed-form curvature at `theta`, else treated as zero.
pub fn curvature<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    theta: &[F],
    gamma: F,
    c: &TransportCost<F>,
) -> Result<F> {
    let mu = c.mu();
    if mu <= F::zero() {
        return Err(Error::config(
            "transport cost is not strongly convex; the inner maximization needs mu > 0",
        ));
    }
    let l_zz = model
        .lipschitz()
        .zz
        .or_else(|| model.feature_curvature(theta))
        .unwrap_or_else(F::zero);
    let lambda = mu * gamma - l_zz;
    if lambda <= F::zero() {
        return Err(Error::Config(format!(
            "inner problem not strongly concave: mu * gamma = {} <= L_zz = {}",
            mu * gamma,
            l_zz
        )));
    }
    Ok(lambda)
}

/// Outcome of [`ascend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ascent<F> {
    pub zeta: Vec<F>,
    pub iters: usize,
    pub certified: bool,
}

/// Gradient ascent on `zeta -> psi(params, zeta; z)` from `zeta = x`.
///
/// Stops when `|grad|^2 <= tol_sq` or after `max_iters` steps. Aborts when the
/// iterate leaves the ball of radius `10 * c.diameter` around `x`.
#[allow(clippy::too_many_arguments)]
pub fn ascend<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    c: &TransportCost<F>,
    step: F,
    max_iters: usize,
    tol_sq: F,
) -> Result<Ascent<F>> {
    let limit = F::of(10.0) * c.diameter;
    let mut zeta = z.x.clone();
    let mut iters = 0;
    loop {
        let g = grad_zeta_psi(model, params, &zeta, z, c);
        if norm2_sq(&g) <= tol_sq {
            return Ok(Ascent {
                zeta,
                iters,
                certified: true,
            });
        }
        if iters == max_iters {
            return Ok(Ascent {
                zeta,
                iters,
                certified: false,
            });
        }
        for (v, gi) in zeta.iter_mut().zip(&g) {
            *v = *v + step * *gi;
        }
        iters += 1;
        let dist = dist2(&zeta, &z.x);
        if !(dist <= limit) {
            return Err(Error::Instability {
                distance: dist.to_f64_lossy(),
                limit: limit.to_f64_lossy(),
            });
        }
    }
}

/// Epsilon-accurate maximizer of `psi(params, . ; z)`.
///
/// Requires `gamma >= gamma0` and a strongly concave inner problem. Since the
/// objective is `lambda`-strongly concave, `|grad|^2 <= 2 lambda eps`
/// certifies a value gap of at most `eps`.
pub fn inner_max_oracle<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
) -> Result<OracleOutput<F>> {
    if params.gamma < cfg.gamma0 {
        return Err(Error::Config(format!(
            "gamma = {} is below gamma0 = {}",
            params.gamma, cfg.gamma0
        )));
    }
    let lambda = curvature(model, &params.theta, params.gamma, c)?;
    let tol_sq = F::of(2.0) * lambda * cfg.oracle_eps;
    let a = ascend(model, params, z, c, cfg.oracle_step, cfg.oracle_max_iters, tol_sq)?;
    let psi_value = psi(model, params, &a.zeta, z, cfg.rho, c);
    Ok(OracleOutput {
        zeta: a.zeta,
        psi_value,
        iters: a.iters,
        certified: a.certified,
    })
}
