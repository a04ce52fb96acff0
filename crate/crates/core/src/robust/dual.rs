use crate::error::{Error, Result};
use crate::model::{Datum, Loss, ModelParams};
use crate::robust::{inner_max_oracle, par_map_samples, RobustConfig};
use crate::scalar::Scalar;
use crate::transport::{DiscreteDistribution, TransportCost};

/// How the per-sample supremum over `zeta` is evaluated.
#[derive(Debug, Clone, Copy)]
pub enum InnerSolver<'a, F> {
    /// Gradient-ascent oracle from [`RobustConfig`].
    Oracle,
    /// Exact enumeration over a finite candidate set (verification mode).
    Grid(&'a [Vec<F>]),
}

/// Which dual variable(s) to evaluate the objective at.
#[derive(Debug, Clone, Copy)]
pub enum GammaChoice<F> {
    Fixed(F),
    /// Minimize over `[lo, hi]`: a scan at resolution `1e-4 (hi - lo)` brackets
    /// the minimum, golden-section search refines it. Ties go to the smaller
    /// gamma.
    Search { lo: F, hi: F },
}

impl<F: Scalar> GammaChoice<F> {
    /// Search over `[gamma0, 1e4]`.
    pub fn default_search(gamma0: F) -> Self {
        GammaChoice::Search {
            lo: gamma0,
            hi: F::of(1e4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue<F> {
    pub value: F,
    pub gamma: F,
}

/// Dual objective `E_n sup_zeta { l(theta; zeta) + gamma (rho - c(z_n, zeta)) }`
/// with uniform weights over `samples`, at a fixed gamma or minimized over
/// a gamma interval.
pub fn dual_objective<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    theta: &[F],
    gamma: GammaChoice<F>,
    samples: &[Datum<F>],
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
    inner: InnerSolver<'_, F>,
) -> Result<DualValue<F>> {
    if samples.is_empty() {
        return Err(Error::Validation("dual objective needs at least one sample".into()));
    }
    let w = F::one() / F::of_usize(samples.len());
    let refs: Vec<&Datum<F>> = samples.iter().collect();
    evaluate(model, theta, gamma, &refs, &vec![w; samples.len()], cfg, c, inner)
}

/// [`dual_objective`] with the empirical weights of a finite distribution.
pub fn dual_objective_weighted<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    theta: &[F],
    gamma: GammaChoice<F>,
    p0: &DiscreteDistribution<F, Datum<F>>,
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
    inner: InnerSolver<'_, F>,
) -> Result<DualValue<F>> {
    let refs: Vec<&Datum<F>> = p0.atoms().iter().collect();
    evaluate(model, theta, gamma, &refs, p0.weights(), cfg, c, inner)
}

#[allow(clippy::too_many_arguments)]
fn evaluate<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    theta: &[F],
    gamma: GammaChoice<F>,
    samples: &[&Datum<F>],
    weights: &[F],
    cfg: &RobustConfig<F>,
    c: &TransportCost<F>,
    inner: InnerSolver<'_, F>,
) -> Result<DualValue<F>> {
    let rho = cfg.rho;
    match inner {
        InnerSolver::Grid(grid) => {
            if grid.is_empty() {
                return Err(Error::Validation("empty candidate grid".into()));
            }
            // (loss, cost) per sample and candidate, computed once.
            let table: Vec<Vec<(F, F)>> = samples
                .iter()
                .map(|z| {
                    grid.iter()
                        .map(|zeta| (model.loss(theta, zeta, z.y), c.cost(&z.x, zeta)))
                        .collect()
                })
                .collect();
            let objective = |g: F| -> Result<F> {
                Ok(table.iter().zip(weights).fold(F::zero(), |acc, (row, &w)| {
                    let best = row
                        .iter()
                        .map(|&(l, k)| l + g * (rho - k))
                        .fold(F::neg_infinity(), F::max);
                    acc + w * best
                }))
            };
            minimize_over(gamma, objective)
        }
        InnerSolver::Oracle => {
            let objective = |g: F| -> Result<F> {
                let params = ModelParams::new(theta.to_vec(), g);
                let vals = par_map_samples(samples, |z| {
                    inner_max_oracle(model, &params, z, cfg, c).map(|o| o.psi_value)
                })?;
                Ok(vals
                    .iter()
                    .zip(weights)
                    .fold(F::zero(), |acc, (&v, &w)| acc + w * v))
            };
            minimize_over(gamma, objective)
        }
    }
}

fn minimize_over<F: Scalar>(choice: GammaChoice<F>, mut f: impl FnMut(F) -> Result<F>) -> Result<DualValue<F>> {
    let (lo, hi) = match choice {
        GammaChoice::Fixed(g) => return Ok(DualValue { value: f(g)?, gamma: g }),
        GammaChoice::Search { lo, hi } => (lo, hi),
    };
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("invalid gamma search interval [{lo}, {hi}]")));
    }
    const STEPS: usize = 10_000;
    let h = (hi - lo) / F::of_usize(STEPS);
    let at = |k: usize| if k == STEPS { hi } else { lo + h * F::of_usize(k) };
    let mut best_k = 0;
    let mut best = f(lo)?;
    for k in 1..=STEPS {
        let v = f(at(k))?;
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let mut result = DualValue {
        value: best,
        gamma: at(best_k),
    };
    if h == F::zero() {
        return Ok(result);
    }
    // Golden-section refinement inside the bracketing cells.
    let (mut a, mut b) = (at(best_k.saturating_sub(1)), at((best_k + 1).min(STEPS)));
    let inv_phi = F::of((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..200 {
        if (b - a) <= F::epsilon() * F::of(4.0) * (F::one() + a.abs()) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2)?;
        }
    }
    for (g, v) in [(x1, f1), (x2, f2)] {
        if v < result.value || (v == result.value && g < result.gamma) {
            result = DualValue { value: v, gamma: g };
        }
    }
    Ok(result)
}
