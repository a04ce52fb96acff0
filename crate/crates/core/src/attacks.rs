//! Evaluation-time adversarial perturbations: FGSM, iterated FGSM, PGD in
//! the l-infinity ball, and the Wasserstein-penalized (WRM) attack.
//!
//! The sign-based attacks never leave `[x - eps, x + eps]` or the clip box,
//! and `sign(0) = 0`, so `eps = 0` returns the (clipped) input unchanged.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Datum, Loss, ModelParams};
use crate::robust::{ascend, curvature, grad_zeta_psi};
use crate::scalar::{norm2, sign0, Scalar};
use crate::transport::TransportCost;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Ifgsm,
    Pgd,
    Wrm,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Ifgsm => "ifgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Wrm => "wrm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fgsm" => Some(AttackKind::Fgsm),
            "ifgsm" => Some(AttackKind::Ifgsm),
            "pgd" => Some(AttackKind::Pgd),
            "wrm" => Some(AttackKind::Wrm),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig<F> {
    pub kind: AttackKind,
    /// l-infinity budget.
    pub eps: F,
    /// Iterations of IFGSM/PGD.
    pub steps: usize,
    /// PGD step; `None` means `eps / 4`. Also overrides the WRM ascent step.
    pub step_size: Option<F>,
    pub clip_lo: F,
    pub clip_hi: F,
    /// Penalty of the WRM attack.
    pub wrm_gamma: F,
}

/// Ascent cap of the WRM attack.
pub const WRM_MAX_ITERS: usize = 500;

impl<F: Scalar> AttackConfig<F> {
    /// `eps = 0.1`, 10 steps, clip range `[-1, 1]`, WRM penalty 1.
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            eps: F::of(0.1),
            steps: 10,
            step_size: None,
            clip_lo: -F::one(),
            clip_hi: F::one(),
            wrm_gamma: F::one(),
        }
    }

    pub fn with_eps(mut self, eps: F) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_clip(mut self, lo: F, hi: F) -> Self {
        self.clip_lo = lo;
        self.clip_hi = hi;
        self
    }

    pub fn pgd_step(&self) -> F {
        self.step_size.unwrap_or(self.eps / F::of(4.0))
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.eps >= F::zero() && self.eps.is_finite()) {
            errs.push(format!("attack eps must be finite and >= 0, got {}", self.eps));
        }
        if !(self.clip_lo < self.clip_hi) {
            errs.push(format!("clip_lo = {} must be below clip_hi = {}", self.clip_lo, self.clip_hi));
        }
        if matches!(self.kind, AttackKind::Ifgsm | AttackKind::Pgd) && self.steps == 0 {
            errs.push(format!("{} needs at least one step", self.kind.name()));
        }
        if let Some(s) = self.step_size {
            if !(s > F::zero() && s.is_finite()) {
                errs.push(format!("attack step size must be > 0, got {s}"));
            }
        }
        if self.kind == AttackKind::Wrm && !(self.wrm_gamma > F::zero()) {
            errs.push(format!("wrm_gamma must be > 0, got {}", self.wrm_gamma));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// Clamp `v` to `[center - eps, center + eps]` and then to `[lo, hi]`.
///
/// `center +- eps` can round outside the budget; the offset is shrunk until
/// `|u - center| <= eps` holds in floating point.
fn project<F: Scalar>(v: F, center: F, eps: F, lo: F, hi: F) -> F {
    let mut u = v.max(center - eps).min(center + eps);
    let mut d = u - center;
    while (u - center).abs() > eps {
        d = d * (F::one() - F::epsilon());
        u = center + d;
    }
    u.max(lo).min(hi)
}

fn sign_step<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    theta: &[F],
    cur: &[F],
    origin: &Datum<F>,
    step: F,
    cfg: &AttackConfig<F>,
) -> Vec<F> {
    let g = model.grad_features(theta, cur, origin.y);
    cur.iter()
        .zip(&g)
        .zip(&origin.x)
        .map(|((&c, &gi), &x)| project(c + step * sign0(gi), x, cfg.eps, cfg.clip_lo, cfg.clip_hi))
        .collect()
}

/// `Clip(x + eps sign(grad_x l))`.
pub fn fgsm<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &AttackConfig<F>,
) -> Vec<F> {
    sign_step(model, &params.theta, &z.x, z, cfg.eps, cfg)
}

/// `steps` FGSM iterations of size `eps / steps`, each projected onto the
/// budget around the original input and the clip box.
pub fn ifgsm<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &AttackConfig<F>,
) -> Vec<F> {
    let step = cfg.eps / F::of_usize(cfg.steps.max(1));
    let mut cur = z.x.clone();
    for _ in 0..cfg.steps.max(1) {
        cur = sign_step(model, &params.theta, &cur, z, step, cfg);
    }
    cur
}

/// Projected sign-gradient ascent with step [`AttackConfig::pgd_step`].
pub fn pgd<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &AttackConfig<F>,
) -> Vec<F> {
    let step = cfg.pgd_step();
    let mut cur = z.x.clone();
    for _ in 0..cfg.steps.max(1) {
        cur = sign_step(model, &params.theta, &cur, z, step, cfg);
    }
    cur
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrmOutput<F> {
    pub features: Vec<F>,
    /// False when the penalized problem is not certifiably strongly concave
    /// or the ascent hit [`WRM_MAX_ITERS`] before converging.
    pub certified: bool,
}

/// Gradient ascent on `l(theta; zeta) - wrm_gamma c(x, zeta)` from `x`,
/// clipped to the box at the end.
pub fn wrm_attack<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &AttackConfig<F>,
    c: &TransportCost<F>,
) -> Result<WrmOutput<F>> {
    let gamma = cfg.wrm_gamma;
    let smooth = c
        .smoothness()
        .ok_or_else(|| Error::config("the WRM attack needs a smooth transport cost"))?;
    let l_zz = model
        .lipschitz()
        .zz
        .or_else(|| model.feature_curvature(&params.theta))
        .unwrap_or_else(F::zero);
    let step = cfg.step_size.unwrap_or(F::one() / (smooth * gamma + l_zz));
    let lambda = curvature(model, &params.theta, gamma, c).ok();
    let tol_sq = lambda.map_or(F::zero(), |l| F::of(2.0) * l * F::epsilon());
    let penalized = ModelParams::new(params.theta.clone(), gamma);
    // a lambda-strongly concave objective peaks within |grad(x)| / lambda of
    // x, which may lie far outside a small clip box
    let reach = lambda.map_or(F::zero(), |l| norm2(&grad_zeta_psi(model, &penalized, &z.x, z, c)) / l);
    let guard = TransportCost {
        kind: c.kind,
        diameter: c.diameter.max(reach),
    };
    let a = ascend(model, &penalized, z, &guard, step, WRM_MAX_ITERS, tol_sq)?;
    Ok(WrmOutput {
        features: a.zeta.iter().map(|&v| v.max(cfg.clip_lo).min(cfg.clip_hi)).collect(),
        certified: lambda.is_some() && a.certified,
    })
}

/// Squared-l2 cost whose diameter is that of the clip box in `dim` dimensions.
pub fn box_cost<F: Scalar>(cfg: &AttackConfig<F>, dim: usize) -> TransportCost<F> {
    TransportCost::squared_l2((cfg.clip_hi - cfg.clip_lo) * F::of_usize(dim.max(1)).sqrt())
}

/// Perturbed features of `z` under the configured attack. WRM uses
/// [`box_cost`].
pub fn attack<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
    cfg: &AttackConfig<F>,
) -> Result<Vec<F>> {
    Ok(match cfg.kind {
        AttackKind::Fgsm => fgsm(model, params, z, cfg),
        AttackKind::Ifgsm => ifgsm(model, params, z, cfg),
        AttackKind::Pgd => pgd(model, params, z, cfg),
        AttackKind::Wrm => wrm_attack(model, params, z, cfg, &box_cost(cfg, z.dim()))?.features,
    })
}

fn misclassified<F: Scalar, L: Loss<F> + ?Sized>(model: &L, theta: &[F], x: &[F], z: &Datum<F>) -> bool {
    model.predict(theta, x) != z.class()
}

fn require_classifier<F: Scalar, L: Loss<F> + ?Sized>(model: &L) -> Result<()> {
    if model.is_classifier() {
        Ok(())
    } else {
        Err(Error::config("error rates need a classification model"))
    }
}

/// Fraction of `test` misclassified without perturbation.
pub fn clean_error<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    test: &[Datum<F>],
) -> Result<F> {
    require_classifier(model)?;
    let wrong = test
        .par_iter()
        .filter(|z| misclassified(model, &params.theta, &z.x, z))
        .count();
    Ok(F::of_usize(wrong) / F::of_usize(test.len().max(1)))
}

/// Fraction of `test` misclassified after each point is attacked.
pub fn evaluate_under_attack<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    test: &[Datum<F>],
    cfg: &AttackConfig<F>,
) -> Result<F> {
    require_classifier(model)?;
    cfg.validate()?;
    let flags: Vec<bool> = test
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            attack(model, params, z, cfg)
                .map(|x| misclassified(model, &params.theta, &x, z))
                .map_err(|e| e.at_sample(i))
        })
        .collect::<Result<_>>()?;
    let wrong = flags.iter().filter(|&&b| b).count();
    Ok(F::of_usize(wrong) / F::of_usize(test.len().max(1)))
}
