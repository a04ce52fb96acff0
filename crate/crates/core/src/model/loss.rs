use crate::error::{Error, Result};
use crate::model::{Datum, ModelParams};
use crate::scalar::{dot, norm2_sq, sigmoid, softplus, Scalar};

/// Lipschitz-smoothness constants of a loss. `None` means unknown.
///
/// `tt`, `tz`, `zz`, `zt` bound how the theta/feature gradients move with
/// theta/features respectively (first letter: gradient block, second:
/// argument that varies).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Lipschitz<F> {
    pub tt: Option<F>,
    pub tz: Option<F>,
    pub zz: Option<F>,
    pub zt: Option<F>,
}

impl<F: Scalar> Lipschitz<F> {
    pub fn unknown() -> Self {
        Self {
            tt: None,
            tz: None,
            zz: None,
            zt: None,
        }
    }

    /// Constants for `0.5 (theta'x - y)^2` with `|theta| <= theta_radius`,
    /// `|x| <= data_radius` and `|y| <= label_bound`.
    pub fn linear_least_squares(theta_radius: F, data_radius: F, label_bound: F) -> Self {
        let cross = theta_radius * data_radius * F::of(2.0) + label_bound;
        Self {
            tt: Some(data_radius * data_radius),
            tz: Some(cross),
            zz: Some(theta_radius * theta_radius),
            zt: Some(cross),
        }
    }

    /// Constants for the binary logistic loss under the same radius bounds.
    pub fn logistic(theta_radius: F, data_radius: F) -> Self {
        let quarter = F::of(0.25);
        let cross = F::one() + quarter * theta_radius * data_radius;
        Self {
            tt: Some(quarter * data_radius * data_radius),
            tz: Some(cross),
            zz: Some(quarter * theta_radius * theta_radius),
            zt: Some(cross),
        }
    }
}

/// A differentiable loss `l(theta; (x, y))` with analytic gradients in the
/// weights and in the features.
///
/// Implementations must keep the loss finite and non-negative.
pub trait Loss<F: Scalar>: Sync {
    fn feature_dim(&self) -> usize;

    fn weights_dim(&self) -> usize;

    fn loss(&self, theta: &[F], x: &[F], y: F) -> F;

    fn grad_theta(&self, theta: &[F], x: &[F], y: F) -> Vec<F>;

    fn grad_features(&self, theta: &[F], x: &[F], y: F) -> Vec<F>;

    /// Declared smoothness metadata.
    fn lipschitz(&self) -> Lipschitz<F> {
        Lipschitz::unknown()
    }

    /// Upper bound on the feature-Hessian norm at `theta`, when one is
    /// available in closed form. Used to certify strong concavity of the
    /// inner maximization.
    fn feature_curvature(&self, _theta: &[F]) -> Option<F> {
        None
    }

    /// Predicted class, or `None` for regression losses.
    fn predict(&self, _theta: &[F], _x: &[F]) -> Option<usize> {
        None
    }

    fn is_classifier(&self) -> bool {
        false
    }
}

/// The concrete model families shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `0.5 (theta'x - y)^2`.
    LinearLeastSquares,
    /// Binary logistic loss on the score `theta'x`, labels in {0, 1}.
    Logistic,
    /// Multinomial logistic loss; `theta` is a row-major `classes x d` matrix.
    Softmax { classes: usize },
    /// One hidden softplus layer feeding a binary logistic output.
    TinyMlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossModel<F> {
    pub kind: LossKind,
    pub feature_dim: usize,
    pub lipschitz: Lipschitz<F>,
}

impl<F: Scalar> LossModel<F> {
    pub fn new(kind: LossKind, feature_dim: usize) -> Self {
        Self {
            kind,
            feature_dim,
            lipschitz: Lipschitz::unknown(),
        }
    }

    pub fn linear_least_squares(feature_dim: usize) -> Self {
        Self::new(LossKind::LinearLeastSquares, feature_dim)
    }

    pub fn logistic(feature_dim: usize) -> Self {
        Self::new(LossKind::Logistic, feature_dim)
    }

    pub fn softmax(feature_dim: usize, classes: usize) -> Self {
        Self::new(LossKind::Softmax { classes }, feature_dim)
    }

    pub fn tiny_mlp(feature_dim: usize, hidden: usize) -> Self {
        Self::new(LossKind::TinyMlp { hidden }, feature_dim)
    }

    pub fn with_lipschitz(mut self, lipschitz: Lipschitz<F>) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    fn mlp_forward(&self, hidden: usize, theta: &[F], x: &[F]) -> MlpForward<F> {
        let d = self.feature_dim;
        let (w1, rest) = theta.split_at(hidden * d);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(hidden);
        let pre: Vec<F> = (0..hidden)
            .map(|j| dot(&w1[j * d..(j + 1) * d], x) + b1[j])
            .collect();
        let act: Vec<F> = pre.iter().map(|&a| softplus(a)).collect();
        let score = dot(w2, &act) + b2[0];
        MlpForward { pre, act, score }
    }

    fn softmax_probs(&self, classes: usize, theta: &[F], x: &[F]) -> Vec<F> {
        let d = self.feature_dim;
        let scores: Vec<F> = (0..classes)
            .map(|c| dot(&theta[c * d..(c + 1) * d], x))
            .collect();
        let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
        let exps: Vec<F> = scores.iter().map(|&s| (s - max).exp()).collect();
        let total: F = exps.iter().copied().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}

struct MlpForward<F> {
    pre: Vec<F>,
    act: Vec<F>,
    score: F,
}

fn class_index<F: Scalar>(y: F) -> usize {
    y.to_usize().unwrap_or(0)
}

impl<F: Scalar> Loss<F> for LossModel<F> {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn weights_dim(&self) -> usize {
        let d = self.feature_dim;
        match self.kind {
            LossKind::LinearLeastSquares | LossKind::Logistic => d,
            LossKind::Softmax { classes } => classes * d,
            LossKind::TinyMlp { hidden } => hidden * d + 2 * hidden + 1,
        }
    }

    fn loss(&self, theta: &[F], x: &[F], y: F) -> F {
        match self.kind {
            LossKind::LinearLeastSquares => {
                let r = dot(theta, x) - y;
                F::of(0.5) * r * r
            }
            LossKind::Logistic => {
                let s = dot(theta, x);
                softplus(s) - y * s
            }
            LossKind::Softmax { classes } => {
                let d = self.feature_dim;
                let scores: Vec<F> = (0..classes)
                    .map(|c| dot(&theta[c * d..(c + 1) * d], x))
                    .collect();
                let max = scores.iter().copied().fold(F::neg_infinity(), F::max);
                let lse = max + scores.iter().map(|&s| (s - max).exp()).sum::<F>().ln();
                (lse - scores[class_index(y)]).max(F::zero())
            }
            LossKind::TinyMlp { hidden } => {
                let s = self.mlp_forward(hidden, theta, x).score;
                softplus(s) - y * s
            }
        }
    }

    fn grad_theta(&self, theta: &[F], x: &[F], y: F) -> Vec<F> {
        match self.kind {
            LossKind::LinearLeastSquares => {
                let r = dot(theta, x) - y;
                x.iter().map(|&xi| r * xi).collect()
            }
            LossKind::Logistic => {
                let r = sigmoid(dot(theta, x)) - y;
                x.iter().map(|&xi| r * xi).collect()
            }
            LossKind::Softmax { classes } => {
                let d = self.feature_dim;
                let mut p = self.softmax_probs(classes, theta, x);
                p[class_index(y)] = p[class_index(y)] - F::one();
                let mut g = Vec::with_capacity(classes * d);
                for pc in p {
                    g.extend(x.iter().map(|&xi| pc * xi));
                }
                g
            }
            LossKind::TinyMlp { hidden } => {
                let d = self.feature_dim;
                let fwd = self.mlp_forward(hidden, theta, x);
                let r = sigmoid(fwd.score) - y;
                let w2 = &theta[hidden * d + hidden..hidden * d + 2 * hidden];
                let mut g = vec![F::zero(); self.weights_dim()];
                for j in 0..hidden {
                    let da = r * w2[j] * sigmoid(fwd.pre[j]);
                    for (gi, &xi) in g[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gi = da * xi;
                    }
                    g[hidden * d + j] = da;
                    g[hidden * d + hidden + j] = r * fwd.act[j];
                }
                g[hidden * d + 2 * hidden] = r;
                g
            }
        }
    }

    fn grad_features(&self, theta: &[F], x: &[F], y: F) -> Vec<F> {
        match self.kind {
            LossKind::LinearLeastSquares => {
                let r = dot(theta, x) - y;
                theta.iter().map(|&t| r * t).collect()
            }
            LossKind::Logistic => {
                let r = sigmoid(dot(theta, x)) - y;
                theta.iter().map(|&t| r * t).collect()
            }
            LossKind::Softmax { classes } => {
                let d = self.feature_dim;
                let mut p = self.softmax_probs(classes, theta, x);
                p[class_index(y)] = p[class_index(y)] - F::one();
                let mut g = vec![F::zero(); d];
                for (c, pc) in p.into_iter().enumerate() {
                    for (gi, &w) in g.iter_mut().zip(&theta[c * d..(c + 1) * d]) {
                        *gi = *gi + pc * w;
                    }
                }
                g
            }
            LossKind::TinyMlp { hidden } => {
                let d = self.feature_dim;
                let fwd = self.mlp_forward(hidden, theta, x);
                let r = sigmoid(fwd.score) - y;
                let w2 = &theta[hidden * d + hidden..hidden * d + 2 * hidden];
                let mut g = vec![F::zero(); d];
                for j in 0..hidden {
                    let da = r * w2[j] * sigmoid(fwd.pre[j]);
                    for (gi, &w) in g.iter_mut().zip(&theta[j * d..(j + 1) * d]) {
                        *gi = *gi + da * w;
                    }
                }
                g
            }
        }
    }

    fn lipschitz(&self) -> Lipschitz<F> {
        self.lipschitz
    }

    fn feature_curvature(&self, theta: &[F]) -> Option<F> {
        match self.kind {
            LossKind::LinearLeastSquares => Some(norm2_sq(theta)),
            LossKind::Logistic => Some(F::of(0.25) * norm2_sq(theta)),
            // Hessian W'(diag p - pp')W and |diag p - pp'| <= 1/2.
            LossKind::Softmax { .. } => Some(F::of(0.5) * norm2_sq(theta)),
            LossKind::TinyMlp { .. } => None,
        }
    }

    fn predict(&self, theta: &[F], x: &[F]) -> Option<usize> {
        match self.kind {
            LossKind::LinearLeastSquares => None,
            LossKind::Logistic => Some(usize::from(dot(theta, x) > F::zero())),
            LossKind::Softmax { classes } => {
                let d = self.feature_dim;
                let mut best = 0;
                let mut best_score = F::neg_infinity();
                for c in 0..classes {
                    let s = dot(&theta[c * d..(c + 1) * d], x);
                    if s > best_score {
                        best = c;
                        best_score = s;
                    }
                }
                Some(best)
            }
            LossKind::TinyMlp { hidden } => {
                Some(usize::from(self.mlp_forward(hidden, theta, x).score > F::zero()))
            }
        }
    }

    fn is_classifier(&self) -> bool {
        !matches!(self.kind, LossKind::LinearLeastSquares)
    }
}

fn check_shapes<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
) -> Result<()> {
    params.check_dim(model.weights_dim())?;
    if z.x.len() != model.feature_dim() {
        return Err(Error::DimensionMismatch {
            what: "features",
            expected: model.feature_dim(),
            got: z.x.len(),
        });
    }
    Ok(())
}

/// Loss of the model at `params` on datum `z`, with shape validation.
pub fn loss<F: Scalar, L: Loss<F> + ?Sized>(model: &L, params: &ModelParams<F>, z: &Datum<F>) -> Result<F> {
    check_shapes(model, params, z)?;
    Ok(model.loss(&params.theta, &z.x, z.y))
}

pub fn grad_theta<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
) -> Result<Vec<F>> {
    check_shapes(model, params, z)?;
    Ok(model.grad_theta(&params.theta, &z.x, z.y))
}

pub fn grad_features<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    z: &Datum<F>,
) -> Result<Vec<F>> {
    check_shapes(model, params, z)?;
    Ok(model.grad_features(&params.theta, &z.x, z.y))
}
