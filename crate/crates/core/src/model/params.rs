use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Augmented parameter `(theta, gamma)`: model weights plus the scalar dual
/// variable of the Wasserstein constraint.
///
/// The same container is used for gradients over the augmented parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub theta: Vec<F>,
    pub gamma: F,
}

impl<F: Scalar> ModelParams<F> {
    pub fn new(theta: Vec<F>, gamma: F) -> Self {
        Self { theta, gamma }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![F::zero(); dim], F::zero())
    }

    /// Number of model weights (excluding `gamma`).
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `theta` followed by `gamma`.
    pub fn to_flat(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(self.theta.len() + 1);
        v.extend_from_slice(&self.theta);
        v.push(self.gamma);
        v
    }

    pub fn from_flat(flat: &[F]) -> Result<Self> {
        match flat.split_last() {
            Some((&gamma, theta)) => Ok(Self::new(theta.to_vec(), gamma)),
            None => Err(Error::config("flat parameter vector must hold at least gamma")),
        }
    }

    pub fn norm(&self) -> F {
        (crate::scalar::norm2_sq(&self.theta) + self.gamma * self.gamma).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.is_finite() && self.theta.iter().all(|v| v.is_finite())
    }

    /// `self + scale * other`, blockwise.
    pub fn axpy(&self, scale: F, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            theta: self
                .theta
                .iter()
                .zip(&other.theta)
                .map(|(&a, &b)| a + scale * b)
                .collect(),
            gamma: self.gamma + scale * other.gamma,
        }
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<()> {
        if self.theta.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected,
                got: self.theta.len(),
            });
        }
        Ok(())
    }
}

/// A feature/label pair `z = (x, y)`.
///
/// Classification labels are stored as small non-negative integers in the
/// scalar type; regression targets are arbitrary reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Datum<F> {
    pub x: Vec<F>,
    pub y: F,
}

impl<F: Scalar> Datum<F> {
    pub fn new(x: Vec<F>, y: F) -> Self {
        Self { x, y }
    }

    /// Same label, new features. Perturbations never touch the label.
    pub fn with_features(&self, x: Vec<F>) -> Self {
        Self { x, y: self.y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Label as a class index, if it is a non-negative integer.
    pub fn class(&self) -> Option<usize> {
        let y = self.y.to_f64_lossy();
        if y >= 0.0 && y.fract() == 0.0 {
            Some(y as usize)
        } else {
            None
        }
    }
}
