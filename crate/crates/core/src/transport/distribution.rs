use crate::error::{Error, Result};
use crate::model::Datum;
use crate::scalar::Scalar;

/// Anything with a dimension that can be an atom of a finite distribution.
pub trait Atom {
    fn dim(&self) -> usize;
}

impl<F> Atom for Vec<F> {
    fn dim(&self) -> usize {
        self.len()
    }
}

impl<F> Atom for Datum<F> {
    fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Finite-support probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution<F, P = Vec<F>> {
    atoms: Vec<P>,
    weights: Vec<F>,
}

impl<F: Scalar, P: Atom> DiscreteDistribution<F, P> {
    pub fn new(atoms: Vec<P>, weights: Vec<F>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Validation("distribution needs at least one atom".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::Validation(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].dim();
        if let Some(bad) = atoms.iter().position(|a| a.dim() != dim) {
            return Err(Error::Validation(format!(
                "atom {bad} has dimension {}, expected {dim}",
                atoms[bad].dim()
            )));
        }
        if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w >= F::zero())) {
            return Err(Error::Validation(format!("weight {bad} is negative or not finite")));
        }
        let total: F = weights.iter().copied().sum();
        let tol = F::of(1e-12).max(F::epsilon() * F::of_usize(4 * weights.len()));
        if (total - F::one()).abs() > tol {
            return Err(Error::Validation(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Equal weights on every atom.
    pub fn uniform(atoms: Vec<P>) -> Result<Self> {
        let n = atoms.len().max(1);
        let w = F::one() / F::of_usize(n);
        Self::new(atoms, vec![w; n])
    }

    pub fn atoms(&self) -> &[P] {
        &self.atoms
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// `sum_i w_i f(atom_i)`, summed in atom order.
    pub fn expectation(&self, mut f: impl FnMut(&P) -> F) -> F {
        self.atoms
            .iter()
            .zip(&self.weights)
            .fold(F::zero(), |acc, (a, &w)| acc + w * f(a))
    }
}

/// Transport plan between two finite distributions, row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<F> {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<F>,
}

impl<F: Scalar> Coupling<F> {
    pub fn get(&self, i: usize, j: usize) -> F {
        self.matrix[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<F> {
        self.matrix.chunks(self.cols).map(|r| r.iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<F> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Checks nonnegativity and that the marginals match within `1e-9`.
    pub fn check_marginals(&self, row_weights: &[F], col_weights: &[F]) -> Result<()> {
        let tol = F::of(1e-9);
        if self.matrix.iter().any(|&v| v < -tol) {
            return Err(Error::Validation("coupling has negative mass".into()));
        }
        for (i, (s, w)) in self.row_sums().iter().zip(row_weights).enumerate() {
            if (*s - *w).abs() > tol {
                return Err(Error::Validation(format!("row {i} sums to {s}, expected {w}")));
            }
        }
        for (j, (s, w)) in self.col_sums().iter().zip(col_weights).enumerate() {
            if (*s - *w).abs() > tol {
                return Err(Error::Validation(format!("column {j} sums to {s}, expected {w}")));
            }
        }
        Ok(())
    }
}
