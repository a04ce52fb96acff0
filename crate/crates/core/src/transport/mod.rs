//! Transportation costs, finite-support distributions and exact discrete
//! optimal transport.
//!
//! The linear programs solved here are small by construction; they exist to
//! certify the dual machinery in [`crate::robust`] on instances where the
//! primal problem can be written down exactly.

mod cost;
mod distribution;
pub mod simplex;

pub use cost::{CostKind, TransportCost};
pub use distribution::{Atom, Coupling, DiscreteDistribution};

use crate::error::{Error, Result};
use crate::model::{Datum, Loss, ModelParams};
use crate::scalar::Scalar;
use simplex::{LinearProgram, Relation};

/// Largest support accepted by [`wasserstein`] on either side.
pub const MAX_SUPPORT: usize = 64;
/// Largest `atoms x candidates` product accepted by [`worst_case_primal`].
pub const MAX_PRIMAL_VARS: usize = 4096;

/// Optimal transport cost `W_c(P, Q)` together with an optimal plan.
pub fn optimal_coupling<F: Scalar>(
    p: &DiscreteDistribution<F>,
    q: &DiscreteDistribution<F>,
    c: &TransportCost<F>,
) -> Result<(F, Coupling<F>)> {
    if p.len() > MAX_SUPPORT || q.len() > MAX_SUPPORT {
        return Err(Error::Validation(format!(
            "supports of size {} and {} exceed the exact-solver limit of {MAX_SUPPORT}",
            p.len(),
            q.len()
        )));
    }
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            what: "transport atoms",
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let (n, m) = (p.len(), q.len());
    let costs: Vec<F> = p
        .atoms()
        .iter()
        .flat_map(|a| q.atoms().iter().map(move |b| c.cost(a, b)))
        .collect();
    let mut lp = LinearProgram::minimize(costs.clone());
    for i in 0..n {
        let mut row = vec![F::zero(); n * m];
        row[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = F::one());
        lp.constraint(row, Relation::Eq, p.weights()[i]);
    }
    for j in 0..m {
        let mut row = vec![F::zero(); n * m];
        (0..n).for_each(|i| row[i * m + j] = F::one());
        lp.constraint(row, Relation::Eq, q.weights()[j]);
    }
    let sol = lp.solve()?;
    let coupling = Coupling {
        rows: n,
        cols: m,
        matrix: sol.x,
    };
    let value = coupling
        .matrix
        .iter()
        .zip(&costs)
        .fold(F::zero(), |a, (&x, &k)| a + x * k);
    Ok((value, coupling))
}

/// `W_c(P, Q) = min_pi E_pi[c]`, solved exactly.
pub fn wasserstein<F: Scalar>(
    p: &DiscreteDistribution<F>,
    q: &DiscreteDistribution<F>,
    c: &TransportCost<F>,
) -> Result<F> {
    optimal_coupling(p, q, c).map(|(v, _)| v)
}

/// Exact solution of the worst-case expected loss over the Wasserstein ball
/// of radius `rho` around `p0`, restricted to distributions supported on
/// `grid` (labels travel with their source atom).
#[derive(Debug, Clone)]
pub struct WorstCase<F> {
    pub value: F,
    /// Worst-case distribution over perturbed data `(zeta_j, y_i)`.
    pub marginal: DiscreteDistribution<F, Datum<F>>,
    /// Plan from the atoms of `p0` (rows) to the grid candidates (columns).
    pub coupling: Coupling<F>,
}

pub fn worst_case_primal<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    p0: &DiscreteDistribution<F, Datum<F>>,
    grid: &[Vec<F>],
    rho: F,
    c: &TransportCost<F>,
) -> Result<WorstCase<F>> {
    let (n, m) = (p0.len(), grid.len());
    if n * m > MAX_PRIMAL_VARS || m == 0 {
        return Err(Error::Validation(format!(
            "primal LP with {n} atoms x {m} candidates outside 1..={MAX_PRIMAL_VARS} variables"
        )));
    }
    params.check_dim(model.weights_dim())?;
    if let Some(bad) = grid.iter().position(|g| g.len() != p0.dim()) {
        return Err(Error::DimensionMismatch {
            what: "grid candidate",
            expected: p0.dim(),
            got: grid[bad].len(),
        });
    }
    let mut losses = Vec::with_capacity(n * m);
    let mut costs = Vec::with_capacity(n * m);
    for z in p0.atoms() {
        for zeta in grid {
            losses.push(model.loss(&params.theta, zeta, z.y));
            costs.push(c.cost(&z.x, zeta));
        }
    }
    let mut lp = LinearProgram::maximize(losses.clone());
    for i in 0..n {
        let mut row = vec![F::zero(); n * m];
        row[i * m..(i + 1) * m].iter_mut().for_each(|v| *v = F::one());
        lp.constraint(row, Relation::Eq, p0.weights()[i]);
    }
    lp.constraint(costs, Relation::Le, rho);
    let sol = lp
        .solve()
        .map_err(|e| Error::Solver(format!("worst-case primal: {e}")))?;

    let tol = F::solver_tol();
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for (i, z) in p0.atoms().iter().enumerate() {
        for (j, zeta) in grid.iter().enumerate() {
            let w = sol.x[i * m + j];
            if w > tol {
                atoms.push(z.with_features(zeta.clone()));
                weights.push(w);
            }
        }
    }
    let total: F = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w = *w / total);
    let value = sol
        .x
        .iter()
        .zip(&losses)
        .fold(F::zero(), |a, (&x, &l)| a + x * l);
    Ok(WorstCase {
        value,
        marginal: DiscreteDistribution::new(atoms, weights)?,
        coupling: Coupling {
            rows: n,
            cols: m,
            matrix: sol.x,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LossModel;

    fn dist(points: &[f64], w: &[f64]) -> DiscreteDistribution<f64> {
        DiscreteDistribution::new(points.iter().map(|&p| vec![p]).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn identical_and_point_masses() {
        let c = TransportCost::squared_l2(10.0);
        let p = dist(&[0.0, 1.0, 3.0], &[0.2, 0.5, 0.3]);
        assert!(wasserstein(&p, &p, &c).unwrap().abs() < 1e-12);
        let a = dist(&[0.0], &[1.0]);
        let b = dist(&[2.0], &[1.0]);
        assert!((wasserstein(&a, &b, &c).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_has_requested_marginals() {
        let c = TransportCost::squared_l2(10.0);
        let p = dist(&[0.0, 1.0], &[0.5, 0.5]);
        let q = dist(&[0.0, 1.0, 2.0], &[0.25, 0.5, 0.25]);
        let (_, plan) = optimal_coupling(&p, &q, &c).unwrap();
        plan.check_marginals(p.weights(), q.weights()).unwrap();
    }

    #[test]
    fn oversized_support_is_rejected() {
        let atoms: Vec<f64> = (0..65).map(f64::from).collect();
        let p = DiscreteDistribution::uniform(atoms.iter().map(|&a| vec![a]).collect()).unwrap();
        let c = TransportCost::squared_l2(100.0);
        assert!(matches!(wasserstein(&p, &p, &c), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_radius_gives_empirical_loss() {
        let model = LossModel::<f64>::logistic(1);
        let params = ModelParams::new(vec![1.5], 0.0);
        let data = vec![Datum::new(vec![0.5], 1.0), Datum::new(vec![-0.2], 0.0)];
        let p0 = DiscreteDistribution::new(data.clone(), vec![0.4, 0.6]).unwrap();
        let grid = vec![vec![0.5], vec![-0.2], vec![1.0], vec![-1.0]];
        let c = TransportCost::squared_l2(4.0);
        let wc = worst_case_primal(&model, &params, &p0, &grid, 0.0, &c).unwrap();
        let emp = p0.expectation(|z| model.loss(&params.theta, &z.x, z.y));
        assert!((wc.value - emp).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_is_radius_independent() {
        // theta = 0 makes the logistic loss identically log 2
        let model = LossModel::logistic(2);
        let params = ModelParams::new(vec![0.0, 0.0], 0.0);
        let data = vec![Datum::new(vec![0.0, 0.0], 1.0)];
        let p0 = DiscreteDistribution::uniform(data).unwrap();
        let grid = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0]];
        let c = TransportCost::squared_l2(4.0);
        for rho in [0.0, 0.3, 5.0] {
            let wc = worst_case_primal(&model, &params, &p0, &grid, rho, &c).unwrap();
            assert!((wc.value - std::f64::consts::LN_2).abs() < 1e-12);
        }
    }
}
