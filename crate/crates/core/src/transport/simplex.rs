//! Dense two-phase tableau simplex for the small linear programs behind the
//! exact transport oracles.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `maximize c'x` subject to the rows and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<F> {
    objective: Vec<F>,
    rows: Vec<(Vec<F>, Relation, F)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution<F> {
    pub value: F,
    pub x: Vec<F>,
}

impl<F: Scalar> LinearProgram<F> {
    pub fn maximize(objective: Vec<F>) -> Self {
        Self {
            objective,
            rows: Vec::new(),
        }
    }

    pub fn minimize(objective: Vec<F>) -> Self {
        Self::maximize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constraint(&mut self, coeffs: Vec<F>, rel: Relation, rhs: F) -> &mut Self {
        assert_eq!(coeffs.len(), self.objective.len(), "constraint width");
        self.rows.push((coeffs, rel, rhs));
        self
    }

    /// Solves the program. The returned value is for the maximization form;
    /// callers that built a `minimize` program negate it.
    pub fn solve(&self) -> Result<LpSolution<F>> {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau<F> {
    m: usize,
    /// structural + slack/surplus + artificial columns
    width: usize,
    n_struct: usize,
    first_artificial: usize,
    data: Vec<F>,
    rhs: Vec<F>,
    basis: Vec<usize>,
    active: Vec<bool>,
}

impl<F: Scalar> Tableau<F> {
    fn build(lp: &LinearProgram<F>) -> Self {
        let m = lp.rows.len();
        let n = lp.objective.len();
        let n_slack = lp.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        // Every row gets an artificial; Le rows with b >= 0 use their slack instead.
        let first_artificial = n + n_slack;
        let width = first_artificial + m;
        let mut data = vec![F::zero(); m * width];
        let mut rhs = vec![F::zero(); m];
        let mut basis = vec![0; m];
        let mut slack = n;
        for (i, (coeffs, rel, b)) in lp.rows.iter().enumerate() {
            let flip = *b < F::zero();
            let sgn = if flip { -F::one() } else { F::one() };
            let row = &mut data[i * width..(i + 1) * width];
            for (dst, &c) in row.iter_mut().zip(coeffs) {
                *dst = sgn * c;
            }
            rhs[i] = sgn * *b;
            let rel = match (rel, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => *r,
            };
            match rel {
                Relation::Le => {
                    row[slack] = F::one();
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -F::one();
                    slack += 1;
                    row[first_artificial + i] = F::one();
                    basis[i] = first_artificial + i;
                }
                Relation::Eq => {
                    row[first_artificial + i] = F::one();
                    basis[i] = first_artificial + i;
                }
            }
        }
        Self {
            m,
            width,
            n_struct: n,
            first_artificial,
            data,
            rhs,
            basis,
            active: vec![true; m],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> F {
        self.data[i * self.width + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for j in 0..w {
            self.data[r * w + j] = self.data[r * w + j] / p;
        }
        self.rhs[r] = self.rhs[r] / p;
        for i in 0..self.m {
            if i == r || !self.active[i] {
                continue;
            }
            let f = self.at(i, c);
            if f == F::zero() {
                continue;
            }
            for j in 0..w {
                let v = self.data[r * w + j];
                if v != F::zero() {
                    self.data[i * w + j] = self.data[i * w + j] - f * v;
                }
            }
            self.rhs[i] = self.rhs[i] - f * self.rhs[r];
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost . x` over the current tableau restricted to columns
    /// `< allowed`. Returns the objective value.
    fn optimize(&mut self, cost: &[F], allowed: usize) -> Result<F> {
        let tol = F::solver_tol();
        let max_iters = 50 * (self.width + self.m) + 1000;
        let mut stall = 0usize;
        let mut last_value = F::neg_infinity();
        for _ in 0..max_iters {
            // reduced costs d_j = c_j - c_B B^-1 A_j
            let mut enter = None;
            let mut best = tol;
            let bland = stall > 50;
            let mut basic = vec![false; self.width];
            for i in (0..self.m).filter(|&i| self.active[i]) {
                basic[self.basis[i]] = true;
            }
            for j in 0..allowed {
                if basic[j] {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.m {
                    if self.active[i] {
                        let a = self.at(i, j);
                        if a != F::zero() {
                            d = d - cost[self.basis[i]] * a;
                        }
                    }
                }
                if d > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Ok(self.value(cost));
            };
            let mut leave: Option<(usize, F)> = None;
            for i in 0..self.m {
                if !self.active[i] {
                    continue;
                }
                let a = self.at(i, c);
                if a > tol {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - tol || ((ratio - lr).abs() <= tol && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Solver("linear program is unbounded".into()));
            };
            self.pivot(r, c);
            let v = self.value(cost);
            if v > last_value + tol {
                stall = 0;
                last_value = v;
            } else {
                stall += 1;
            }
        }
        Err(Error::Solver("simplex iteration limit reached".into()))
    }

    fn value(&self, cost: &[F]) -> F {
        (0..self.m)
            .filter(|&i| self.active[i])
            .fold(F::zero(), |acc, i| acc + cost[self.basis[i]] * self.rhs[i])
    }

    fn run(mut self, objective: &[F]) -> Result<LpSolution<F>> {
        let tol = F::solver_tol();
        // Phase 1: maximize -sum(artificials).
        let mut phase1 = vec![F::zero(); self.width];
        for c in &mut phase1[self.first_artificial..] {
            *c = -F::one();
        }
        let infeas = -self.optimize(&phase1, self.width)?;
        let scale = self.rhs.iter().fold(F::one(), |a, &b| a.max(b.abs()));
        if infeas > tol * scale * F::of(100.0) {
            return Err(Error::Solver(format!("linear program is infeasible (residual {infeas})")));
        }
        // Drive remaining artificials out of the basis or drop redundant rows.
        for r in 0..self.m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let col = (0..self.first_artificial).find(|&j| self.at(r, j).abs() > tol);
            match col {
                Some(c) => self.pivot(r, c),
                None => self.active[r] = false,
            }
        }
        let mut phase2 = vec![F::zero(); self.width];
        phase2[..self.n_struct].copy_from_slice(objective);
        let value = self.optimize(&phase2, self.first_artificial)?;
        let mut x = vec![F::zero(); self.n_struct];
        for i in 0..self.m {
            if self.active[i] && self.basis[i] < self.n_struct {
                x[self.basis[i]] = self.rhs[i].max(F::zero());
            }
        }
        Ok(LpSolution { value, x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = LinearProgram::<f64>::maximize(vec![3.0, 5.0]);
        lp.constraint(vec![1.0, 0.0], Relation::Le, 4.0)
            .constraint(vec![0.0, 2.0], Relation::Le, 12.0)
            .constraint(vec![3.0, 2.0], Relation::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!((s.value - 36.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y s.t. x + y = 2, x >= 0.5 (as Ge), y <= 1
        let mut lp = LinearProgram::<f64>::minimize(vec![1.0, 2.0]);
        lp.constraint(vec![1.0, 1.0], Relation::Eq, 2.0)
            .constraint(vec![1.0, 0.0], Relation::Ge, 0.5)
            .constraint(vec![0.0, 1.0], Relation::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((-s.value - 2.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::<f64>::maximize(vec![1.0]);
        lp.constraint(vec![1.0], Relation::Le, 1.0)
            .constraint(vec![1.0], Relation::Ge, 2.0);
        assert!(lp.solve().is_err());
        let mut lp = LinearProgram::<f64>::maximize(vec![1.0, 0.0]);
        lp.constraint(vec![0.0, 1.0], Relation::Le, 1.0);
        assert!(lp.solve().is_err());
    }

    #[test]
    fn redundant_equalities() {
        // 2x2 transport with a redundant marginal row
        let mut lp = LinearProgram::<f64>::minimize(vec![0.0, 1.0, 1.0, 0.0]);
        lp.constraint(vec![1.0, 1.0, 0.0, 0.0], Relation::Eq, 0.5)
            .constraint(vec![0.0, 0.0, 1.0, 1.0], Relation::Eq, 0.5)
            .constraint(vec![1.0, 0.0, 1.0, 0.0], Relation::Eq, 0.25)
            .constraint(vec![0.0, 1.0, 0.0, 1.0], Relation::Eq, 0.75);
        let s = lp.solve().unwrap();
        assert!((-s.value - 0.25).abs() < 1e-12);
    }
}
