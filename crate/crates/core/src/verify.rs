//! Self-checks used by the command-line tool: strong duality on random
//! finite-support instances and finite-difference gradient checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{Datum, Loss, LossModel, ModelParams};
use crate::rng::rng_for;
use crate::robust::{dual_objective_weighted, GammaChoice, InnerSolver, RobustConfig};
use crate::transport::{worst_case_primal, DiscreteDistribution, TransportCost};

/// Largest gap between the minimized dual and the exact primal.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityReport {
    pub instances: usize,
    pub max_gap: f64,
    pub worst_instance: usize,
}

/// One random verification instance: up to 6 atoms in up to 3 dimensions,
/// logistic or least-squares loss, squared-l2 cost, and a candidate grid
/// containing the atoms.
#[derive(Debug, Clone)]
pub struct DualityInstance {
    pub model: LossModel<f64>,
    pub params: ModelParams<f64>,
    pub p0: DiscreteDistribution<f64, Datum<f64>>,
    pub grid: Vec<Vec<f64>>,
    pub rho: f64,
    pub cost: TransportCost<f64>,
}

fn point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

impl DualityInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=3);
        let logistic = rng.random_bool(0.5);
        let model = if logistic {
            LossModel::logistic(d)
        } else {
            LossModel::linear_least_squares(d)
        };
        let atoms: Vec<Datum<f64>> = (0..n)
            .map(|_| {
                let y = if logistic {
                    f64::from(u8::from(rng.random_bool(0.5)))
                } else {
                    rng.random_range(-1.0..1.0)
                };
                Datum::new(point(rng, d, 1.0), y)
            })
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - head;
        let mut grid: Vec<Vec<f64>> = atoms.iter().map(|a| a.x.clone()).collect();
        let extra = rng.random_range(4..=12);
        grid.extend((0..extra).map(|_| point(rng, d, 1.5)));
        Ok(Self {
            model,
            params: ModelParams::new(point(rng, d, 1.0), 0.0),
            p0: DiscreteDistribution::new(atoms, weights)?,
            grid,
            rho: rng.random_range(0.05..2.0),
            cost: TransportCost::squared_l2(6.0),
        })
    }

    /// Upper end of a dual search interval that contains a minimizer: beyond
    /// `spread / c_min` every candidate other than the atom itself is
    /// dominated.
    pub fn gamma_cap(&self) -> f64 {
        let mut lmin = f64::INFINITY;
        let mut lmax = f64::NEG_INFINITY;
        let mut cmin = f64::INFINITY;
        for z in self.p0.atoms() {
            for g in &self.grid {
                let l = self.model.loss(&self.params.theta, g, z.y);
                lmin = lmin.min(l);
                lmax = lmax.max(l);
                let c = self.cost.cost(&z.x, g);
                if c > 0.0 {
                    cmin = cmin.min(c);
                }
            }
        }
        (lmax - lmin) / cmin + 1.0
    }

    /// `(dual, primal)`.
    pub fn values(&self) -> Result<(f64, f64)> {
        let primal = worst_case_primal(&self.model, &self.params, &self.p0, &self.grid, self.rho, &self.cost)?;
        let cfg = RobustConfig::new(self.rho, 0.0);
        let dual = dual_objective_weighted(
            &self.model,
            &self.params.theta,
            GammaChoice::Search {
                lo: 0.0,
                hi: self.gamma_cap(),
            },
            &self.p0,
            &cfg,
            &self.cost,
            InnerSolver::Grid(&self.grid),
        )?;
        Ok((dual.value, primal.value))
    }
}

pub fn duality_check(instances: usize, seed: u64) -> Result<DualityReport> {
    let mut rng = rng_for(seed, 0xD0A1);
    let mut report = DualityReport {
        instances,
        max_gap: 0.0,
        worst_instance: 0,
    };
    for i in 0..instances {
        let (dual, primal) = DualityInstance::random(&mut rng)?.values()?;
        let gap = (dual - primal).abs();
        if gap > report.max_gap {
            report.max_gap = gap;
            report.worst_instance = i;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checks: usize,
    /// Human-readable descriptions of coordinates outside tolerance.
    pub failures: Vec<String>,
    pub max_error: f64,
}

/// Central differences with step `1e-6` on every model family; a coordinate
/// passes when `|fd - analytic| <= 1e-6 + 1e-5 |analytic|`.
pub fn grad_check(trials: usize, seed: u64) -> GradCheckReport {
    let mut rng = rng_for(seed, 0x6AD);
    let models: Vec<(&str, LossModel<f64>)> = vec![
        ("linear", LossModel::linear_least_squares(3)),
        ("logistic", LossModel::logistic(3)),
        ("softmax", LossModel::softmax(3, 3)),
        ("mlp", LossModel::tiny_mlp(3, 4)),
    ];
    let mut report = GradCheckReport {
        checks: 0,
        failures: Vec::new(),
        max_error: 0.0,
    };
    const H: f64 = 1e-6;
    for t in 0..trials {
        for (name, m) in &models {
            let theta = point(&mut rng, m.weights_dim(), 1.0);
            let x = point(&mut rng, 3, 1.0);
            let y = match m.kind {
                crate::model::LossKind::LinearLeastSquares => rng.random_range(-1.0..1.0),
                crate::model::LossKind::Softmax { classes } => rng.random_range(0..classes) as f64,
                _ => f64::from(u8::from(rng.random_bool(0.5))),
            };
            let blocks = [
                ("theta", m.grad_theta(&theta, &x, y), theta.clone(), true),
                ("x", m.grad_features(&theta, &x, y), x.clone(), false),
            ];
            for (block, analytic, base, is_theta) in blocks {
                for i in 0..base.len() {
                    let mut up = base.clone();
                    let mut dn = base.clone();
                    up[i] += H;
                    dn[i] -= H;
                    let (fu, fd) = if is_theta {
                        (m.loss(&up, &x, y), m.loss(&dn, &x, y))
                    } else {
                        (m.loss(&theta, &up, y), m.loss(&theta, &dn, y))
                    };
                    let fdiff = (fu - fd) / (2.0 * H);
                    let err = (fdiff - analytic[i]).abs();
                    report.checks += 1;
                    report.max_error = report.max_error.max(err);
                    if err > 1e-6 + 1e-5 * analytic[i].abs() {
                        report.failures.push(format!(
                            "trial {t}, {name}, d/d{block}[{i}]: analytic {} vs fd {fdiff}",
                            analytic[i]
                        ));
                    }
                }
            }
        }
    }
    report
}
