//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line and
//! fails on `FAIL`.
//!
//! Run with `cargo test -p wassrobust --test acceptance -- --nocapture`.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use wassrobust::attacks::{attack, evaluate_under_attack, AttackConfig, AttackKind};
use wassrobust::data::{gen_synthetic, SyntheticKind};
use wassrobust::federated::{drfl_train, fedavg_train, partition, Drfl, PartitionScheme};
use wassrobust::model::{prox_augmented, Datum, Loss, LossModel, ModelParams, Regularizer};
use wassrobust::rng::rng_for;
use wassrobust::robust::{danskin_gradient, inner_max_oracle, robust_objective, stationarity_distance, RobustConfig};
use wassrobust::train::{
    initial_params, spgda_step, step, train, Algorithm, EvalHooks, Problem, TrainerConfig, TrainerState,
};
use wassrobust::transport::TransportCost;
use wassrobust::verify::DualityInstance;

fn report(id: usize, name: &str, pass: bool, detail: String) {
    println!("acceptance {id:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "acceptance {id} {name} failed: {detail}");
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-r..r)).collect();
        if norm(&v) <= r {
            return v;
        }
    }
}

#[test]
fn a01_strong_duality() {
    let start = Instant::now();
    let mut rng = rng_for(2024, 1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let inst = DualityInstance::random(&mut rng).unwrap();
        let (dual, primal) = inst.values().unwrap();
        worst = worst.max((dual - primal).abs());
    }
    let t = start.elapsed();
    report(
        1,
        "strong duality",
        worst <= 1e-6 && within(t, 30.0),
        format!("max |dual - primal| = {worst:e} over 100 instances, {t:.2?}"),
    );
}

#[test]
fn a02_danskin_gradient() {
    let start = Instant::now();
    let mut rng = rng_for(2024, 2);
    let c = TransportCost::squared_l2(4.0);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(1..=4);
        let m = LossModel::logistic(d);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let l_zz = 0.25 * theta.iter().map(|t| t * t).sum::<f64>();
        let gamma = 2.0 * l_zz / c.mu() + 1.0;
        let z = Datum::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), f64::from(u8::from(rng.random_bool(0.5))));
        let rho = rng.random_range(0.0..1.0);
        let cfg = RobustConfig::new(rho, 0.0).with_oracle(1e-15, 1.0 / (c.mu() * gamma + l_zz), 1_000_000);
        let p = ModelParams::new(theta, gamma);
        let analytic = danskin_gradient(&m, &p, &z, &cfg, &c).unwrap().to_flat();
        let value = |flat: &[f64]| {
            let q = ModelParams::from_flat(flat).unwrap();
            inner_max_oracle(&m, &q, &z, &cfg, &c).unwrap().psi_value
        };
        let at = p.to_flat();
        let fd: Vec<f64> = (0..at.len())
            .map(|i| {
                let (mut up, mut dn) = (at.clone(), at.clone());
                up[i] += h;
                dn[i] -= h;
                (value(&up) - value(&dn)) / (2.0 * h)
            })
            .collect();
        let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&fd));
    }
    let t = start.elapsed();
    report(
        2,
        "danskin gradient",
        worst <= 1e-4 && within(t, 10.0),
        format!("max relative error {worst:e} over 50 instances, {t:.2?}"),
    );
}

#[test]
fn a03_maximizer_lipschitz_bound() {
    // least squares with |theta| <= R, |x| <= dx, |y| <= ymax, gamma in [g0, g1]:
    // zeta* = (2 gamma I - theta theta')^-1 (2 gamma x - y theta), so with
    // lambda0 = 2 g0 - R^2 every maximizer has norm at most zmax
    let (r, dx, ymax, g0, g1) = (1.0, 1.0, 1.0, 1.0, 3.0);
    let c = TransportCost::squared_l2(4.0);
    let lambda0 = c.mu() * g0 - r * r;
    let zmax = (2.0 * g1 * dx + ymax * r) / lambda0;
    let l_ztheta = 2.0 * r * zmax + ymax;
    let l_c = 2.0 * (zmax + dx);
    let mut rng = rng_for(2024, 3);
    let (mut worst, mut violations) = (0.0f64, 0);
    for i in 0..200 {
        let d = rng.random_range(1..=3);
        let m = LossModel::linear_least_squares(d);
        let z = Datum::new(ball(&mut rng, d, dx), rng.random_range(-ymax..ymax));
        let p1 = ModelParams::new(ball(&mut rng, d, r), rng.random_range(g0..g1));
        // half the pairs are far apart, half are small perturbations
        let p2 = if i % 2 == 0 {
            ModelParams::new(ball(&mut rng, d, r), rng.random_range(g0..g1))
        } else {
            let scale = 10f64.powf(rng.random_range(-3.0..-1.0));
            let theta: Vec<f64> = p1.theta.iter().map(|t| t + scale * rng.random_range(-1.0..1.0)).collect();
            let theta = if norm(&theta) > r { p1.theta.clone() } else { theta };
            ModelParams::new(theta, (p1.gamma + scale * rng.random_range(-1.0..1.0)).clamp(g0, g1))
        };
        let cfg = RobustConfig::new(0.1, g0).with_oracle(1e-20, 1.0 / (c.mu() * g1 + r * r), 1_000_000);
        let z1 = inner_max_oracle(&m, &p1, &z, &cfg, &c).unwrap().zeta;
        let z2 = inner_max_oracle(&m, &p2, &z, &cfg, &c).unwrap().zeta;
        let lhs = norm(&z1.iter().zip(&z2).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dtheta = norm(&p1.theta.iter().zip(&p2.theta).map(|(a, b)| a - b).collect::<Vec<_>>());
        let rhs = l_ztheta / lambda0 * dtheta + l_c / lambda0 * (p1.gamma - p2.gamma).abs();
        if rhs == 0.0 {
            continue;
        }
        let ratio = lhs / rhs;
        worst = worst.max(ratio);
        if ratio > 1.05 {
            violations += 1;
        }
    }
    report(
        3,
        "maximizer lipschitz bound",
        violations == 0,
        format!("{violations} violations over 200 pairs, max ratio {worst:.4}"),
    );
}

/// Minimizer of `alpha r(u) + 0.5 (u - v)^2` over a grid of step `h` on the
/// interval between `v` and `lo`.
fn grid_argmin(r: impl Fn(f64) -> f64, alpha: f64, v: f64, lo: f64, h: f64) -> f64 {
    let (a, b) = (v.min(lo), v.max(lo));
    let n = ((b - a) / h).ceil() as usize;
    (0..=n)
        .map(|k| (a + k as f64 * h).min(b))
        .map(|u| (alpha * r(u) + 0.5 * (u - v) * (u - v), u))
        .fold((f64::INFINITY, a), |best, cur| if cur.0 < best.0 { cur } else { best })
        .1
}

#[test]
fn a04_prox_matches_grid_search() {
    let mut rng = rng_for(2024, 4);
    let (h, tol) = (1e-5, 1e-4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let v: f64 = rng.random_range(-3.0..3.0);
        let alpha: f64 = rng.random_range(0.01..2.0);
        let beta: f64 = rng.random_range(0.0..2.0);
        let gamma0: f64 = rng.random_range(-2.0..2.0);
        let l1 = Regularizer::L1 { beta }.prox(alpha, &[v])[0];
        let l2 = Regularizer::SquaredL2 { beta }.prox(alpha, &[v])[0];
        // the indicator of [gamma0, inf) acting on the dual block
        let ind = prox_augmented(&Regularizer::None, gamma0, alpha, &ModelParams::new(vec![], v)).gamma;
        let g1 = grid_argmin(|u| beta * u.abs(), alpha, v, 0.0, h);
        let g2 = grid_argmin(|u| beta * u * u, alpha, v, 0.0, h);
        let g3 = grid_argmin(|u| if u >= gamma0 { 0.0 } else { f64::INFINITY }, alpha, v, gamma0, h);
        worst = worst.max((l1 - g1).abs()).max((l2 - g2).abs()).max((ind - g3).abs());
    }
    report(
        4,
        "prox vs grid search",
        worst <= tol,
        format!("max deviation {worst:e} over 1000 inputs at grid step {h:e}"),
    );
}

/// Accuracy of the inner maximizations behind every reported objective.
const EVAL_EPS: f64 = 1e-14;

/// Shared setup of the convergence checks: a noisy two-gaussians logistic
/// task with a ridge penalty and a small radius, so that `gamma` settles on
/// its floor.
struct Setup {
    data: Vec<Datum<f64>>,
    model: LossModel<f64>,
    reg: Regularizer<f64>,
    cost: TransportCost<f64>,
}

impl Setup {
    fn new(seed: u64) -> Self {
        Self {
            data: gen_synthetic::<f64>(SyntheticKind::TwoGaussians, 200, 2, 0.5, seed).unwrap().data,
            model: LossModel::logistic(2),
            reg: Regularizer::SquaredL2 { beta: 0.01 },
            cost: TransportCost::squared_l2(2.0 * 2f64.sqrt()),
        }
    }

    fn problem(&self) -> Problem<'_, f64, LossModel<f64>> {
        Problem {
            data: &self.data,
            model: &self.model,
            reg: &self.reg,
            cost: &self.cost,
        }
    }

    fn config(&self, algorithm: Algorithm<f64>, seed: u64) -> TrainerConfig<f64> {
        let gamma0 = 50.0;
        let mut cfg = TrainerConfig::new(
            algorithm,
            RobustConfig::new(0.01, gamma0).with_oracle(1e-8, 0.9 / (2.0 * gamma0 + 1.0), 10_000),
        );
        cfg.alpha = 1.0;
        cfg.eta = 1.0 / (2.0 * gamma0);
        cfg.batch_size = self.data.len();
        cfg.seed = seed;
        cfg
    }

    /// Tightly evaluated full-batch objective.
    fn objective(&self, cfg: &TrainerConfig<f64>, p: &ModelParams<f64>) -> f64 {
        let rc = cfg.robust.with_oracle(EVAL_EPS, cfg.robust.oracle_step, 100_000);
        robust_objective(&self.model, p, &self.reg, &self.data, &rc, &self.cost).unwrap()
    }

    fn stationarity(&self, cfg: &TrainerConfig<f64>, p: &ModelParams<f64>) -> f64 {
        let rc = cfg.robust.with_oracle(EVAL_EPS, cfg.robust.oracle_step, 100_000);
        stationarity_distance(&self.model, p, &self.reg, &self.data, &rc, &self.cost).unwrap()
    }
}

#[test]
fn a05_spgda_converges() {
    let start = Instant::now();
    let s = Setup::new(5);
    let cfg = s.config(Algorithm::Spgda, 5);
    let problem = s.problem();
    let iters = 5000;
    let mut state = TrainerState::new(initial_params(2, &cfg), s.data.len(), cfg.seed);
    let mut objective = vec![s.objective(&cfg, &state.params)];
    let mut reached = None;
    while state.iteration < iters {
        spgda_step(&mut state, &problem, &cfg).unwrap();
        objective.push(s.objective(&cfg, &state.params));
        if reached.is_none() && state.iteration.is_multiple_of(50) && s.stationarity(&cfg, &state.params) <= 1e-3 {
            reached = Some(state.iteration);
        }
    }
    let final_stat = s.stationarity(&cfg, &state.params);
    // the 100-iteration moving average after a 10% burn-in steps from
    // window [i, i + 100) to [i + 1, i + 101) by (F[i + 100] - F[i]) / 100,
    // so it is non-increasing exactly when F[i + 100] <= F[i]. Each F is
    // known only to the evaluation oracle's accuracy, so smaller rises are
    // indistinguishable from ties.
    let window = 100;
    let burn = iters / 10;
    let rises = (burn..objective.len() - window)
        .filter(|&i| objective[i + window] > objective[i] + EVAL_EPS)
        .count();
    let t = start.elapsed();
    report(
        5,
        "spgda convergence",
        reached.is_some() && rises == 0 && within(t, 20.0),
        format!(
            "stationarity <= 1e-3 at iteration {reached:?}, final {final_stat:e}, {rises} rises of the smoothed objective, {t:.2?}"
        ),
    );
}

#[test]
fn a06_spgd_not_worse_than_spgda() {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..10 {
        let s = Setup::new(100 + seed);
        let problem = s.problem();
        let mut finals = Vec::new();
        for alg in [Algorithm::Spgd, Algorithm::Spgda] {
            let mut cfg = s.config(alg, seed);
            cfg.robust.oracle_eps = 1e-8;
            cfg.iters = 1000;
            let out = train(&problem, &cfg, &EvalHooks::disabled()).unwrap();
            finals.push(s.objective(&cfg, &out.params));
        }
        worst = worst.max(finals[0] - finals[1]);
    }
    report(
        6,
        "spgd vs spgda",
        worst <= 1e-3,
        format!("max F_spgd - F_spgda = {worst:e} over 10 seeds"),
    );
}

#[test]
fn a07_one_worker_drfl_is_spgda() {
    let s = Setup::new(7);
    let mut cfg = s.config(Algorithm::Spgda, 7);
    cfg.batch_size = 32;
    let problem = s.problem();
    let mut central = TrainerState::new(initial_params(2, &cfg), s.data.len(), cfg.seed);
    let mut fed = Drfl::new(vec![s.data.clone()], &s.model, &s.reg, &s.cost, &cfg).unwrap();
    let mut first_mismatch = (fed.server.params != central.params).then_some(0);
    for t in 1..=1000 {
        step(&mut central, &problem, &cfg).unwrap();
        fed.round().unwrap();
        let same = fed.server.params.theta.iter().zip(&central.params.theta).all(|(a, b)| a.to_bits() == b.to_bits())
            && fed.server.params.gamma.to_bits() == central.params.gamma.to_bits();
        if !same && first_mismatch.is_none() {
            first_mismatch = Some(t);
        }
    }
    report(
        7,
        "one-worker drfl equals spgda",
        first_mismatch.is_none(),
        format!("first differing round {first_mismatch:?} of 1000"),
    );
}

/// Noisy two-gaussians in five dimensions, small enough that unregularized
/// ERM overfits the direction of its separator.
fn gaussians(n: usize, seed: u64) -> Vec<Datum<f64>> {
    gen_synthetic::<f64>(SyntheticKind::TwoGaussians, n, 5, 0.7, seed).unwrap().data
}

/// SPGDA with `gamma0 = 0.25` and the matching ascent step `1 / (2 gamma0)`.
fn robust_config(algorithm: Algorithm<f64>, seed: u64, batch_size: usize, iters: usize) -> TrainerConfig<f64> {
    let gamma0 = 0.25;
    let mut cfg = TrainerConfig::new(algorithm, RobustConfig::new(0.1, gamma0));
    cfg.alpha = 1.0;
    cfg.eta = 1.0 / (2.0 * gamma0);
    cfg.batch_size = batch_size;
    cfg.iters = iters;
    cfg.seed = seed;
    cfg
}

fn pgd() -> AttackConfig<f64> {
    let mut a = AttackConfig::new(AttackKind::Pgd).with_eps(0.1);
    a.steps = 10;
    a
}

/// Attacked test error of ERM and SPGDA models trained on the same sample.
fn robustness_pair(seed: u64) -> (f64, f64) {
    let train_set = gaussians(20, seed);
    let test_set = gaussians(2000, seed + 1_000_000);
    let model = LossModel::logistic(5);
    let reg = Regularizer::None;
    let cost = TransportCost::squared_l2(2.0 * 5f64.sqrt());
    let problem = Problem {
        data: &train_set,
        model: &model,
        reg: &reg,
        cost: &cost,
    };
    let mut errs = [0.0; 2];
    for (slot, alg) in [Algorithm::Erm, Algorithm::Spgda].into_iter().enumerate() {
        let cfg = robust_config(alg, seed, train_set.len(), 5000);
        let out = train(&problem, &cfg, &EvalHooks::disabled()).unwrap();
        errs[slot] = evaluate_under_attack(&model, &out.params, &test_set, &pgd()).unwrap();
    }
    (errs[0], errs[1])
}

#[test]
fn a08_robust_training_beats_erm_under_pgd() {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 800..810 {
        let (erm, robust) = robustness_pair(seed);
        if robust < erm {
            wins += 1;
        }
        lines.push(format!("{erm:.3}/{robust:.3}"));
    }
    report(
        8,
        "robust training vs erm",
        wins >= 8,
        format!("spgda below erm in {wins}/10 seeds; erm/spgda attacked error {}", lines.join(" ")),
    );
}

/// Attacked test error of DRFL and federated averaging on a five-worker
/// one-class split.
fn federated_pair(seed: u64) -> (f64, f64) {
    let train_set = gaussians(20, seed);
    let test_set = gaussians(2000, seed + 1_000_000);
    let model = LossModel::logistic(5);
    let reg = Regularizer::None;
    let cost = TransportCost::squared_l2(2.0 * 5f64.sqrt());
    let shards = partition(&train_set, PartitionScheme::OneClass, 5, seed).unwrap();
    let (batch, rounds) = (4, 2000);
    let cfg = robust_config(Algorithm::Spgda, seed, batch, rounds);
    let drfl = drfl_train(shards.clone(), &model, &reg, &cost, &cfg, &EvalHooks::disabled()).unwrap();
    let erm = robust_config(Algorithm::Erm, seed, batch, rounds);
    let fedavg = fedavg_train(shards, &model, &reg, &cost, 1, &erm, &EvalHooks::disabled()).unwrap();
    (
        evaluate_under_attack(&model, &drfl.params, &test_set, &pgd()).unwrap(),
        evaluate_under_attack(&model, &fedavg.params, &test_set, &pgd()).unwrap(),
    )
}

#[test]
fn a09_drfl_not_worse_than_fedavg() {
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 900..910 {
        let (drfl, fedavg) = federated_pair(seed);
        if drfl <= fedavg {
            wins += 1;
        }
        lines.push(format!("{drfl:.3}/{fedavg:.3}"));
    }
    report(
        9,
        "drfl vs federated averaging",
        wins >= 8,
        format!("drfl at or below fedavg in {wins}/10 seeds; drfl/fedavg attacked error {}", lines.join(" ")),
    );
}

#[test]
fn a10_attack_budget_fuzz() {
    let mut rng = rng_for(2024, 10);
    let kinds = [AttackKind::Fgsm, AttackKind::Ifgsm, AttackKind::Pgd, AttackKind::Wrm];
    let (mut budget, mut clip, mut errors) = (0usize, 0usize, 0usize);
    let invocations = 100_000;
    for i in 0..invocations {
        let kind = kinds[i % kinds.len()];
        let d = rng.random_range(1..=6);
        // WRM needs a certifiably concave penalized problem, which the
        // logistic loss provides once mu gamma exceeds |theta|^2 / 4
        let model = if kind != AttackKind::Wrm && rng.random_bool(0.5) {
            LossModel::tiny_mlp(d, 2)
        } else {
            LossModel::logistic(d)
        };
        let theta: Vec<f64> = (0..model.weights_dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let l_zz = 0.25 * theta.iter().map(|t| t * t).sum::<f64>();
        let lo = rng.random_range(-2.0..0.5);
        let hi = lo + rng.random_range(1e-3..3.0);
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(lo..=hi)).collect();
        let eps = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.5) };
        let mut cfg = AttackConfig::new(kind).with_eps(eps).with_clip(lo, hi);
        cfg.steps = rng.random_range(1..=10);
        cfg.wrm_gamma = l_zz / 2.0 * rng.random_range(1.01..4.0) + rng.random_range(0.01..1.0);
        // an explicit WRM step beyond 1 / (2 gamma + L_zz) can make the ascent diverge,
        // which the attack reports as an error rather than returning a point
        let max_step = if kind == AttackKind::Wrm { 1.0 / (2.0 * cfg.wrm_gamma + l_zz) } else { 1.0 };
        cfg.step_size = rng.random_bool(0.5).then(|| rng.random_range(1e-3..max_step));
        let z = Datum::new(x, f64::from(u8::from(rng.random_bool(0.5))));
        match attack(&model, &ModelParams::new(theta, 0.0), &z, &cfg) {
            Ok(adv) => {
                // WRM carries no l-infinity budget, only the box
                if kind != AttackKind::Wrm && adv.iter().zip(&z.x).any(|(a, b)| (a - b).abs() > eps) {
                    budget += 1;
                }
                if adv.iter().any(|a| !(lo..=hi).contains(a)) {
                    clip += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    report(
        10,
        "attack budget fuzz",
        budget == 0 && clip == 0 && errors == 0,
        format!("{invocations} invocations: {budget} budget violations, {clip} clip violations, {errors} errors"),
    );
}
