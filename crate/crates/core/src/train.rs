//! Stochastic proximal training loops.
//!
//! * SPGD: each batch sample is pushed to an approximate worst case by the
//!   inner oracle, then one proximal step is taken on `(theta, gamma)`.
//! * SPGDA: a single ascent step replaces the oracle.
//! * ERM, adversarial training and WRM are the baselines; they update
//!   `theta` only.

use crate::attacks::{attack, AttackConfig};
use crate::error::{Error, Result};
use crate::model::{prox_augmented, Datum, Loss, ModelParams, Regularizer};
use crate::rng::{derive_seed, rng_for, worker_stream, BatchSampler, INIT_STREAM};
use crate::robust::{
    ascend, curvature, grad_params_psi, grad_zeta_psi, inner_max_oracle, mean_gradient, par_map_samples,
    robust_objective, stationarity_distance, RobustConfig,
};
use crate::scalar::Scalar;
use crate::transport::TransportCost;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm<F> {
    Spgd,
    Spgda,
    Erm,
    /// ERM on attacked copies of each batch.
    AdvTrain(AttackConfig<F>),
    /// Penalized worst case with the dual variable frozen at `gamma`.
    Wrm { gamma: F },
}

impl<F: Scalar> Algorithm<F> {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Spgd => "spgd".into(),
            Algorithm::Spgda => "spgda".into(),
            Algorithm::Erm => "erm".into(),
            Algorithm::AdvTrain(a) => format!("adv-{}", a.kind.name()),
            Algorithm::Wrm { .. } => "wrm".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    #[default]
    Constant,
    /// `step / sqrt(t + 1)`.
    InvSqrt,
}

impl Schedule {
    pub fn at<F: Scalar>(self, base: F, t: usize) -> F {
        match self {
            Schedule::Constant => base,
            Schedule::InvSqrt => base / F::of_usize(t + 1).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerConfig<F> {
    pub algorithm: Algorithm<F>,
    /// Outer (proximal) step size.
    pub alpha: F,
    /// Ascent step size of SPGDA.
    pub eta: F,
    pub batch_size: usize,
    pub iters: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub robust: RobustConfig<F>,
}

impl<F: Scalar> TrainerConfig<F> {
    /// Batch 128, `alpha = 0.001`, `eta = 0.02`, 1000 iterations, seed 0.
    pub fn new(algorithm: Algorithm<F>, robust: RobustConfig<F>) -> Self {
        Self {
            algorithm,
            alpha: F::of(0.001),
            eta: F::of(0.02),
            batch_size: 128,
            iters: 1000,
            seed: 0,
            schedule: Schedule::Constant,
            robust,
        }
    }

    pub fn alpha_at(&self, t: usize) -> F {
        self.schedule.at(self.alpha, t)
    }

    pub fn eta_at(&self, t: usize) -> F {
        self.schedule.at(self.eta, t)
    }

    /// Range checks against a dataset of `n` samples.
    pub fn validate<L: Loss<F> + ?Sized>(&self, n: usize, model: &L, cost: &TransportCost<F>) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.alpha > F::zero() && self.alpha.is_finite()) {
            errs.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.eta > F::zero() && self.eta.is_finite()) {
            errs.push(format!("eta must be > 0, got {}", self.eta));
        }
        if self.batch_size == 0 || self.batch_size > n {
            errs.push(format!("batch size {} outside 1..={n}", self.batch_size));
        }
        match &self.algorithm {
            Algorithm::Spgd | Algorithm::Spgda => {
                if let Err(e) = self.robust.validate(model, cost) {
                    errs.push(e.to_string());
                }
            }
            Algorithm::AdvTrain(a) => {
                if let Err(e) = a.validate() {
                    errs.push(e.to_string());
                }
            }
            Algorithm::Wrm { gamma } => {
                if !(*gamma > F::zero()) {
                    errs.push(format!("wrm gamma must be > 0, got {gamma}"));
                }
            }
            Algorithm::Erm => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs.join("; ")))
        }
    }
}

/// Everything a step reads but never changes.
#[derive(Debug)]
pub struct Problem<'a, F, L: ?Sized> {
    pub data: &'a [Datum<F>],
    pub model: &'a L,
    pub reg: &'a Regularizer<F>,
    pub cost: &'a TransportCost<F>,
}

impl<F, L: ?Sized> Clone for Problem<'_, F, L> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<F, L: ?Sized> Copy for Problem<'_, F, L> {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<F> {
    pub iteration: usize,
    pub objective: F,
    pub stationarity: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState<F> {
    pub params: ModelParams<F>,
    pub iteration: usize,
    pub trace: Vec<TraceEntry<F>>,
    pub sampler: BatchSampler,
}

impl<F: Scalar> TrainerState<F> {
    /// Minibatches come from the stream of worker 1 so that a one-worker
    /// federated run draws the same batches.
    pub fn new(params: ModelParams<F>, n: usize, seed: u64) -> Self {
        Self {
            params,
            iteration: 0,
            trace: Vec::new(),
            sampler: BatchSampler::new(n, derive_seed(seed, worker_stream(1))),
        }
    }
}

/// `theta ~ U(-0.05, 0.05)` from the seed's init stream, `gamma = gamma0 + 1`.
pub fn init_params<F: Scalar>(dim: usize, gamma0: F, seed: u64) -> ModelParams<F> {
    let mut rng = rng_for(seed, INIT_STREAM);
    let theta = (0..dim)
        .map(|_| F::of(rng.random_range(-0.05..0.05)))
        .collect();
    ModelParams::new(theta, gamma0 + F::one())
}

fn batch<'a, F: Scalar>(state: &mut TrainerState<F>, data: &'a [Datum<F>], m: usize) -> Vec<&'a Datum<F>> {
    state.sampler.next_batch(m).into_iter().map(|i| &data[i]).collect()
}

fn check_gamma<F: Scalar>(params: &ModelParams<F>, gamma0: F) -> Result<()> {
    if params.gamma < gamma0 {
        return Err(Error::Config(format!("gamma = {} is below gamma0 = {gamma0}", params.gamma)));
    }
    Ok(())
}

/// Batch-averaged gradient of `psi` after one ascent step of size `eta`
/// from each sample.
pub fn spgda_batch_gradient<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    batch: &[&Datum<F>],
    eta: F,
    rho: F,
    c: &TransportCost<F>,
) -> Result<ModelParams<F>> {
    let grads = par_map_samples(batch, |z| {
        let g = grad_zeta_psi(model, params, &z.x, z, c);
        let zeta: Vec<F> = z.x.iter().zip(&g).map(|(&x, &gi)| x + eta * gi).collect();
        Ok(grad_params_psi(model, params, &zeta, z, rho, c))
    })?;
    Ok(mean_gradient(params.dim(), &grads))
}

/// Batch-averaged `grad_theta l`; the gamma block is zero.
pub fn erm_batch_gradient<F: Scalar, L: Loss<F> + ?Sized>(
    model: &L,
    params: &ModelParams<F>,
    batch: &[&Datum<F>],
) -> Result<ModelParams<F>> {
    let grads = par_map_samples(batch, |z| Ok(ModelParams::new(model.grad_theta(&params.theta, &z.x, z.y), F::zero())))?;
    Ok(mean_gradient(params.dim(), &grads))
}

/// `theta <- prox(theta - alpha g)`, gamma untouched.
pub fn prox_theta_step<F: Scalar>(
    reg: &Regularizer<F>,
    alpha: F,
    params: &ModelParams<F>,
    g: &ModelParams<F>,
) -> ModelParams<F> {
    let moved: Vec<F> = params.theta.iter().zip(&g.theta).map(|(&p, &gi)| p - alpha * gi).collect();
    let theta = if reg.is_gamma_indicator() {
        moved
    } else {
        reg.prox(alpha, &moved)
    };
    ModelParams::new(theta, params.gamma)
}

pub fn spgd_step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
) -> Result<()> {
    let rc = &cfg.robust;
    check_gamma(&state.params, rc.gamma0)?;
    let b = batch(state, problem.data, cfg.batch_size);
    let params = &state.params;
    let grads = par_map_samples(&b, |z| {
        let out = inner_max_oracle(problem.model, params, z, rc, problem.cost)?;
        Ok(grad_params_psi(problem.model, params, &out.zeta, z, rc.rho, problem.cost))
    })?;
    let g = mean_gradient(params.dim(), &grads);
    let alpha = cfg.alpha_at(state.iteration);
    state.params = prox_augmented(problem.reg, rc.gamma0, alpha, &params.axpy(-alpha, &g));
    state.iteration += 1;
    Ok(())
}

pub fn spgda_step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
) -> Result<()> {
    let rc = &cfg.robust;
    check_gamma(&state.params, rc.gamma0)?;
    let b = batch(state, problem.data, cfg.batch_size);
    let t = state.iteration;
    let g = spgda_batch_gradient(problem.model, &state.params, &b, cfg.eta_at(t), rc.rho, problem.cost)?;
    let alpha = cfg.alpha_at(t);
    state.params = prox_augmented(problem.reg, rc.gamma0, alpha, &state.params.axpy(-alpha, &g));
    state.iteration += 1;
    Ok(())
}

pub fn erm_step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
) -> Result<()> {
    let b = batch(state, problem.data, cfg.batch_size);
    let g = erm_batch_gradient(problem.model, &state.params, &b)?;
    state.params = prox_theta_step(problem.reg, cfg.alpha_at(state.iteration), &state.params, &g);
    state.iteration += 1;
    Ok(())
}

pub fn adv_train_step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
    atk: &AttackConfig<F>,
) -> Result<()> {
    let b = batch(state, problem.data, cfg.batch_size);
    let params = &state.params;
    let attacked = par_map_samples(&b, |z| attack(problem.model, params, z, atk).map(|x| z.with_features(x)))?;
    let refs: Vec<&Datum<F>> = attacked.iter().collect();
    let g = erm_batch_gradient(problem.model, params, &refs)?;
    state.params = prox_theta_step(problem.reg, cfg.alpha_at(state.iteration), params, &g);
    state.iteration += 1;
    Ok(())
}

/// Gradient step on `theta` at the maximizers of `l - gamma c`, with
/// `gamma` fixed. The ascent uses the oracle's step and iteration cap.
pub fn wrm_step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
    gamma: F,
) -> Result<()> {
    let rc = &cfg.robust;
    let b = batch(state, problem.data, cfg.batch_size);
    let penalized = ModelParams::new(state.params.theta.clone(), gamma);
    let tol_sq = curvature(problem.model, &penalized.theta, gamma, problem.cost)
        .map_or(F::zero(), |l| F::of(2.0) * l * rc.oracle_eps);
    let grads = par_map_samples(&b, |z| {
        let a = ascend(problem.model, &penalized, z, problem.cost, rc.oracle_step, rc.oracle_max_iters, tol_sq)?;
        Ok(ModelParams::new(problem.model.grad_theta(&penalized.theta, &a.zeta, z.y), F::zero()))
    })?;
    let g = mean_gradient(penalized.dim(), &grads);
    state.params = prox_theta_step(problem.reg, cfg.alpha_at(state.iteration), &state.params, &g);
    state.iteration += 1;
    Ok(())
}

/// One step of the configured algorithm.
pub fn step<F: Scalar, L: Loss<F> + ?Sized>(
    state: &mut TrainerState<F>,
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
) -> Result<()> {
    match &cfg.algorithm {
        Algorithm::Spgd => spgd_step(state, problem, cfg),
        Algorithm::Spgda => spgda_step(state, problem, cfg),
        Algorithm::Erm => erm_step(state, problem, cfg),
        Algorithm::AdvTrain(a) => adv_train_step(state, problem, cfg, a),
        Algorithm::Wrm { gamma } => wrm_step(state, problem, cfg, *gamma),
    }
}

/// Trace sampling: every `stride` iterations (and at 0 and the end); a zero
/// stride disables the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalHooks<F> {
    pub stride: usize,
    /// Surrogate used for evaluation; the trainer's own when `None`.
    pub robust: Option<RobustConfig<F>>,
    /// Record NaN instead of aborting when the surrogate cannot be evaluated
    /// (a baseline may leave the region where the oracle is certified).
    pub lenient: bool,
}

impl<F> EvalHooks<F> {
    pub fn every(stride: usize) -> Self {
        Self {
            stride,
            robust: None,
            lenient: false,
        }
    }

    pub fn disabled() -> Self {
        Self::every(0)
    }

    pub(crate) fn due(&self, t: usize, last: usize) -> bool {
        self.stride > 0 && (t.is_multiple_of(self.stride) || t == last)
    }
}

impl<F: Scalar> EvalHooks<F> {
    pub(crate) fn record<L: Loss<F> + ?Sized>(
        &self,
        problem: &Problem<'_, F, L>,
        params: &ModelParams<F>,
        iteration: usize,
        fallback: &RobustConfig<F>,
    ) -> Result<TraceEntry<F>> {
        let rc = self.robust.unwrap_or(*fallback);
        match evaluate(problem, params, iteration, &rc) {
            Err(_) if self.lenient => Ok(TraceEntry {
                iteration,
                objective: F::nan(),
                stationarity: F::nan(),
            }),
            other => other,
        }
    }
}

/// Full-batch robust objective and stationarity distance at `params`, with
/// `gamma` raised to `gamma0` if it sits below it (baselines never touch
/// `gamma`).
pub fn evaluate<F: Scalar, L: Loss<F> + ?Sized>(
    problem: &Problem<'_, F, L>,
    params: &ModelParams<F>,
    iteration: usize,
    rc: &RobustConfig<F>,
) -> Result<TraceEntry<F>> {
    let p = ModelParams::new(params.theta.clone(), params.gamma.max(rc.gamma0));
    Ok(TraceEntry {
        iteration,
        objective: robust_objective(problem.model, &p, problem.reg, problem.data, rc, problem.cost)?,
        stationarity: stationarity_distance(problem.model, &p, problem.reg, problem.data, rc, problem.cost)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<F> {
    pub params: ModelParams<F>,
    pub trace: Vec<TraceEntry<F>>,
}

/// Initial parameters for `cfg` (WRM starts with its frozen `gamma`).
pub fn initial_params<F: Scalar>(dim: usize, cfg: &TrainerConfig<F>) -> ModelParams<F> {
    let mut p = init_params(dim, cfg.robust.gamma0, cfg.seed);
    if let Algorithm::Wrm { gamma } = cfg.algorithm {
        p.gamma = gamma;
    }
    p
}

/// Runs `cfg.iters` steps from [`initial_params`].
pub fn train<F: Scalar, L: Loss<F> + ?Sized>(
    problem: &Problem<'_, F, L>,
    cfg: &TrainerConfig<F>,
    hooks: &EvalHooks<F>,
) -> Result<TrainOutcome<F>> {
    cfg.validate(problem.data.len(), problem.model, problem.cost)?;
    let mut state = TrainerState::new(
        initial_params(problem.model.weights_dim(), cfg),
        problem.data.len(),
        cfg.seed,
    );
    let t_max = cfg.iters;
    if hooks.due(0, t_max) {
        let e = hooks.record(problem, &state.params, 0, &cfg.robust).map_err(|e| e.at_iteration(0))?;
        state.trace.push(e);
    }
    while state.iteration < t_max {
        let t = state.iteration;
        step(&mut state, problem, cfg).map_err(|e| e.at_iteration(t))?;
        if hooks.due(state.iteration, t_max) {
            let e = hooks
                .record(problem, &state.params, state.iteration, &cfg.robust)
                .map_err(|e| e.at_iteration(t))?;
            state.trace.push(e);
        }
    }
    Ok(TrainOutcome {
        params: state.params,
        trace: state.trace,
    })
}
