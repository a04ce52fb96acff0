//! Simulated synchronous parameter-server training.
//!
//! Each DRFL round the server broadcasts `(theta, gamma)`; every worker draws
//! a minibatch from its shard, takes one ascent step per sample and reports
//! the batch-averaged gradient of `psi`; the server takes a proximal step on
//! the mean report. Reports are summed in worker-id order, so arrival order
//! never changes the result.
//!
//! Worker `k` (numbered from 1) samples from the stream `derive_seed(seed, k)`,
//! the same stream centralized training uses for its batches when `k = 1`.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{prox_augmented, Datum, Loss, ModelParams, Regularizer};
use crate::rng::{derive_seed, rng_for, worker_stream, BatchSampler, PARTITION_STREAM};
use crate::scalar::{norm2, Scalar};
use crate::train::{
    erm_batch_gradient, initial_params, prox_theta_step, spgda_batch_gradient, EvalHooks, Problem,
    TraceEntry, TrainerConfig,
};
use crate::transport::TransportCost;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState<F> {
    id: usize,
    shard: Vec<Datum<F>>,
    sampler: BatchSampler,
    batch_size: usize,
    local_steps: usize,
}

impl<F: Scalar> WorkerState<F> {
    /// Batches larger than the shard are clamped to the shard size.
    pub fn new(id: usize, shard: Vec<Datum<F>>, run_seed: u64, batch_size: usize) -> Result<Self> {
        if id == 0 {
            return Err(Error::config("worker ids start at 1"));
        }
        if shard.is_empty() {
            return Err(Error::Config(format!("worker {id} has an empty shard")));
        }
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        Ok(Self {
            id,
            sampler: BatchSampler::new(shard.len(), derive_seed(run_seed, worker_stream(id))),
            batch_size: batch_size.min(shard.len()),
            shard,
            local_steps: 0,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shard(&self) -> &[Datum<F>] {
        &self.shard
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn next_batch(&mut self) -> Vec<&Datum<F>> {
        let idx = self.sampler.next_batch(self.batch_size);
        idx.into_iter().map(|i| &self.shard[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundMessage<F> {
    Broadcast {
        round: usize,
        params: ModelParams<F>,
    },
    Report {
        round: usize,
        worker: usize,
        /// Flattened `(theta, gamma)` gradient.
        gradient: Vec<F>,
        batch_count: usize,
    },
}

/// Worker side of a DRFL round.
pub fn worker_round<F: Scalar, L: Loss<F> + ?Sized>(
    w: &mut WorkerState<F>,
    broadcast: &RoundMessage<F>,
    model: &L,
    c: &TransportCost<F>,
    cfg: &TrainerConfig<F>,
) -> Result<RoundMessage<F>> {
    let RoundMessage::Broadcast { round, params } = broadcast else {
        return Err(Error::Protocol(format!("worker {} expected a broadcast", w.id)));
    };
    let eta = cfg.eta_at(*round);
    let id = w.id;
    let batch = w.next_batch();
    let g = spgda_batch_gradient(model, params, &batch, eta, cfg.robust.rho, c)?;
    Ok(RoundMessage::Report {
        round: *round,
        worker: id,
        gradient: g.to_flat(),
        batch_count: batch.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState<F> {
    pub params: ModelParams<F>,
    pub round: usize,
    pub workers: usize,
    pub gamma0: F,
    pub alpha: F,
    pub schedule: crate::train::Schedule,
}

impl<F: Scalar> ServerState<F> {
    pub fn new(params: ModelParams<F>, workers: usize, cfg: &TrainerConfig<F>) -> Self {
        Self {
            params,
            round: 0,
            workers,
            gamma0: cfg.robust.gamma0,
            alpha: cfg.alpha,
            schedule: cfg.schedule,
        }
    }

    pub fn broadcast(&self) -> RoundMessage<F> {
        RoundMessage::Broadcast {
            round: self.round,
            params: self.params.clone(),
        }
    }

    /// `theta_bar <- prox(theta_bar - (alpha / K) sum_k report_k)`.
    ///
    /// Requires exactly one report per worker, all for the current round.
    pub fn aggregate(&mut self, reports: &[RoundMessage<F>], reg: &Regularizer<F>) -> Result<()> {
        let k = self.workers;
        let flat_dim = self.params.dim() + 1;
        let mut slots: Vec<Option<&[F]>> = vec![None; k];
        for msg in reports {
            let RoundMessage::Report {
                round,
                worker,
                gradient,
                ..
            } = msg
            else {
                return Err(Error::Protocol("server received a broadcast".into()));
            };
            if *round != self.round {
                return Err(Error::Protocol(format!(
                    "worker {worker} reported for round {round} during round {}",
                    self.round
                )));
            }
            if *worker == 0 || *worker > k {
                return Err(Error::Protocol(format!("unknown worker {worker} (K = {k})")));
            }
            if gradient.len() != flat_dim {
                return Err(Error::DimensionMismatch {
                    what: "report gradient",
                    expected: flat_dim,
                    got: gradient.len(),
                });
            }
            let slot = &mut slots[*worker - 1];
            if slot.is_some() {
                return Err(Error::Protocol(format!("duplicate report from worker {worker}")));
            }
            *slot = Some(gradient);
        }
        if let Some(missing) = slots.iter().position(Option::is_none) {
            return Err(Error::Protocol(format!(
                "missing report from worker {} in round {}",
                missing + 1,
                self.round
            )));
        }
        let mut sum = slots[0].unwrap_or_default().to_vec();
        for g in slots[1..].iter().flatten() {
            for (s, &v) in sum.iter_mut().zip(g.iter()) {
                *s = *s + v;
            }
        }
        let sum = ModelParams::from_flat(&sum)?;
        let alpha = self.schedule.at(self.alpha, self.round);
        let moved = self.params.axpy(-(alpha / F::of_usize(k)), &sum);
        self.params = prox_augmented(reg, self.gamma0, alpha, &moved);
        self.round += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics<F> {
    pub round: usize,
    pub gamma: F,
    /// Mean Euclidean norm of the reports of the round.
    pub report_norm: F,
}

/// A DRFL run in progress.
#[derive(Debug)]
pub struct Drfl<'a, F, L: ?Sized> {
    pub server: ServerState<F>,
    pub workers: Vec<WorkerState<F>>,
    model: &'a L,
    reg: &'a Regularizer<F>,
    cost: &'a TransportCost<F>,
    cfg: TrainerConfig<F>,
}

impl<'a, F: Scalar, L: Loss<F> + ?Sized> Drfl<'a, F, L> {
    /// Starts from the same initial parameters as centralized training.
    pub fn new(
        shards: Vec<Vec<Datum<F>>>,
        model: &'a L,
        reg: &'a Regularizer<F>,
        cost: &'a TransportCost<F>,
        cfg: &TrainerConfig<F>,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::config("at least one worker is required"));
        }
        cfg.robust.validate(model, cost)?;
        let k = shards.len();
        let workers = shards
            .into_iter()
            .enumerate()
            .map(|(i, s)| WorkerState::new(i + 1, s, cfg.seed, cfg.batch_size))
            .collect::<Result<Vec<_>>>()?;
        let params = initial_params(model.weights_dim(), cfg);
        Ok(Self {
            server: ServerState::new(params, k, cfg),
            workers,
            model,
            reg,
            cost,
            cfg: *cfg,
        })
    }

    pub fn round(&mut self) -> Result<RoundMetrics<F>> {
        let msg = self.server.broadcast();
        let (model, cost, cfg) = (self.model, self.cost, &self.cfg);
        let reports = self
            .workers
            .par_iter_mut()
            .map(|w| worker_round(w, &msg, model, cost, cfg))
            .collect::<Result<Vec<_>>>()?;
        let norm_sum = reports.iter().fold(F::zero(), |acc, r| match r {
            RoundMessage::Report { gradient, .. } => acc + norm2(gradient),
            RoundMessage::Broadcast { .. } => acc,
        });
        let round = self.server.round;
        self.server.aggregate(&reports, self.reg)?;
        Ok(RoundMetrics {
            round,
            gamma: self.server.params.gamma,
            report_norm: norm_sum / F::of_usize(reports.len()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedOutcome<F> {
    pub params: ModelParams<F>,
    pub rounds: Vec<RoundMetrics<F>>,
    /// Full-data evaluations at the hook stride (rounds count as iterations).
    pub trace: Vec<TraceEntry<F>>,
}

fn union<F: Scalar>(shards: &[Vec<Datum<F>>]) -> Vec<Datum<F>> {
    shards.iter().flatten().cloned().collect()
}

/// `cfg.iters` DRFL rounds over the given shards.
pub fn drfl_train<F: Scalar, L: Loss<F> + ?Sized>(
    shards: Vec<Vec<Datum<F>>>,
    model: &L,
    reg: &Regularizer<F>,
    cost: &TransportCost<F>,
    cfg: &TrainerConfig<F>,
    hooks: &EvalHooks<F>,
) -> Result<FederatedOutcome<F>> {
    let all = union(&shards);
    let problem = Problem {
        data: &all,
        model,
        reg,
        cost,
    };
    let mut run = Drfl::new(shards, model, reg, cost, cfg)?;
    let mut rounds = Vec::with_capacity(cfg.iters);
    let mut trace = Vec::new();
    if hooks.due(0, cfg.iters) {
        trace.push(hooks.record(&problem, &run.server.params, 0, &cfg.robust).map_err(|e| e.at_iteration(0))?);
    }
    for t in 0..cfg.iters {
        rounds.push(run.round().map_err(|e| e.at_iteration(t))?);
        if hooks.due(t + 1, cfg.iters) {
            trace.push(hooks.record(&problem, &run.server.params, t + 1, &cfg.robust).map_err(|e| e.at_iteration(t))?);
        }
    }
    Ok(FederatedOutcome {
        params: run.server.params,
        rounds,
        trace,
    })
}

/// Local ERM epochs on a worker from the broadcast parameters.
fn local_sgd<F: Scalar, L: Loss<F> + ?Sized>(
    w: &mut WorkerState<F>,
    start: &ModelParams<F>,
    model: &L,
    reg: &Regularizer<F>,
    cfg: &TrainerConfig<F>,
    local_epochs: usize,
) -> Result<ModelParams<F>> {
    let steps = local_epochs * (w.shard.len() / w.batch_size).max(1);
    let mut p = start.clone();
    for _ in 0..steps {
        let alpha = cfg.alpha_at(w.local_steps);
        let batch = w.next_batch();
        let g = erm_batch_gradient(model, &p, &batch)?;
        p = prox_theta_step(reg, alpha, &p, &g);
        w.local_steps += 1;
    }
    Ok(p)
}

/// Federated averaging: `local_epochs` epochs of ERM SGD per worker, then a
/// shard-size-weighted average of the weights. `gamma` is carried unchanged.
pub fn fedavg_train<F: Scalar, L: Loss<F> + ?Sized>(
    shards: Vec<Vec<Datum<F>>>,
    model: &L,
    reg: &Regularizer<F>,
    cost: &TransportCost<F>,
    local_epochs: usize,
    cfg: &TrainerConfig<F>,
    hooks: &EvalHooks<F>,
) -> Result<FederatedOutcome<F>> {
    if shards.is_empty() {
        return Err(Error::config("at least one worker is required"));
    }
    if local_epochs == 0 {
        return Err(Error::config("local_epochs must be >= 1"));
    }
    let all = union(&shards);
    let problem = Problem {
        data: &all,
        model,
        reg,
        cost,
    };
    let total = F::of_usize(all.len());
    let mut workers = shards
        .into_iter()
        .enumerate()
        .map(|(i, s)| WorkerState::new(i + 1, s, cfg.seed, cfg.batch_size))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<F> = workers.iter().map(|w| F::of_usize(w.shard.len()) / total).collect();
    let mut params = initial_params(model.weights_dim(), cfg);
    let mut rounds = Vec::with_capacity(cfg.iters);
    let mut trace = Vec::new();
    if hooks.due(0, cfg.iters) {
        trace.push(hooks.record(&problem, &params, 0, &cfg.robust).map_err(|e| e.at_iteration(0))?);
    }
    for t in 0..cfg.iters {
        let start = params.clone();
        let locals = workers
            .par_iter_mut()
            .map(|w| local_sgd(w, &start, model, reg, cfg, local_epochs))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.at_iteration(t))?;
        let mut theta: Vec<F> = locals[0].theta.iter().map(|&v| weights[0] * v).collect();
        for (p, &wk) in locals[1..].iter().zip(&weights[1..]) {
            for (s, &v) in theta.iter_mut().zip(&p.theta) {
                *s = *s + wk * v;
            }
        }
        let delta: Vec<F> = theta.iter().zip(&start.theta).map(|(&a, &b)| a - b).collect();
        params = ModelParams::new(theta, start.gamma);
        rounds.push(RoundMetrics {
            round: t,
            gamma: params.gamma,
            report_norm: norm2(&delta),
        });
        if hooks.due(t + 1, cfg.iters) {
            trace.push(hooks.record(&problem, &params, t + 1, &cfg.robust).map_err(|e| e.at_iteration(t))?);
        }
    }
    Ok(FederatedOutcome { params, rounds, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionScheme {
    Iid,
    /// Worker `k` holds only class `k mod C`.
    OneClass,
}

impl PartitionScheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "iid" => Some(PartitionScheme::Iid),
            "one-class" => Some(PartitionScheme::OneClass),
            _ => None,
        }
    }
}

/// Split `data` across `k` workers. Shards are disjoint and cover `data`;
/// sizes within a group differ by at most one (remainders go round-robin).
///
/// The one-class scheme needs at least as many workers as classes so that
/// every class has a home; classes with several workers are split evenly.
pub fn partition<F: Scalar>(
    data: &[Datum<F>],
    scheme: PartitionScheme,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<Datum<F>>>> {
    if k == 0 || k > data.len() {
        return Err(Error::Config(format!(
            "cannot split {} samples across {k} workers",
            data.len()
        )));
    }
    let mut rng = rng_for(seed, PARTITION_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut shards = vec![Vec::new(); k];
    match scheme {
        PartitionScheme::Iid => {
            for (pos, &i) in order.iter().enumerate() {
                shards[pos % k].push(data[i].clone());
            }
        }
        PartitionScheme::OneClass => {
            let classes: Vec<usize> = data
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    z.class().ok_or_else(|| {
                        Error::Config(format!("sample {i} has non-class label {}", z.y))
                    })
                })
                .collect::<Result<_>>()?;
            let c = classes.iter().max().map_or(0, |m| m + 1);
            if k < c {
                return Err(Error::Config(format!(
                    "one-class partition of {c} classes needs at least {c} workers, got {k}"
                )));
            }
            let mut next = vec![0usize; c];
            for &i in &order {
                let cls = classes[i];
                let owners = (k - cls).div_ceil(c);
                let slot = cls + c * (next[cls] % owners);
                next[cls] += 1;
                shards[slot].push(data[i].clone());
            }
            if let Some(empty) = shards.iter().position(Vec::is_empty) {
                return Err(Error::Config(format!(
                    "worker {} receives no samples under the one-class partition",
                    empty + 1
                )));
            }
        }
    }
    Ok(shards)
}
