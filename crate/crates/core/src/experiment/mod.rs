//! Config-driven experiment runs: load data, train every listed algorithm,
//! evaluate under attack and write one metrics file.

mod config;

pub use config::{AlgoChoice, CostChoice, DataSource, ExperimentConfig, ModelChoice, RegChoice};

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::attacks::{clean_error, evaluate_under_attack, AttackConfig, AttackKind};
use crate::data::{gen_synthetic, load_csv, load_idx, read_params, write_metrics, write_params, Dataset, LabelKind, MetricsRow};
use crate::error::{Error, Result};
use crate::federated::{drfl_train, fedavg_train, partition};
use crate::model::{Loss, LossModel, ModelParams, Regularizer};
use crate::robust::RobustConfig;
use crate::train::{train, Algorithm, EvalHooks, Problem, TraceEntry, TrainerConfig};
use crate::transport::TransportCost;

/// What a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub metrics_path: PathBuf,
    pub rows: Vec<MetricsRow>,
    /// Parameter files written, one per algorithm, when a params directory is set.
    pub params_files: Vec<PathBuf>,
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset<f64>> {
    match &cfg.data {
        DataSource::Synthetic { kind, n, d, noise } => gen_synthetic(*kind, *n, *d, *noise, cfg.seed),
        DataSource::Idx { images, labels, limit } => load_idx(images, labels, *limit),
        DataSource::Csv {
            path,
            label_column,
            delimiter,
        } => load_csv(path, label_column, *delimiter),
    }
}

pub fn build_model(cfg: &ExperimentConfig, ds: &Dataset<f64>) -> Result<LossModel<f64>> {
    let d = ds.dim();
    let classes = match ds.labels {
        LabelKind::Classes(c) => Some(c),
        LabelKind::Regression => None,
    };
    let need_binary = |name: &str| match classes {
        Some(c) if c <= 2 => Ok(()),
        _ => Err(Error::Config(format!(
            "model.kind = {name} needs labels in {{0, 1}}; the data has {}",
            classes.map_or("real-valued labels".to_string(), |c| format!("{c} classes"))
        ))),
    };
    Ok(match cfg.model {
        ModelChoice::Linear => LossModel::linear_least_squares(d),
        ModelChoice::Logistic => {
            need_binary("logistic")?;
            LossModel::logistic(d)
        }
        ModelChoice::Mlp { hidden } => {
            need_binary("mlp")?;
            LossModel::tiny_mlp(d, hidden)
        }
        ModelChoice::Softmax => match classes {
            Some(c) if c >= 2 => LossModel::softmax(d, c),
            _ => return Err(Error::config("model.kind = softmax needs at least two classes")),
        },
    })
}

fn regularizer(cfg: &ExperimentConfig) -> Regularizer<f64> {
    match cfg.reg {
        RegChoice::None => Regularizer::None,
        RegChoice::L1(beta) => Regularizer::L1 { beta },
        RegChoice::SquaredL2(beta) => Regularizer::SquaredL2 { beta },
        RegChoice::GammaIndicator(gamma0) => Regularizer::GammaIndicator { gamma0 },
    }
}

fn transport_cost(cfg: &ExperimentConfig, ds: &Dataset<f64>) -> TransportCost<f64> {
    let (lo, hi) = ds.feature_range;
    let diameter = cfg.diameter.unwrap_or((hi - lo) * (ds.dim().max(1) as f64).sqrt());
    match cfg.cost {
        CostChoice::SquaredL2 => TransportCost::squared_l2(diameter),
        CostChoice::SquaredLp(p) => TransportCost::squared_lp(p, diameter),
    }
}

fn attack_config(cfg: &ExperimentConfig, ds: &Dataset<f64>, kind: AttackKind, eps: f64) -> AttackConfig<f64> {
    let (lo, hi) = cfg.clip.unwrap_or(ds.feature_range);
    let mut a = AttackConfig::new(kind).with_eps(eps).with_clip(lo, hi);
    a.steps = cfg.attack_steps;
    a.step_size = cfg.attack_step_size;
    a.wrm_gamma = cfg.attack_wrm_gamma;
    a
}

fn robust_config(cfg: &ExperimentConfig) -> RobustConfig<f64> {
    RobustConfig::new(cfg.rho, cfg.gamma0).with_oracle(cfg.oracle_eps, cfg.oracle_step, cfg.oracle_iters)
}

fn trainer_config(cfg: &ExperimentConfig, ds: &Dataset<f64>, algo: AlgoChoice) -> TrainerConfig<f64> {
    let algorithm = match algo {
        AlgoChoice::Spgd => Algorithm::Spgd,
        AlgoChoice::Erm | AlgoChoice::FedAvg => Algorithm::Erm,
        AlgoChoice::Spgda | AlgoChoice::Drfl => Algorithm::Spgda,
        AlgoChoice::Wrm => Algorithm::Wrm { gamma: cfg.wrm_gamma },
        AlgoChoice::Adv(kind) => {
            let eps = cfg.adv_eps.or(cfg.attack_eps.first().copied()).unwrap_or(0.1);
            Algorithm::AdvTrain(attack_config(cfg, ds, kind, eps))
        }
    };
    let mut tc = TrainerConfig::new(algorithm, robust_config(cfg));
    tc.alpha = cfg.alpha;
    tc.eta = cfg.eta;
    tc.batch_size = cfg.batch;
    tc.iters = cfg.iters;
    tc.seed = cfg.seed;
    tc.schedule = cfg.schedule;
    tc
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Clean and attacked error rows for `params` on `test`.
pub fn evaluation_rows(
    cfg: &ExperimentConfig,
    test: &Dataset<f64>,
    model: &LossModel<f64>,
    params: &ModelParams<f64>,
    algo: &str,
    iter: usize,
) -> Result<Vec<MetricsRow>> {
    let base = MetricsRow {
        run: cfg.run_id.clone(),
        algo: algo.to_string(),
        iter,
        ..MetricsRow::default()
    };
    if !model.is_classifier() {
        return Ok(Vec::new());
    }
    let mut rows = vec![MetricsRow {
        clean_err: Some(clean_error(model, params, &test.data)?),
        ..base.clone()
    }];
    for &kind in &cfg.attack_kinds {
        for &eps in &cfg.attack_eps {
            let a = attack_config(cfg, test, kind, eps);
            rows.push(MetricsRow {
                attack: Some(kind.name().to_string()),
                eps: Some(eps),
                adv_err: Some(evaluate_under_attack(model, params, &test.data, &a)?),
                ..base.clone()
            });
        }
    }
    Ok(rows)
}

struct Trained {
    params: ModelParams<f64>,
    trace: Vec<TraceEntry<f64>>,
    iters: usize,
}

fn train_one(
    cfg: &ExperimentConfig,
    train_set: &Dataset<f64>,
    model: &LossModel<f64>,
    reg: &Regularizer<f64>,
    cost: &TransportCost<f64>,
    algo: AlgoChoice,
) -> Result<Trained> {
    let tc = trainer_config(cfg, train_set, algo);
    let mut hooks = EvalHooks::every(cfg.stride);
    hooks.lenient = !algo.is_robust();
    // baselines are scored on the surrogate their parameters would see
    hooks.robust = Some(robust_config(cfg));
    match algo {
        AlgoChoice::Drfl | AlgoChoice::FedAvg => {
            let shards = partition(&train_set.data, cfg.partition, cfg.workers, cfg.seed)?;
            let out = if algo == AlgoChoice::Drfl {
                drfl_train(shards, model, reg, cost, &tc, &hooks)?
            } else {
                fedavg_train(shards, model, reg, cost, cfg.local_epochs, &tc, &hooks)?
            };
            Ok(Trained {
                params: out.params,
                trace: out.trace,
                iters: cfg.iters,
            })
        }
        _ => {
            let problem = Problem {
                data: &train_set.data,
                model,
                reg,
                cost,
            };
            let out = train(&problem, &tc, &hooks)?;
            Ok(Trained {
                params: out.params,
                trace: out.trace,
                iters: cfg.iters,
            })
        }
    }
}

/// Checks that need the data (step sizes against curvature, partitions,
/// attack settings) for every algorithm, so that all problems surface
/// before any training.
fn preflight(
    cfg: &ExperimentConfig,
    train_set: &Dataset<f64>,
    model: &LossModel<f64>,
    cost: &TransportCost<f64>,
) -> Result<()> {
    let mut errs = Vec::new();
    for &algo in &cfg.algorithms {
        let tc = trainer_config(cfg, train_set, algo);
        if matches!(algo, AlgoChoice::Drfl | AlgoChoice::FedAvg) {
            if let Err(e) = partition(&train_set.data, cfg.partition, cfg.workers, cfg.seed) {
                errs.push(format!("{}: {e}", algo.name()));
            }
        }
        // federated workers clamp the batch to their shard
        if let Err(e) = tc.validate(train_set.len(), model, cost) {
            errs.push(format!("{}: {e}", algo.name()));
        }
    }
    for &kind in &cfg.attack_kinds {
        for &eps in &cfg.attack_eps {
            if let Err(e) = attack_config(cfg, train_set, kind, eps).validate() {
                errs.push(format!("attack {}: {e}", kind.name()));
            }
        }
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs.join("\n")))
    }
}

/// Runs a parsed configuration and writes its metrics file. Nothing is
/// written unless every algorithm finishes.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let ds = load_dataset(cfg)?;
    let model = build_model(cfg, &ds)?;
    let (train_set, test_set) = ds.split(cfg.test_fraction, cfg.seed)?;
    let reg = regularizer(cfg);
    let cost = transport_cost(cfg, &ds);
    preflight(cfg, &train_set, &model, &cost)?;
    let mut rows = Vec::new();
    let mut trained = Vec::new();
    for &algo in &cfg.algorithms {
        let name = algo.name();
        let started = Instant::now();
        let t = train_one(cfg, &train_set, &model, &reg, &cost, algo)
            .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        let elapsed = cfg.timing.then(|| started.elapsed().as_secs_f64() * 1e3);
        for e in &t.trace {
            rows.push(MetricsRow {
                run: cfg.run_id.clone(),
                algo: name.clone(),
                iter: e.iteration,
                objective: finite(e.objective),
                stationarity: finite(e.stationarity),
                ms: elapsed.filter(|_| e.iteration == t.iters),
                ..MetricsRow::default()
            });
        }
        rows.extend(evaluation_rows(cfg, &test_set, &model, &t.params, &name, t.iters)?);
        trained.push((name, t.params));
    }
    let mut params_files = Vec::new();
    if let Some(dir) = &cfg.params_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, p) in &trained {
            let path = dir.join(format!("{}-{name}.wrb", cfg.run_id));
            write_params(&path, p)?;
            params_files.push(path);
        }
    }
    if let Some(parent) = cfg.metrics_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_metrics(&rows, &cfg.metrics_path)?;
    Ok(RunSummary {
        metrics_path: cfg.metrics_path.clone(),
        rows,
        params_files,
    })
}

pub fn run_experiment(config_path: &Path) -> Result<RunSummary> {
    run(&ExperimentConfig::load(config_path)?)
}

/// Evaluates saved parameters on the configuration's test split. Rows carry
/// the algorithm label `loaded`.
pub fn attack_eval(params_path: &Path, config_path: &Path) -> Result<Vec<MetricsRow>> {
    let cfg = ExperimentConfig::load(config_path)?;
    let ds = load_dataset(&cfg)?;
    let model = build_model(&cfg, &ds)?;
    if !model.is_classifier() {
        return Err(Error::config("attack evaluation needs a classification model"));
    }
    let params: ModelParams<f64> = read_params(params_path)?;
    if params.dim() != model.weights_dim() {
        return Err(Error::DimensionMismatch {
            what: "saved parameters",
            expected: model.weights_dim(),
            got: params.dim(),
        });
    }
    let (_, test) = ds.split(cfg.test_fraction, cfg.seed)?;
    evaluation_rows(&cfg, &test, &model, &params, "loaded", 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_cfg(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("exp.cfg");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn small_run_writes_trace_and_attack_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(
            dir.path(),
            "output.metrics = out/m.csv\noutput.params_dir = params\n\
             data.n = 40\nrobust.gamma0 = 2\nrobust.rho = 0.5\nrobust.oracle_step = 0.05\n\
             trainer.algorithms = spgda, erm, drfl\ntrainer.iters = 4\ntrainer.stride = 2\n\
             trainer.batch = 8\nfederated.workers = 2\nattack.kinds = fgsm, pgd\nattack.eps = 0.05, 0.1\n",
        );
        let s = run_experiment(&cfg).unwrap();
        // per algorithm: trace at 0, 2, 4 plus clean row plus 2 x 2 attack rows
        assert_eq!(s.rows.len(), 3 * (3 + 1 + 4));
        assert!(s.metrics_path.is_file());
        assert_eq!(s.params_files.len(), 3);
        let back = crate::data::read_metrics(&s.metrics_path).unwrap();
        assert_eq!(back, s.rows);
        let loaded = attack_eval(&s.params_files[0], &cfg).unwrap();
        let spgda_eval: Vec<_> = s.rows.iter().filter(|r| r.algo == "spgda" && r.clean_err.is_some()).collect();
        assert_eq!(loaded[0].clean_err, spgda_eval[0].clean_err);
    }

    #[test]
    fn failure_leaves_no_metrics_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_cfg(
            dir.path(),
            "output.metrics = m.csv\ndata.n = 20\nfederated.workers = 50\ntrainer.algorithms = drfl\n",
        );
        assert!(run_experiment(&cfg).is_err());
        assert!(!dir.path().join("m.csv").exists());
    }
}
