//! Flat `section.key = value` configuration files.
//!
//! Lines starting with `#` (or the tail after a `#`) are comments. Lists are
//! comma-separated. Relative paths resolve against the config file's
//! directory. Every problem in a file is reported at once.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::AttackKind;
use crate::data::SyntheticKind;
use crate::error::{Error, Result};
use crate::federated::PartitionScheme;
use crate::train::Schedule;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        kind: SyntheticKind,
        n: usize,
        d: usize,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        limit: Option<usize>,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        delimiter: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Linear,
    Logistic,
    Softmax,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegChoice {
    None,
    L1(f64),
    SquaredL2(f64),
    GammaIndicator(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostChoice {
    SquaredL2,
    SquaredLp(f64),
}

/// A training procedure named in `trainer.algorithms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoChoice {
    Spgd,
    Spgda,
    Erm,
    Adv(AttackKind),
    Wrm,
    Drfl,
    FedAvg,
}

impl AlgoChoice {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "spgd" => AlgoChoice::Spgd,
            "spgda" => AlgoChoice::Spgda,
            "erm" => AlgoChoice::Erm,
            "wrm" => AlgoChoice::Wrm,
            "drfl" => AlgoChoice::Drfl,
            "fedavg" => AlgoChoice::FedAvg,
            _ => AlgoChoice::Adv(AttackKind::parse(s.strip_prefix("adv-")?)?),
        })
    }

    pub fn name(self) -> String {
        match self {
            AlgoChoice::Spgd => "spgd".into(),
            AlgoChoice::Spgda => "spgda".into(),
            AlgoChoice::Erm => "erm".into(),
            AlgoChoice::Adv(k) => format!("adv-{}", k.name()),
            AlgoChoice::Wrm => "wrm".into(),
            AlgoChoice::Drfl => "drfl".into(),
            AlgoChoice::FedAvg => "fedavg".into(),
        }
    }

    /// Whether the procedure optimizes the robust surrogate itself.
    pub fn is_robust(self) -> bool {
        matches!(self, AlgoChoice::Spgd | AlgoChoice::Spgda | AlgoChoice::Drfl)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seed: u64,
    pub metrics_path: PathBuf,
    pub params_dir: Option<PathBuf>,
    pub timing: bool,

    pub data: DataSource,
    pub test_fraction: f64,

    pub model: ModelChoice,
    pub reg: RegChoice,

    pub rho: f64,
    pub gamma0: f64,
    pub oracle_eps: f64,
    pub oracle_step: f64,
    pub oracle_iters: usize,
    pub cost: CostChoice,
    /// Defaults to the diameter of the data's feature box.
    pub diameter: Option<f64>,

    pub algorithms: Vec<AlgoChoice>,
    pub alpha: f64,
    pub eta: f64,
    pub batch: usize,
    pub iters: usize,
    pub stride: usize,
    pub schedule: Schedule,
    pub wrm_gamma: f64,
    /// Budget of adversarial training; the first evaluation budget if unset.
    pub adv_eps: Option<f64>,

    pub workers: usize,
    pub partition: PartitionScheme,
    pub local_epochs: usize,

    pub attack_kinds: Vec<AttackKind>,
    pub attack_eps: Vec<f64>,
    pub attack_steps: usize,
    pub attack_step_size: Option<f64>,
    /// Defaults to the data's feature range.
    pub clip: Option<(f64, f64)>,
    pub attack_wrm_gamma: f64,
}

struct Fields {
    map: BTreeMap<String, (String, usize)>,
    base: PathBuf,
    errs: Vec<String>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.map.remove(key)
    }

    fn parse_as<T: FromStr>(&mut self, key: &str) -> Option<T> {
        let (v, line) = self.take(key)?;
        match v.parse() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errs.push(format!("line {line}: {key} = {v:?} is not a valid value"));
                None
            }
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> T {
        self.parse_as(key).unwrap_or(default)
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.take(key).map_or_else(|| default.to_string(), |(v, _)| v)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|(v, _)| self.base.join(v))
    }

    fn required_path(&mut self, key: &str) -> Option<PathBuf> {
        let p = self.path(key);
        if p.is_none() {
            self.errs.push(format!("missing required key {key}"));
        }
        p
    }

    fn list(&mut self, key: &str, default: &str) -> Vec<String> {
        let raw = self.string(key, default);
        raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errs.push(msg());
        }
    }
}

fn tokenize(text: &str) -> (BTreeMap<String, (String, usize)>, Vec<String>) {
    let mut map = BTreeMap::new();
    let mut errs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            errs.push(format!("line {line}: expected `key = value`"));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            errs.push(format!("line {line}: empty key"));
        } else if let Some((_, first)) = map.insert(k.to_string(), (v.to_string(), line)) {
            errs.push(format!("line {line}: duplicate key {k} (first set on line {first})"));
        }
    }
    (map, errs)
}

impl ExperimentConfig {
    /// Parses and validates `text`; relative paths are joined to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let (map, errs) = tokenize(text);
        let mut f = Fields {
            map,
            base: base.to_path_buf(),
            errs,
        };

        let run_id = f.string("run.id", "run");
        let seed = f.or("run.seed", 0u64);
        let metrics_path = f.required_path("output.metrics").unwrap_or_default();
        let params_dir = f.path("output.params_dir");
        let timing = f.or("output.timing", false);

        let source = f.string("data.source", "synthetic");
        let data = match source.as_str() {
            "synthetic" => {
                let kind_s = f.string("data.kind", "two-gaussians");
                let kind = SyntheticKind::parse(&kind_s).unwrap_or_else(|| {
                    f.errs.push(format!("unknown data.kind {kind_s:?}"));
                    SyntheticKind::TwoGaussians
                });
                let n = f.or("data.n", 200usize);
                let d = f.or("data.d", 2usize);
                let noise = f.or("data.noise", 0.5f64);
                f.check(n >= 2, || format!("data.n must be >= 2, got {n}"));
                f.check(d >= 1, || "data.d must be >= 1".into());
                f.check(kind != SyntheticKind::TwoMoons || d == 2, || "two-moons needs data.d = 2".into());
                f.check(noise >= 0.0 && noise.is_finite(), || format!("data.noise must be >= 0, got {noise}"));
                DataSource::Synthetic { kind, n, d, noise }
            }
            "idx" => {
                let images = f.required_path("data.images").unwrap_or_default();
                let labels = f.required_path("data.labels").unwrap_or_default();
                let limit = f.parse_as("data.limit");
                for p in [&images, &labels] {
                    f.check(p.as_os_str().is_empty() || p.is_file(), || format!("data file {} does not exist", p.display()));
                }
                DataSource::Idx { images, labels, limit }
            }
            "csv" => {
                let path = f.required_path("data.path").unwrap_or_default();
                f.check(path.as_os_str().is_empty() || path.is_file(), || format!("data file {} does not exist", path.display()));
                let label_column = f.string("data.label_column", "y");
                let delim = f.string("data.delimiter", ",");
                let delimiter = match delim.as_str() {
                    "tab" | "\\t" => b'\t',
                    s if s.len() == 1 => s.as_bytes()[0],
                    _ => {
                        f.errs.push(format!("data.delimiter must be one character, got {delim:?}"));
                        b','
                    }
                };
                DataSource::Csv {
                    path,
                    label_column,
                    delimiter,
                }
            }
            other => {
                f.errs.push(format!("unknown data.source {other:?} (synthetic, idx, csv)"));
                DataSource::Synthetic {
                    kind: SyntheticKind::TwoGaussians,
                    n: 2,
                    d: 1,
                    noise: 0.0,
                }
            }
        };
        let test_fraction = f.or("data.test_fraction", 0.2f64);
        f.check(test_fraction > 0.0 && test_fraction < 1.0, || {
            format!("data.test_fraction must lie in (0, 1), got {test_fraction}")
        });

        let model_s = f.string("model.kind", "logistic");
        let hidden = f.or("model.hidden", 8usize);
        let model = match model_s.as_str() {
            "linear" => ModelChoice::Linear,
            "logistic" => ModelChoice::Logistic,
            "softmax" => ModelChoice::Softmax,
            "mlp" => ModelChoice::Mlp { hidden },
            other => {
                f.errs.push(format!("unknown model.kind {other:?} (linear, logistic, softmax, mlp)"));
                ModelChoice::Logistic
            }
        };
        f.check(hidden >= 1, || "model.hidden must be >= 1".into());

        let reg_s = f.string("reg.kind", "none");
        let beta = f.or("reg.beta", 0.0f64);
        let reg = match reg_s.as_str() {
            "none" => RegChoice::None,
            "l1" => RegChoice::L1(beta),
            "l2" => RegChoice::SquaredL2(beta),
            "gamma" => RegChoice::GammaIndicator(beta),
            other => {
                f.errs.push(format!("unknown reg.kind {other:?} (none, l1, l2, gamma)"));
                RegChoice::None
            }
        };
        f.check(beta >= 0.0 && beta.is_finite(), || format!("reg.beta must be >= 0, got {beta}"));

        let rho = f.or("robust.rho", 25.0f64);
        let gamma0 = f.or("robust.gamma0", 1.0f64);
        let oracle_eps = f.or("robust.oracle_eps", 1e-8f64);
        let oracle_step = f.or("robust.oracle_step", 0.02f64);
        let oracle_iters = f.or("robust.oracle_iters", 1000usize);
        f.check(rho >= 0.0 && rho.is_finite(), || format!("robust.rho must be >= 0, got {rho}"));
        f.check(gamma0 > 0.0 && gamma0.is_finite(), || format!("robust.gamma0 must be > 0, got {gamma0}"));
        f.check(oracle_eps > 0.0, || "robust.oracle_eps must be > 0".into());
        f.check(oracle_step > 0.0, || "robust.oracle_step must be > 0".into());
        f.check(oracle_iters >= 1, || "robust.oracle_iters must be >= 1".into());

        let cost_s = f.string("cost.kind", "l2");
        let p = f.or("cost.p", 2.0f64);
        let cost = match cost_s.as_str() {
            "l2" => CostChoice::SquaredL2,
            "lp" => {
                f.check(p > 1.0 && p <= 2.0, || format!("cost.p must lie in (1, 2] for a strongly convex cost, got {p}"));
                CostChoice::SquaredLp(p)
            }
            other => {
                f.errs.push(format!("unknown cost.kind {other:?} (l2, lp)"));
                CostChoice::SquaredL2
            }
        };
        let diameter = f.parse_as("cost.diameter");
        if let Some(dm) = diameter {
            f.check(dm > 0.0, || format!("cost.diameter must be > 0, got {dm}"));
        }

        let algorithms: Vec<AlgoChoice> = f
            .list("trainer.algorithms", "spgda")
            .iter()
            .filter_map(|s| {
                let a = AlgoChoice::parse(s);
                if a.is_none() {
                    f.errs.push(format!("unknown algorithm {s:?}"));
                }
                a
            })
            .collect();
        f.check(!algorithms.is_empty(), || "trainer.algorithms is empty".into());
        let alpha = f.or("trainer.alpha", 0.001f64);
        let eta = f.or("trainer.eta", 0.02f64);
        let batch = f.or("trainer.batch", 128usize);
        let iters = f.or("trainer.iters", 1000usize);
        let stride = f.or("trainer.stride", 100usize);
        let schedule = match f.string("trainer.schedule", "constant").as_str() {
            "constant" => Schedule::Constant,
            "inv-sqrt" => Schedule::InvSqrt,
            other => {
                f.errs.push(format!("unknown trainer.schedule {other:?} (constant, inv-sqrt)"));
                Schedule::Constant
            }
        };
        let wrm_gamma = f.or("trainer.wrm_gamma", 1.0f64);
        let adv_eps = f.parse_as("trainer.adv_eps");
        f.check(alpha > 0.0 && alpha.is_finite(), || format!("trainer.alpha must be > 0, got {alpha}"));
        f.check(eta > 0.0 && eta.is_finite(), || format!("trainer.eta must be > 0, got {eta}"));
        f.check(batch >= 1, || "trainer.batch must be >= 1".into());
        f.check(wrm_gamma > 0.0, || format!("trainer.wrm_gamma must be > 0, got {wrm_gamma}"));
        if let Some(e) = adv_eps {
            f.check(e >= 0.0, || format!("trainer.adv_eps must be >= 0, got {e}"));
        }

        let workers = f.or("federated.workers", 5usize);
        let part_s = f.string("federated.partition", "iid");
        let partition = PartitionScheme::parse(&part_s).unwrap_or_else(|| {
            f.errs.push(format!("unknown federated.partition {part_s:?} (iid, one-class)"));
            PartitionScheme::Iid
        });
        let local_epochs = f.or("federated.local_epochs", 1usize);
        f.check(workers >= 1, || "federated.workers must be >= 1".into());
        f.check(local_epochs >= 1, || "federated.local_epochs must be >= 1".into());

        let attack_kinds: Vec<AttackKind> = f
            .list("attack.kinds", "pgd")
            .iter()
            .filter_map(|s| {
                let k = AttackKind::parse(s);
                if k.is_none() {
                    f.errs.push(format!("unknown attack kind {s:?}"));
                }
                k
            })
            .collect();
        let attack_eps: Vec<f64> = f
            .list("attack.eps", "0.1")
            .iter()
            .filter_map(|s| match s.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => Some(v),
                _ => {
                    f.errs.push(format!("attack.eps entry {s:?} must be a number >= 0"));
                    None
                }
            })
            .collect();
        let attack_steps = f.or("attack.steps", 10usize);
        let attack_step_size = f.parse_as("attack.step_size");
        let clip_lo: Option<f64> = f.parse_as("attack.clip_lo");
        let clip_hi: Option<f64> = f.parse_as("attack.clip_hi");
        let clip = match (clip_lo, clip_hi) {
            (Some(lo), Some(hi)) => {
                f.check(lo < hi, || format!("attack.clip_lo = {lo} must be below attack.clip_hi = {hi}"));
                Some((lo, hi))
            }
            (None, None) => None,
            _ => {
                f.errs.push("attack.clip_lo and attack.clip_hi must be set together".into());
                None
            }
        };
        let attack_wrm_gamma = f.or("attack.wrm_gamma", 1.0f64);
        f.check(attack_steps >= 1, || "attack.steps must be >= 1".into());
        if let Some(s) = attack_step_size {
            f.check(s > 0.0, || format!("attack.step_size must be > 0, got {s}"));
        }
        f.check(attack_wrm_gamma > 0.0, || "attack.wrm_gamma must be > 0".into());
        if model == ModelChoice::Linear {
            f.check(attack_kinds.is_empty(), || {
                "attacks report error rates and need a classification model; set attack.kinds =".into()
            });
            f.check(!algorithms.iter().any(|a| matches!(a, AlgoChoice::Adv(_))), || {
                "adversarial training needs a classification model".into()
            });
        }

        let unknown: Vec<String> = f
            .map
            .iter()
            .map(|(k, (_, line))| format!("line {line}: unknown key {k}"))
            .collect();
        f.errs.extend(unknown);
        if !f.errs.is_empty() {
            return Err(Error::Config(f.errs.join("\n")));
        }
        Ok(Self {
            run_id,
            seed,
            metrics_path,
            params_dir,
            timing,
            data,
            test_fraction,
            model,
            reg,
            rho,
            gamma0,
            oracle_eps,
            oracle_step,
            oracle_iters,
            cost,
            diameter,
            algorithms,
            alpha,
            eta,
            batch,
            iters,
            stride,
            schedule,
            wrm_gamma,
            adv_eps,
            workers,
            partition,
            local_epochs,
            attack_kinds,
            attack_eps,
            attack_steps,
            attack_step_size,
            clip,
            attack_wrm_gamma,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_lists() {
        let c = ExperimentConfig::parse(
            "# comment\noutput.metrics = out.csv\ntrainer.algorithms = erm, spgda  # both\nattack.eps = 0, 0.1\n",
            Path::new("/tmp/x"),
        )
        .unwrap();
        assert_eq!(c.metrics_path, PathBuf::from("/tmp/x/out.csv"));
        assert_eq!(c.algorithms, vec![AlgoChoice::Erm, AlgoChoice::Spgda]);
        assert_eq!(c.attack_eps, vec![0.0, 0.1]);
        assert_eq!((c.batch, c.alpha, c.eta, c.rho), (128, 0.001, 0.02, 25.0));
        assert_eq!((c.attack_steps, c.attack_wrm_gamma, c.wrm_gamma), (10, 1.0, 1.0));
    }

    #[test]
    fn all_errors_are_reported_together() {
        let err = ExperimentConfig::parse(
            "trainer.alpha = -1\ntrainer.alpha = 2\nbogus.key = 1\nmodel.kind = tree\nnot a pair\n",
            Path::new("."),
        )
        .unwrap_err()
        .to_string();
        for needle in ["output.metrics", "duplicate key trainer.alpha", "unknown key bogus.key", "model.kind", "line 5"] {
            assert!(err.contains(needle), "{needle} missing from {err}");
        }
    }

    #[test]
    fn missing_data_file_is_a_validation_error() {
        let err = ExperimentConfig::parse(
            "output.metrics = m.csv\ndata.source = csv\ndata.path = /definitely/not/here.csv\n",
            Path::new("."),
        )
        .unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }
}
