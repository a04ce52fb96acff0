//! Datasets, synthetic generators and file formats.

mod csv_io;
mod idx;
mod metrics;
mod params_io;

pub use csv_io::{load_csv, write_csv};
pub use idx::{load_idx, write_idx};
pub use metrics::{metrics_bytes, read_metrics, write_metrics, MetricsRow, METRICS_HEADER};
pub use params_io::{params_bytes, read_params, write_params, PARAMS_MAGIC};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::Datum;
use crate::rng::{rng_for, SPLIT_STREAM};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Labels are integers in `0..classes`.
    Classes(usize),
    Regression,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub data: Vec<Datum<F>>,
    /// Every feature lies in `[lo, hi]`.
    pub feature_range: (F, F),
    pub labels: LabelKind,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(data: Vec<Datum<F>>, feature_range: (F, F), labels: LabelKind) -> Result<Self> {
        let ds = Self {
            data,
            feature_range,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.feature_range;
        if self.data.is_empty() {
            return Err(Error::Validation("dataset is empty".into()));
        }
        if !(lo < hi) {
            return Err(Error::Validation(format!("feature range [{lo}, {hi}] is empty")));
        }
        let d = self.data[0].dim();
        for (i, z) in self.data.iter().enumerate() {
            if z.dim() != d {
                return Err(Error::DimensionMismatch {
                    what: "dataset features",
                    expected: d,
                    got: z.dim(),
                }
                .at_sample(i));
            }
            if let Some(v) = z.x.iter().find(|&&v| !(v >= lo && v <= hi)) {
                return Err(Error::Validation(format!("sample {i}: feature {v} outside [{lo}, {hi}]")));
            }
            if let LabelKind::Classes(c) = self.labels {
                if !z.class().is_some_and(|k| k < c) {
                    return Err(Error::Validation(format!("sample {i}: label {} outside 0..{c}", z.y)));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.first().map_or(0, Datum::dim)
    }

    /// Seeded shuffle into `(train, test)` with `round(n * test_fraction)`
    /// test samples; both parts keep at least one sample.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) || self.len() < 2 {
            return Err(Error::Config(format!(
                "cannot split {} samples with test fraction {test_fraction}",
                self.len()
            )));
        }
        let n_test = ((self.len() as f64 * test_fraction).round() as usize).clamp(1, self.len() - 1);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng_for(seed, SPLIT_STREAM));
        let pick = |idx: &[usize]| Self {
            data: idx.iter().map(|&i| self.data[i].clone()).collect(),
            feature_range: self.feature_range,
            labels: self.labels,
        };
        Ok((pick(&order[n_test..]), pick(&order[..n_test])))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    /// Classes at `+-mu` with `mu = (1, ..., 1) / sqrt(d)`; labels alternate.
    TwoGaussians,
    /// Two interleaved half circles in the plane.
    TwoMoons,
    /// `y = w'x + noise` with `x ~ U[-1, 1]^d` and `w = (1, ..., 1) / sqrt(d)`.
    LinearRegression,
}

impl SyntheticKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "two-gaussians" => Some(SyntheticKind::TwoGaussians),
            "two-moons" => Some(SyntheticKind::TwoMoons),
            "linear-regression" => Some(SyntheticKind::LinearRegression),
            _ => None,
        }
    }
}

/// Seeded synthetic data with features clipped to `[-1, 1]`.
pub fn gen_synthetic<F: Scalar>(kind: SyntheticKind, n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset<F>> {
    if n < 2 || d == 0 {
        return Err(Error::Config(format!("synthetic data needs n >= 2 and d >= 1, got n = {n}, d = {d}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("noise must be finite and >= 0, got {noise}")));
    }
    if kind == SyntheticKind::TwoMoons && d != 2 {
        return Err(Error::Config(format!("two-moons is two-dimensional, got d = {d}")));
    }
    let mut rng = rng_for(seed, 0x5EED);
    let clip = |v: f64| F::of(v.clamp(-1.0, 1.0));
    let scale = 1.0 / (d as f64).sqrt();
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let datum = match kind {
            SyntheticKind::TwoGaussians => {
                let y = (i % 2) as f64;
                let sign = 2.0 * y - 1.0;
                let x = (0..d).map(|_| clip(sign * scale + noise * rng.sample::<f64, _>(StandardNormal))).collect();
                Datum::new(x, F::of(y))
            }
            SyntheticKind::TwoMoons => {
                let y = (i % 2) as f64;
                let t = std::f64::consts::PI * (i / 2) as f64 / ((n / 2).max(2) - 1) as f64;
                let (mx, my) = if y == 0.0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                let x = vec![
                    clip((mx - 0.5) / 1.6 + noise * rng.sample::<f64, _>(StandardNormal)),
                    clip((my - 0.25) / 1.6 + noise * rng.sample::<f64, _>(StandardNormal)),
                ];
                Datum::new(x, F::of(y))
            }
            SyntheticKind::LinearRegression => {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let y = x.iter().sum::<f64>() * scale + noise * rng.sample::<f64, _>(StandardNormal);
                Datum::new(x.into_iter().map(F::of).collect(), F::of(y))
            }
        };
        data.push(datum);
    }
    let labels = match kind {
        SyntheticKind::LinearRegression => LabelKind::Regression,
        _ => LabelKind::Classes(2),
    };
    Dataset::new(data, (-F::one(), F::one()), labels)
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
