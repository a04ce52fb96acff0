//! Flat parameter dump: magic `WRB1`, little-endian `u32` dimension, then
//! `dim` little-endian `f64` weights followed by `gamma` as `f64`.

use std::fs;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::Scalar;

pub const PARAMS_MAGIC: &[u8; 4] = b"WRB1";

pub fn params_bytes<F: Scalar>(p: &ModelParams<F>) -> Result<Vec<u8>> {
    let dim = u32::try_from(p.dim()).map_err(|_| Error::ParamFormat(format!("dimension {} too large", p.dim())))?;
    let mut out = Vec::with_capacity(8 + 8 * (p.dim() + 1));
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&dim.to_le_bytes());
    for v in p.theta.iter().chain(std::iter::once(&p.gamma)) {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    Ok(out)
}

pub fn write_params<F: Scalar>(path: &Path, p: &ModelParams<F>) -> Result<()> {
    write_atomic(path, &params_bytes(p)?)
}

pub fn read_params<F: Scalar>(path: &Path) -> Result<ModelParams<F>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != PARAMS_MAGIC {
        return Err(Error::ParamFormat(format!("{} does not start with WRB1", path.display())));
    }
    let dim = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    let want = 8 + 8 * (dim + 1);
    if bytes.len() != want {
        return Err(Error::ParamFormat(format!(
            "{}: expected {want} bytes for dimension {dim}, found {}",
            path.display(),
            bytes.len()
        )));
    }
    let vals: Vec<F> = bytes[8..]
        .chunks_exact(8)
        .map(|c| F::of(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
        .collect();
    ModelParams::from_flat(&vals)
}
