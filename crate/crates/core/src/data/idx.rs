//! IDX image/label files (big-endian headers, unsigned byte payloads).

use std::fs;
use std::path::Path;

use super::{write_atomic, Dataset, LabelKind};
use crate::error::{Error, Result};
use crate::model::Datum;
use crate::scalar::Scalar;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn need(path: &Path, bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<()> {
    need(path, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Loads up to `limit` items, mapping pixel `p` to `2 p / 255 - 1`.
pub fn load_idx<F: Scalar>(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset<F>> {
    let img = read(images)?;
    check_magic(images, &img, IMAGES_MAGIC)?;
    need(images, &img, 16)?;
    let (n_img, rows, cols) = (be_u32(&img, 4) as usize, be_u32(&img, 8) as usize, be_u32(&img, 12) as usize);
    let lab = read(labels)?;
    check_magic(labels, &lab, LABELS_MAGIC)?;
    need(labels, &lab, 8)?;
    let n_lab = be_u32(&lab, 4) as usize;
    if n_img != n_lab {
        return Err(Error::CountMismatch {
            images: n_img,
            labels: n_lab,
        });
    }
    let pixels = rows * cols;
    need(images, &img, 16 + n_img * pixels)?;
    need(labels, &lab, 8 + n_lab)?;
    let n = limit.map_or(n_img, |l| l.min(n_img));
    let data: Vec<Datum<F>> = (0..n)
        .map(|i| {
            let px = &img[16 + i * pixels..16 + (i + 1) * pixels];
            let x = px.iter().map(|&p| F::of(2.0 * f64::from(p) / 255.0 - 1.0)).collect();
            Datum::new(x, F::of(f64::from(lab[8 + i])))
        })
        .collect();
    let classes = lab[8..8 + n].iter().copied().max().map_or(1, |m| usize::from(m) + 1);
    Dataset::new(data, (-F::one(), F::one()), LabelKind::Classes(classes))
}

/// Writes an image file of `rows x cols` byte images and the matching label file.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
    images: &[Vec<u8>],
    labels: &[u8],
) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if let Some(bad) = images.iter().find(|im| im.len() != rows * cols) {
        return Err(Error::DimensionMismatch {
            what: "IDX image",
            expected: rows * cols,
            got: bad.len(),
        });
    }
    let to_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit an IDX header")));
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [images.len(), rows, cols] {
        img.extend_from_slice(&to_u32(v)?.to_be_bytes());
    }
    images.iter().for_each(|im| img.extend_from_slice(im));
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&to_u32(labels.len())?.to_be_bytes());
    lab.extend_from_slice(labels);
    write_atomic(images_path, &img)?;
    write_atomic(labels_path, &lab)
}
