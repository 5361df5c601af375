//! Reader for the big-endian IDX container used by the MNIST files.

use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    let b = bytes.get(at..at + 4)?;
    Some(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

fn idx_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// Returns `(count, rows, cols, pixels)` with pixels scaled to [0, 1].
pub fn parse_images(bytes: &[u8], name: &str) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0).ok_or_else(|| idx_err(name, "truncated header"))?;
    if magic != IMAGES_MAGIC {
        return Err(idx_err(name, format!("bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}")));
    }
    let (count, rows, cols) = match (be_u32(bytes, 4), be_u32(bytes, 8), be_u32(bytes, 12)) {
        (Some(n), Some(r), Some(c)) => (n as usize, r as usize, c as usize),
        _ => return Err(idx_err(name, "truncated header")),
    };
    let body = &bytes[16..];
    let want = count * rows * cols;
    if body.len() < want {
        return Err(idx_err(name, format!("truncated: {} of {want} pixel bytes", body.len())));
    }
    let pixels = body[..want].iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok((count, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8], name: &str) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0).ok_or_else(|| idx_err(name, "truncated header"))?;
    if magic != LABELS_MAGIC {
        return Err(idx_err(name, format!("bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}")));
    }
    let count = be_u32(bytes, 4).ok_or_else(|| idx_err(name, "truncated header"))? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(idx_err(name, format!("truncated: {} of {count} labels", body.len())));
    }
    Ok(body[..count].iter().map(|&y| y as usize).collect())
}

fn assemble(images: &[u8], image_name: &str, labels: &[u8], label_name: &str) -> Result<LabeledDataset> {
    let (count, rows, cols, pixels) = parse_images(images, image_name)?;
    let ys = parse_labels(labels, label_name)?;
    if ys.len() != count {
        return Err(idx_err(
            label_name,
            format!("count mismatch: {count} images but {} labels", ys.len()),
        ));
    }
    let n_classes = ys.iter().max().map_or(2, |&m| (m + 1).max(2));
    LabeledDataset::new(pixels, ys, rows * cols, n_classes)
}

pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    assemble(images, "images", labels, "labels")
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    assemble(
        &images,
        &images_path.display().to_string(),
        &labels,
        &labels_path.display().to_string(),
    )
}
