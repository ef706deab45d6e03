//! Reader for the big-endian IDX format used by MNIST.
//!
//! Images: magic `0x00000803`, then count, rows, cols (u32 BE) and
//! `count * rows * cols` unsigned bytes. Labels: magic `0x00000801`, count,
//! then `count` bytes.

use std::path::Path;

use super::{Dataset, ProblemError};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Classes assumed for digit labels; more are allowed if labels exceed 9.
const DIGIT_CLASSES: usize = 10;

fn read_file(path: &Path) -> Result<Vec<u8>, ProblemError> {
    std::fs::read(path).map_err(|source| ProblemError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn header(bytes: &[u8], path: &Path, words: usize) -> Result<Vec<u32>, ProblemError> {
    if bytes.len() < 4 * words {
        return Err(ProblemError::Truncated {
            path: path.to_path_buf(),
            expected: 4 * words,
            found: bytes.len(),
        });
    }
    Ok(bytes[..4 * words]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_magic(found: u32, expected: u32, path: &Path) -> Result<(), ProblemError> {
    if found != expected {
        return Err(ProblemError::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Returns `(pixels, count, rows, cols)`; pixels are raw bytes.
pub fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize), ProblemError> {
    let bytes = read_file(path)?;
    // Magic first so that a wrong file type is reported as such even if short.
    check_magic(header(&bytes, path, 1)?[0], IMAGES_MAGIC, path)?;
    let h = header(&bytes, path, 4)?;
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let expected = count * rows * cols;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(ProblemError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: payload.len(),
        });
    }
    Ok((payload[..expected].to_vec(), count, rows, cols))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, ProblemError> {
    let bytes = read_file(path)?;
    check_magic(header(&bytes, path, 1)?[0], LABELS_MAGIC, path)?;
    let count = header(&bytes, path, 2)?[1] as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(ProblemError::Truncated {
            path: path.to_path_buf(),
            expected: count,
            found: payload.len(),
        });
    }
    Ok(payload[..count].to_vec())
}

/// Load an image/label file pair. Pixels are scaled to `[0, 1]` and each
/// image is flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, ProblemError> {
    let (pixels, count, rows, cols) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(ProblemError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = labels
        .iter()
        .map(|l| l + 1)
        .max()
        .unwrap_or(0)
        .max(DIGIT_CLASSES);
    Dataset::new(features, labels, rows * cols, n_classes)
}
