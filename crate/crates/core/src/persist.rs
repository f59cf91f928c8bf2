//! Binary matrix blobs: little-endian `f64`, row-major, checksummed.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::Matrix;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn matrix_to_bytes(m: &Matrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes the blob and returns its SHA-256.
pub fn write_blob(path: &Path, m: &Matrix) -> Result<String> {
    let bytes = matrix_to_bytes(m);
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_blob(path: &Path, rows: usize, cols: usize, checksum: &str) -> Result<Matrix> {
    let bytes = fs::read(path)?;
    let actual = sha256_hex(&bytes);
    if actual != checksum {
        return Err(Error::ChecksumMismatch {
            expected: checksum.to_string(),
            actual,
            quarantined: path.to_path_buf(),
        });
    }
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "blob {} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            rows * cols * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// `state.json` → `state.bin`.
pub fn blob_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
