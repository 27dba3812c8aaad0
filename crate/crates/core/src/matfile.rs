//! Binary dense-matrix file format.
//!
//! Layout (all integers little-endian):
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..8   | magic `DDROMMAT`                          |
//! | 8..12  | format version (`u32`, currently 1)       |
//! | 12..16 | reserved, zero                            |
//! | 16..24 | row count (`u64`)                         |
//! | 24..32 | column count (`u64`)                      |
//! | 32..   | `rows·cols` `f64` values, column-major    |
//!
//! Integrity checksums (SHA-256 of the whole file) live in the manifests
//! that reference matrix files, see [`sha256_file`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DDROMMAT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Column-major dense matrix as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Builds from equally long columns.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Self {
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "column length");
            data.extend_from_slice(c);
        }
        Self::new(rows, columns.len(), data)
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self::new(v.len(), 1, v.to_vec())
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn to_faer(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_faer(m: &faer::Mat<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                data.push(m[(i, j)]);
            }
        }
        Self::new(m.nrows(), m.ncols(), data)
    }
}

pub fn write_to(w: &mut impl Write, m: &DenseMatrix) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(m.rows as u64).to_le_bytes())?;
    w.write_all(&(m.cols as u64).to_le_bytes())?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_from(r: &mut impl Read, path: &Path) -> Result<DenseMatrix> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| fmt("truncated header".into()))?;
    if &header[0..8] != MAGIC {
        return Err(fmt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(fmt(format!("unsupported format version {version}")));
    }
    let rows = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(header[24..32].try_into().unwrap()) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| fmt("matrix size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < n * 8 {
        return Err(fmt(format!(
            "truncated data: expected {} bytes, found {}",
            n * 8,
            bytes.len()
        )));
    }
    if bytes.len() > n * 8 {
        return Err(fmt("trailing bytes after matrix data".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::new(rows, cols, data))
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    read_from(&mut r, path)
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads a matrix and verifies it against an expected checksum.
/// Reads a matrix and verifies its checksum. Structural problems (magic,
/// version, size) are reported before checksum mismatches.
pub fn read_matrix_checked(path: &Path, sha256: &str) -> Result<DenseMatrix> {
    let m = read_matrix(path)?;
    if sha256_file(path)? != sha256 {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    Ok(m)
}

/// Index vector stored as an `n × 1` matrix.
pub fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    let v: Vec<f64> = idx.iter().map(|&i| i as f64).collect();
    write_matrix(path, &DenseMatrix::column_vector(&v))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let m = read_matrix(path)?;
    if m.cols != 1 && m.rows > 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("index vector must have one column, found {}", m.cols),
        });
    }
    m.data
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: format!("invalid index value {v}"),
                })
            }
        })
        .collect()
}
