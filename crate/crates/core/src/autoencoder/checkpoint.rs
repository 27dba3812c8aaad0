//! Checkpoint files for trained autoencoders.
//!
//! Layout: magic `DDROMCKP`, `u32` version, `u32` reserved, `u64` header
//! length, a TOML header (architecture, seed, payload checksum), then the
//! parameter blocks as matrix records (see [`crate::matfile`]):
//! normalization centre and scale, the eight parameter blocks of
//! [`SparseAutoencoder::parameters`]. Masked layers store on-mask values
//! only; the mask is rebuilt from the architecture.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{Architecture, Normalization, SparseAutoencoder};
use crate::error::{Error, Result};
use crate::matfile::{self, DenseMatrix};

const MAGIC: &[u8; 8] = b"DDROMCKP";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    n_input: usize,
    architecture: Architecture,
    seed: u64,
    payload_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(ae: &SparseAutoencoder, seed: u64, path: &Path) -> Result<()> {
    let mut payload = Vec::new();
    let norm = ae.normalization();
    matfile::write_to(&mut payload, &DenseMatrix::column_vector(&norm.center))?;
    matfile::write_to(&mut payload, &DenseMatrix::column_vector(&norm.scale))?;
    for p in ae.parameters() {
        matfile::write_to(&mut payload, &DenseMatrix::column_vector(p))?;
    }
    let header = Header {
        n_input: ae.n_input(),
        architecture: ae.architecture(),
        seed,
        payload_sha256: hex(&payload),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = Vec::with_capacity(24 + text.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&payload);
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a checkpoint; returns the network and the seed it was trained with.
pub fn load_checkpoint(path: &Path) -> Result<(SparseAutoencoder, u64)> {
    let bytes = std::fs::read(path)?;
    let fmt = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(fmt("not an autoencoder checkpoint"));
    }
    if u32::from_le_bytes(bytes[8..12].try_into().unwrap()) != VERSION {
        return Err(fmt("unsupported checkpoint version"));
    }
    let hlen = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() < 24 + hlen {
        return Err(fmt("truncated header"));
    }
    let text = std::str::from_utf8(&bytes[24..24 + hlen]).map_err(|_| fmt("header is not UTF-8"))?;
    let header: Header = toml::from_str(text).map_err(|e| fmt(&e.to_string()))?;
    let payload = &bytes[24 + hlen..];
    if hex(payload) != header.payload_sha256 {
        return Err(Error::Checksum(path.to_path_buf()));
    }
    let mut reader: &[u8] = payload;
    let mut next = || -> Result<Vec<f64>> { Ok(read_record(&mut reader, path)?.data) };
    let center = next()?;
    let scale = next()?;
    let mut ae = SparseAutoencoder::zeros(header.n_input, header.architecture, Normalization { center, scale })?;
    let blocks: Vec<Vec<f64>> = (0..8).map(|_| next()).collect::<Result<_>>()?;
    for (dst, src) in ae.parameters_mut().into_iter().zip(blocks) {
        if dst.len() != src.len() {
            return Err(fmt("parameter block size disagrees with architecture"));
        }
        dst.copy_from_slice(&src);
    }
    if !reader.is_empty() {
        return Err(fmt("trailing bytes after parameter blocks"));
    }
    Ok((ae, header.seed))
}

fn read_record(reader: &mut &[u8], path: &Path) -> Result<DenseMatrix> {
    let mut head = [0u8; matfile::HEADER_LEN];
    reader.read_exact(&mut head).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        reason: "truncated parameter block".into(),
    })?;
    let rows = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[24..32].try_into().unwrap()) as usize;
    let len = rows.saturating_mul(cols).saturating_mul(8);
    if reader.len() < len {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "truncated parameter block".into(),
        });
    }
    let (body, rest) = reader.split_at(len);
    let mut rec = head.to_vec();
    rec.extend_from_slice(body);
    *reader = rest;
    matfile::read_from(&mut rec.as_slice(), path)
}
