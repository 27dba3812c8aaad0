use faer::Mat;

use super::network::{jacobian_row, swish, swish_pair, SparseAutoencoder};
use crate::decoder::{check_rows, Decoder, Jacobian};
use crate::error::{check_len, Error, Result};

/// The part of a sparse decoder needed for a subset of its outputs: only
/// hidden nodes with a mask entry into a sampled output row are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Subnet {
    /// Sampled output rows of the parent decoder.
    rows: Vec<usize>,
    /// Retained hidden nodes of the parent decoder, ascending.
    hidden: Vec<usize>,
    latent: usize,
    /// `|hidden| × n`, row-major.
    w_d1: Vec<f64>,
    b_d1: Vec<f64>,
    /// Output rows over compact hidden indices, same entry order as the parent.
    out_ptr: Vec<usize>,
    out_cols: Vec<usize>,
    out_vals: Vec<f64>,
    b_out: Vec<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
}

/// Builds the subnet computing outputs `rows` of `ae`'s decoder.
pub fn extract_subnet(ae: &SparseAutoencoder, rows: &[usize]) -> Result<Subnet> {
    check_rows(rows, ae.n_input())?;
    let n = ae.architecture().latent;
    let h = ae.architecture().hidden;
    let mut keep = vec![false; h];
    for &r in rows {
        for &j in ae.w_dec.row(r).0 {
            keep[j] = true;
        }
    }
    let hidden: Vec<usize> = (0..h).filter(|&j| keep[j]).collect();
    let mut compact = vec![usize::MAX; h];
    for (c, &j) in hidden.iter().enumerate() {
        compact[j] = c;
    }
    let mut w_d1 = Vec::with_capacity(hidden.len() * n);
    for &j in &hidden {
        w_d1.extend_from_slice(&ae.w_d1[j * n..(j + 1) * n]);
    }
    let mut out_ptr = vec![0];
    let mut out_cols = Vec::new();
    let mut out_vals = Vec::new();
    for &r in rows {
        let (c, v) = ae.w_dec.row(r);
        out_cols.extend(c.iter().map(|&j| compact[j]));
        out_vals.extend_from_slice(v);
        out_ptr.push(out_cols.len());
    }
    Ok(Subnet {
        rows: rows.to_vec(),
        b_d1: hidden.iter().map(|&j| ae.b_d1[j]).collect(),
        hidden,
        latent: n,
        w_d1,
        out_ptr,
        out_cols,
        out_vals,
        b_out: rows.iter().map(|&r| ae.b_dec[r]).collect(),
        center: rows.iter().map(|&r| ae.norm.center[r]).collect(),
        scale: rows.iter().map(|&r| ae.norm.scale[r]).collect(),
    })
}

impl Subnet {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Retained hidden nodes, as indices into the parent decoder.
    pub fn hidden_nodes(&self) -> &[usize] {
        &self.hidden
    }

    fn pre_activation(&self, z: &[f64], c: usize) -> f64 {
        let n = self.latent;
        self.b_d1[c] + self.w_d1[c * n..(c + 1) * n].iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }

    fn check(&self, z: &[f64]) -> Result<()> {
        check_len("latent vector", self.latent, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent vector"));
        }
        Ok(())
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let h2: Vec<f64> = (0..self.hidden.len()).map(|c| swish(self.pre_activation(z, c))).collect();
        Ok((0..self.rows.len())
            .map(|i| {
                let (a, b) = (self.out_ptr[i], self.out_ptr[i + 1]);
                let y = self.b_out[i]
                    + self.out_cols[a..b]
                        .iter()
                        .zip(&self.out_vals[a..b])
                        .map(|(&c, w)| w * h2[c])
                        .sum::<f64>();
                self.center[i] + self.scale[i] * y
            })
            .collect())
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<Mat<f64>> {
        Ok(self.decode_with_jacobian(z)?.1)
    }

    pub fn decode_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
        self.check(z)?;
        let n = self.latent;
        let (h2, dh): (Vec<f64>, Vec<f64>) = (0..self.hidden.len()).map(|c| swish_pair(self.pre_activation(z, c))).unzip();
        let m = self.rows.len();
        let mut x = Vec::with_capacity(m);
        let mut buf = vec![0.0; m * n];
        for i in 0..m {
            let (a, b) = (self.out_ptr[i], self.out_ptr[i + 1]);
            let (cols, vals) = (&self.out_cols[a..b], &self.out_vals[a..b]);
            let y = self.b_out[i] + cols.iter().zip(vals).map(|(&c, w)| w * h2[c]).sum::<f64>();
            x.push(self.center[i] + self.scale[i] * y);
            jacobian_row(self.scale[i], cols, vals, &dh, &self.w_d1, &mut buf[i * n..(i + 1) * n]);
        }
        Ok((x, Mat::from_fn(m, n, |i, k| buf[i * n + k])))
    }

    /// Sub-subnet for a subset of this subnet's outputs (given as positions
    /// into [`Subnet::rows`]).
    pub fn select(&self, positions: &[usize]) -> Result<Subnet> {
        check_rows(positions, self.rows.len())?;
        let n = self.latent;
        let mut keep = vec![false; self.hidden.len()];
        for &p in positions {
            for e in self.out_ptr[p]..self.out_ptr[p + 1] {
                keep[self.out_cols[e]] = true;
            }
        }
        let kept: Vec<usize> = (0..self.hidden.len()).filter(|&c| keep[c]).collect();
        let mut compact = vec![usize::MAX; self.hidden.len()];
        for (k, &c) in kept.iter().enumerate() {
            compact[c] = k;
        }
        let mut out_ptr = vec![0];
        let mut out_cols = Vec::new();
        let mut out_vals = Vec::new();
        for &p in positions {
            for e in self.out_ptr[p]..self.out_ptr[p + 1] {
                out_cols.push(compact[self.out_cols[e]]);
                out_vals.push(self.out_vals[e]);
            }
            out_ptr.push(out_cols.len());
        }
        Ok(Subnet {
            rows: positions.iter().map(|&p| self.rows[p]).collect(),
            hidden: kept.iter().map(|&c| self.hidden[c]).collect(),
            latent: n,
            w_d1: kept.iter().flat_map(|&c| self.w_d1[c * n..(c + 1) * n].iter().copied()).collect(),
            b_d1: kept.iter().map(|&c| self.b_d1[c]).collect(),
            out_ptr,
            out_cols,
            out_vals,
            b_out: positions.iter().map(|&p| self.b_out[p]).collect(),
            center: positions.iter().map(|&p| self.center[p]).collect(),
            scale: positions.iter().map(|&p| self.scale[p]).collect(),
        })
    }

    /// Weights and biases the subnet touches.
    pub fn n_parameters(&self) -> usize {
        self.w_d1.len() + self.b_d1.len() + self.out_vals.len() + self.b_out.len()
    }
}

impl Decoder for Subnet {
    fn latent_dim(&self) -> usize {
        self.latent
    }

    fn output_dim(&self) -> usize {
        self.rows.len()
    }

    fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Subnet::decode(self, z)
    }

    fn jacobian(&self, z: &[f64]) -> Result<Jacobian> {
        Ok(Jacobian::Dense(Subnet::jacobian(self, z)?))
    }

    fn decode_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Jacobian)> {
        let (x, j) = Subnet::decode_with_jacobian(self, z)?;
        Ok((x, Jacobian::Dense(j)))
    }

    fn encode(&self, _x: &[f64]) -> Result<Vec<f64>> {
        Err(Error::InvalidArgument("a decoder subnet has no encoder".into()))
    }

    fn restrict(&self, rows: &[usize]) -> Result<Box<dyn Decoder>> {
        Ok(Box::new(self.select(rows)?))
    }

    fn parameter_count(&self) -> usize {
        self.n_parameters()
    }
}
