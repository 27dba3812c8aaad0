//! Common decoder interface for linear (POD), identity and autoencoder
//! decoders, so the ROM driver does not care which one it is given.

use std::fmt::Debug;

use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dense_matvec, dense_transpose_matvec};
use crate::matfile::DenseMatrix;
use crate::pod::PodBasis;

/// Decoder Jacobian `∂g/∂z`.
#[derive(Clone, Debug)]
pub enum Jacobian {
    /// `g(z) = z` on an `n`-dimensional state.
    Identity(usize),
    Dense(Mat<f64>),
}

impl Jacobian {
    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            Jacobian::Identity(n) => Mat::identity(*n, *n),
            Jacobian::Dense(m) => m.clone(),
        }
    }
}

pub trait Decoder: Send + Sync + Debug {
    fn latent_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    fn decode(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, z: &[f64]) -> Result<Jacobian>;

    /// Decoded state and Jacobian together; implementations may share work.
    fn decode_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Jacobian)> {
        Ok((self.decode(z)?, self.jacobian(z)?))
    }

    /// Latent coordinates of a full state.
    fn encode(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// A decoder producing only the listed output rows (the HR subnet).
    fn restrict(&self, rows: &[usize]) -> Result<Box<dyn Decoder>>;

    /// Number of trainable parameters, zero for non-learned decoders.
    fn parameter_count(&self) -> usize {
        0
    }
}

pub(crate) fn check_rows(rows: &[usize], n: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty row sample".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(Error::InvalidArgument(format!("sampled row {r} out of range 0..{n}")));
    }
    Ok(())
}

/// `g(z) = Φz`, `h(x) = Φᵀx`.
#[derive(Clone, Debug)]
pub struct LinearDecoder {
    basis: Mat<f64>,
}

impl LinearDecoder {
    pub fn new(basis: &DenseMatrix) -> Self {
        Self { basis: basis.to_faer() }
    }

    pub fn from_pod(pod: &PodBasis) -> Self {
        Self::new(&pod.basis)
    }

    pub fn basis(&self) -> &Mat<f64> {
        &self.basis
    }
}

impl Decoder for LinearDecoder {
    fn latent_dim(&self) -> usize {
        self.basis.ncols()
    }

    fn output_dim(&self) -> usize {
        self.basis.nrows()
    }

    fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("linear decoder input", self.latent_dim(), z.len())?;
        Ok(dense_matvec(&self.basis, z))
    }

    fn jacobian(&self, z: &[f64]) -> Result<Jacobian> {
        check_len("linear decoder input", self.latent_dim(), z.len())?;
        Ok(Jacobian::Dense(self.basis.clone()))
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("linear encoder input", self.output_dim(), x.len())?;
        Ok(dense_transpose_matvec(&self.basis, x))
    }

    fn restrict(&self, rows: &[usize]) -> Result<Box<dyn Decoder>> {
        check_rows(rows, self.output_dim())?;
        let b = Mat::from_fn(rows.len(), self.latent_dim(), |i, j| self.basis[(rows[i], j)]);
        Ok(Box::new(LinearDecoder { basis: b }))
    }
}

/// No reduction: the latent state is the full state, or a row selection of
/// it after restriction.
#[derive(Clone, Debug)]
pub struct IdentityDecoder {
    n: usize,
    rows: Option<Vec<usize>>,
}

impl IdentityDecoder {
    pub fn new(n: usize) -> Self {
        Self { n, rows: None }
    }
}

impl Decoder for IdentityDecoder {
    fn latent_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.rows.as_ref().map_or(self.n, |r| r.len())
    }

    fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("identity decoder input", self.n, z.len())?;
        Ok(match &self.rows {
            None => z.to_vec(),
            Some(r) => r.iter().map(|&k| z[k]).collect(),
        })
    }

    fn jacobian(&self, z: &[f64]) -> Result<Jacobian> {
        check_len("identity decoder input", self.n, z.len())?;
        Ok(match &self.rows {
            None => Jacobian::Identity(self.n),
            Some(r) => Jacobian::Dense(Mat::from_fn(r.len(), self.n, |i, j| if r[i] == j { 1.0 } else { 0.0 })),
        })
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.rows {
            None => {
                check_len("identity encoder input", self.n, x.len())?;
                Ok(x.to_vec())
            }
            Some(_) => Err(Error::InvalidArgument("a restricted identity decoder cannot encode".into())),
        }
    }

    fn restrict(&self, rows: &[usize]) -> Result<Box<dyn Decoder>> {
        check_rows(rows, self.output_dim())?;
        let base: Vec<usize> = match &self.rows {
            None => rows.to_vec(),
            Some(r) => rows.iter().map(|&k| r[k]).collect(),
        };
        Ok(Box::new(IdentityDecoder { n: self.n, rows: Some(base) }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis() -> DenseMatrix {
        // Orthonormal columns of a 4x2 matrix.
        let s = 0.5f64;
        DenseMatrix::from_columns(4, &[vec![s, s, s, s], vec![s, -s, s, -s]])
    }

    #[test]
    fn linear_decoder_roundtrip() {
        let d = LinearDecoder::new(&basis());
        assert_eq!(d.decode(&[0.0, 0.0]).unwrap(), vec![0.0; 4]);
        let z = [0.3, -1.7];
        let back = d.encode(&d.decode(&z).unwrap()).unwrap();
        assert!((back[0] - z[0]).abs() < 1e-15 && (back[1] - z[1]).abs() < 1e-15);
    }

    #[test]
    fn restriction_selects_rows() {
        let d = LinearDecoder::new(&basis());
        let r = d.restrict(&[1, 3]).unwrap();
        let full = d.decode(&[1.0, 2.0]).unwrap();
        assert_eq!(r.decode(&[1.0, 2.0]).unwrap(), vec![full[1], full[3]]);
        assert!(d.restrict(&[]).is_err());
        assert!(d.restrict(&[4]).is_err());

        let id = IdentityDecoder::new(3);
        let sub = id.restrict(&[2, 0]).unwrap();
        assert_eq!(sub.decode(&[1.0, 2.0, 3.0]).unwrap(), vec![3.0, 1.0]);
        let j = sub.jacobian(&[0.0; 3]).unwrap().to_dense();
        assert_eq!(j[(0, 2)], 1.0);
        assert_eq!(j[(1, 0)], 1.0);
    }
}
