//! Collocation hyper-reduction: greedy row sampling of subdomain residuals
//! and the Gaussian test matrix that compresses the compatibility
//! constraints.

use std::path::Path;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::matfile::DenseMatrix;
use crate::pod::pod;

/// Sorted residual rows kept by a subdomain under hyper-reduction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingMatrix {
    pub subdomain: usize,
    pub rows: Vec<usize>,
}

impl SamplingMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `B r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&k| r[k]).collect()
    }
}

/// Greedy collocation sampling. Basis columns are visited cyclically; at
/// each step the current column is least-squares fitted on the already
/// sampled rows by the columns preceding it (all other columns once every
/// column has been visited), and the unsampled row with the largest fit
/// error is added. Ties go to the lowest row index.
pub fn greedy_sample(basis: &DenseMatrix, n_samples: usize) -> Result<Vec<usize>> {
    let (nr, k) = (basis.rows, basis.cols);
    if k == 0 {
        return Err(Error::InvalidArgument("residual basis has no columns".into()));
    }
    if n_samples == 0 || n_samples > nr {
        return Err(Error::InvalidArgument(format!(
            "cannot sample {n_samples} of {nr} residual rows"
        )));
    }
    let mut sampled: Vec<usize> = Vec::with_capacity(n_samples);
    let mut taken = vec![false; nr];
    for step in 0..n_samples {
        let j = step % k;
        let fit_cols: Vec<usize> = if step < k {
            (0..j).collect()
        } else {
            (0..k).filter(|&c| c != j).collect()
        };
        let target = basis.col(j);
        let err: Vec<f64> = if fit_cols.is_empty() || sampled.is_empty() {
            target.to_vec()
        } else {
            let a = Mat::from_fn(sampled.len(), fit_cols.len(), |r, c| basis.get(sampled[r], fit_cols[c]));
            let b: Vec<f64> = sampled.iter().map(|&r| target[r]).collect();
            let coef = lstsq(&a, &b);
            (0..nr)
                .map(|r| target[r] - fit_cols.iter().zip(&coef).map(|(&c, w)| w * basis.get(r, c)).sum::<f64>())
                .collect()
        };
        let mut best: Option<(usize, f64)> = None;
        for r in (0..nr).filter(|&r| !taken[r]) {
            let v = err[r].abs();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((r, v));
            }
        }
        let (r, _) = best.expect("fewer samples than rows");
        taken[r] = true;
        sampled.push(r);
    }
    sampled.sort_unstable();
    Ok(sampled)
}

/// Samples `n_samples` rows of one subdomain from its residual snapshots
/// (`N_r × M_r`), using a POD residual basis of `ceil(n_samples/2)` columns
/// (fewer if the snapshots have lower rank).
pub fn sample_subdomain(subdomain: usize, residual_snapshots: &DenseMatrix, n_samples: usize) -> Result<SamplingMatrix> {
    let want = n_samples.div_ceil(2).min(residual_snapshots.rows.min(residual_snapshots.cols));
    let mut k = want;
    let basis = loop {
        match pod(residual_snapshots, k) {
            Ok(b) => break b,
            Err(Error::RankTooLow { rank, .. }) if rank >= 1 && rank < k => k = rank,
            Err(e) => return Err(e),
        }
    };
    Ok(SamplingMatrix {
        subdomain,
        rows: greedy_sample(&basis.basis, n_samples)?,
    })
}

/// Test matrix `C` applied to the compatibility constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakConstraintMatrix {
    /// `n_C × N_a`.
    pub matrix: Mat<f64>,
    pub seed: u64,
    pub identity: bool,
}

impl WeakConstraintMatrix {
    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_constraints(&self) -> usize {
        self.matrix.ncols()
    }

    /// Bypass mode: `C = I`, weak constraints equal the strong ones.
    pub fn identity(n_a: usize) -> Self {
        Self {
            matrix: Mat::identity(n_a, n_a),
            seed: 0,
            identity: true,
        }
    }
}

/// `n_C × N_a` matrix of i.i.d. standard normals (ChaCha8 stream seeded with
/// `seed`, filled row by row) scaled by `1/sqrt(n_C)`.
pub fn gaussian_test_matrix(n_c: usize, n_a: usize, seed: u64) -> Result<WeakConstraintMatrix> {
    if n_c == 0 || n_c > n_a {
        return Err(Error::InvalidArgument(format!(
            "test matrix rows n_C={n_c} must be in 1..={n_a}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n_c as f64).sqrt();
    let mut m = Mat::<f64>::zeros(n_c, n_a);
    for i in 0..n_c {
        for j in 0..n_a {
            let v: f64 = StandardNormal.sample(&mut rng);
            m[(i, j)] = v * scale;
        }
    }
    Ok(WeakConstraintMatrix {
        matrix: m,
        seed,
        identity: false,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleManifest {
    format_version: u32,
    subdomains: Vec<SamplingMatrix>,
}

pub fn save_samples(path: &Path, samples: &[SamplingMatrix]) -> Result<()> {
    let m = SampleManifest {
        format_version: 1,
        subdomains: samples.to_vec(),
    };
    let text = toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<SamplingMatrix>> {
    let text = std::fs::read_to_string(path)?;
    let m: SampleManifest = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if m.format_version != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("unsupported sample manifest version {}", m.format_version),
        });
    }
    Ok(m.subdomains)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_vector_basis_selects_its_row() {
        for j in 0..5 {
            let mut e = vec![0.0; 5];
            e[j] = 1.0;
            let b = DenseMatrix::column_vector(&e);
            assert_eq!(greedy_sample(&b, 1).unwrap(), vec![j]);
        }
    }

    #[test]
    fn too_many_samples_rejected() {
        let b = DenseMatrix::zeros(4, 1);
        assert!(greedy_sample(&b, 5).is_err());
        assert!(gaussian_test_matrix(5, 4, 0).is_err());
        assert!(gaussian_test_matrix(0, 4, 0).is_err());
    }

    #[test]
    fn oversampling_returns_distinct_rows() {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..20).map(|i| ((i * (j + 2)) as f64 * 0.21).sin()).collect())
            .collect();
        let b = DenseMatrix::from_columns(20, &cols);
        let s = greedy_sample(&b, 11).unwrap();
        assert_eq!(s.len(), 11);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, greedy_sample(&b, 11).unwrap());
    }

    #[test]
    fn test_matrix_reproducible_and_scaled() {
        let a = gaussian_test_matrix(50, 200, 7).unwrap();
        let b = gaussian_test_matrix(50, 200, 7).unwrap();
        assert_eq!(a, b);
        let c = gaussian_test_matrix(50, 200, 8).unwrap();
        assert_ne!(a.matrix, c.matrix);
        // Entries have variance 1/n_C.
        let var: f64 = (0..50).flat_map(|i| (0..200).map(move |j| (i, j))).map(|(i, j)| a.matrix[(i, j)].powi(2)).sum::<f64>()
            / (50.0 * 200.0);
        assert!((var * 50.0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn samples_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hr.txt");
        let s = vec![
            SamplingMatrix { subdomain: 0, rows: vec![1, 5, 9] },
            SamplingMatrix { subdomain: 1, rows: vec![0, 2] },
        ];
        save_samples(&p, &s).unwrap();
        assert_eq!(load_samples(&p).unwrap(), s);
    }
}
