//! Proper orthogonal decomposition of snapshot matrices.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::matfile::DenseMatrix;

/// Leading left singular vectors of an uncentered snapshot matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// `N × n`, orthonormal columns.
    pub basis: DenseMatrix,
    /// All computed singular values, nonincreasing (length `min(N, M)`).
    pub singular_values: Vec<f64>,
}

impl PodBasis {
    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn size(&self) -> usize {
        self.basis.cols
    }

    /// Squared Frobenius norm of the discarded part, `Σ_{k>n} σ_k²`.
    pub fn tail_energy(&self) -> f64 {
        self.singular_values[self.size()..].iter().map(|s| s * s).sum()
    }
}

/// Thin SVD `X = U Σ Vᵀ` returning `(U, σ)` with `σ` nonincreasing.
fn left_singular(x: &Mat<f64>) -> Result<(Mat<f64>, Vec<f64>)> {
    let (n, m) = (x.nrows(), x.ncols());
    if m * 8 <= n {
        // Gram route: XᵀX = V Σ² Vᵀ, U = X V Σ⁻¹.
        let gram = x.transpose() * x;
        let eig = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let vals = eig.S().column_vector();
        let vecs = eig.U();
        let mut sigma = Vec::with_capacity(m);
        let mut u = Mat::<f64>::zeros(n, m);
        for k in 0..m {
            let src = m - 1 - k;
            let s = vals[src].max(0.0).sqrt();
            sigma.push(s);
            if s > 0.0 {
                let col = x * vecs.col(src);
                for i in 0..n {
                    u[(i, k)] = col[i] / s;
                }
            }
        }
        Ok((u, sigma))
    } else {
        let svd = x
            .thin_svd()
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let s = svd.S().column_vector();
        let sigma = (0..s.nrows()).map(|k| s[k]).collect();
        Ok((svd.U().to_owned(), sigma))
    }
}

/// Re-orthonormalizes columns by two passes of modified Gram–Schmidt.
fn orthonormalize(u: &mut Mat<f64>) {
    for _ in 0..2 {
        for j in 0..u.ncols() {
            for k in 0..j {
                let d: f64 = (0..u.nrows()).map(|i| u[(i, j)] * u[(i, k)]).sum();
                for i in 0..u.nrows() {
                    let v = u[(i, k)];
                    u[(i, j)] -= d * v;
                }
            }
            let nrm = (0..u.nrows()).map(|i| u[(i, j)].powi(2)).sum::<f64>().sqrt();
            for i in 0..u.nrows() {
                u[(i, j)] /= nrm;
            }
        }
    }
}

/// Numerical rank with the usual `σ₁·max(N, M)·ε` cutoff (relaxed to
/// `σ₁·1e-7` on the Gram route, which only resolves singular values to
/// about `sqrt(ε)` relative accuracy).
fn numerical_rank(sigma: &[f64], n: usize, m: usize) -> usize {
    let s1 = sigma.first().copied().unwrap_or(0.0);
    let rel = if m * 8 <= n { 1e-7 } else { n.max(m) as f64 * f64::EPSILON };
    sigma.iter().filter(|&&s| s > s1 * rel).count()
}

/// POD basis of size `n` from the columns of `snapshots`. Columns are signed
/// so that their largest-magnitude entry is positive.
pub fn pod(snapshots: &DenseMatrix, n: usize) -> Result<PodBasis> {
    let (rows, cols) = (snapshots.rows, snapshots.cols);
    if n == 0 || n > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "POD size {n} must be in 1..={} for a {rows}x{cols} snapshot matrix",
            rows.min(cols)
        )));
    }
    if snapshots.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix"));
    }
    let x = snapshots.to_faer();
    let (u, sigma) = left_singular(&x)?;
    let rank = numerical_rank(&sigma, rows, cols);
    if n > rank {
        return Err(Error::RankTooLow { rank, requested: n });
    }
    let mut basis = Mat::<f64>::from_fn(rows, n, |i, j| u[(i, j)]);
    orthonormalize(&mut basis);
    for j in 0..n {
        let mut best = 0;
        for i in 1..rows {
            if basis[(i, j)].abs() > basis[(best, j)].abs() {
                best = i;
            }
        }
        if basis[(best, j)] < 0.0 {
            for i in 0..rows {
                basis[(i, j)] = -basis[(i, j)];
            }
        }
    }
    Ok(PodBasis {
        basis: DenseMatrix::from_faer(&basis),
        singular_values: sigma,
    })
}
