//! Small sparse/dense helpers shared by the solvers.
//!
//! Sparse matrices are kept in a minimal CSR type; factorizations are
//! delegated to faer (sparse LU for large systems, dense LBLᵀ/LU otherwise).

use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from raw CSR arrays. Column indices within a row must be
    /// strictly increasing.
    pub fn from_raw(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), nrows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        debug_assert!(col_idx.iter().all(|&c| c < ncols));
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    /// `selfᵀ y`.
    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![0.0; self.ncols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yr;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Keeps the columns in `range`, shifted to start at zero.
    pub fn column_range(&self, start: usize, end: usize) -> CsrMatrix {
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if c >= start && c < end {
                    col_idx.push(c - start);
                    values.push(v);
                }
            }
            row_ptr[r + 1] = col_idx.len();
        }
        CsrMatrix::from_raw(self.nrows, end - start, row_ptr, col_idx, values)
    }

    /// Upper-left embedding shifted by (`row_off`, `col_off`), as triplets.
    pub fn shifted_triplets(&self, row_off: usize, col_off: usize) -> Vec<(usize, usize, f64)> {
        self.triplets()
            .map(|(r, c, v)| (r + row_off, c + col_off, v))
            .collect()
    }

    /// Triplets of `selfᵀ self`. Each entry is accumulated from the same
    /// products in the same order for (a, b) and (b, a), so the result is
    /// exactly symmetric.
    pub fn gram_triplets(&self, offset: usize) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&ca, &va) in cols.iter().zip(vals) {
                for (&cb, &vb) in cols.iter().zip(vals) {
                    out.push((ca + offset, cb + offset, va * vb));
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// `self · d` for a dense right factor.
    pub fn mul_dense(&self, d: &Mat<f64>) -> Mat<f64> {
        assert_eq!(d.nrows(), self.ncols);
        let mut out = Mat::zeros(self.nrows, d.ncols());
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for k in 0..d.ncols() {
                    out[(r, k)] += v * d[(c, k)];
                }
            }
        }
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn norm1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// `m · x` for a dense matrix.
pub fn dense_matvec(m: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    let mut out = vec![0.0; m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = m.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * xj;
        }
    }
    out
}

/// `mᵀ · y` for a dense matrix.
pub fn dense_transpose_matvec(m: &Mat<f64>, y: &[f64]) -> Vec<f64> {
    assert_eq!(m.nrows(), y.len());
    (0..m.ncols())
        .map(|j| {
            let col = m.col(j);
            (0..m.nrows()).map(|i| col[i] * y[i]).sum()
        })
        .collect()
}

/// Solves a square sparse system given as triplets (duplicates summed).
pub fn solve_sparse(n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(rhs.len(), n);
    let entries: Vec<Triplet<usize, usize, f64>> = triplets
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries)
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
    let b = faer::Col::<f64>::from_fn(n, |i| rhs[i]);
    use faer::linalg::solvers::Solve;
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..n).map(|i| x[i]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Factorization("sparse LU produced non-finite solution".into()))
    }
}

/// Solves a dense symmetric (possibly indefinite) system via Bunch–Kaufman
/// LBLᵀ. Only the lower triangle is read.
pub fn solve_dense_symmetric(mat: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = mat.nrows();
    assert_eq!(rhs.len(), n);
    use faer::linalg::solvers::SolveCore;
    let f = mat.lblt(Side::Lower);
    let mut b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    f.solve_in_place_with_conj(faer::Conj::No, b.as_mut());
    let out: Vec<f64> = (0..n).map(|i| b[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Factorization("dense LBLt produced non-finite solution".into()))
    }
}

/// Solves a dense square system with partial-pivoting LU.
pub fn solve_dense(mat: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = mat.nrows();
    assert_eq!(rhs.len(), n);
    use faer::linalg::solvers::Solve;
    let lu = mat.partial_piv_lu();
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Factorization("dense LU produced non-finite solution".into()))
    }
}

/// Linear least squares `min ‖A x − b‖` via column-pivoted QR.
pub fn lstsq(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    use faer::linalg::solvers::SolveLstsq;
    let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    let qr = a.col_piv_qr();
    let x = qr.solve_lstsq(&rhs);
    (0..a.ncols()).map(|i| x[(i, 0)]).collect()
}

/// Row indices that are numerically dependent on earlier rows of `m`,
/// judged by a pivot-free Cholesky of `m mᵀ` taken in row order.
pub fn dependent_rows(gram: &Mat<f64>, rel_tol: f64) -> Vec<usize> {
    let n = gram.nrows();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(gram[(i, i)].abs()));
    let thresh = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = Mat::<f64>::zeros(n, n);
    let mut bad = Vec::new();
    let mut ok = vec![false; n];
    for k in 0..n {
        let mut d = gram[(k, k)];
        for j in 0..k {
            d -= l[(k, j)] * l[(k, j)];
        }
        if d <= thresh {
            bad.push(k);
            continue;
        }
        ok[k] = true;
        let dk = d.sqrt();
        l[(k, k)] = dk;
        for i in (k + 1)..n {
            let mut s = gram[(i, k)];
            for j in 0..k {
                s -= l[(i, j)] * l[(k, j)];
            }
            l[(i, k)] = s / dk;
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 2), 0.0);
    }

    #[test]
    fn sparse_and_dense_solves_agree() {
        let t = vec![(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, -2.0), (2, 0, 1.0), (0, 2, 1.0)];
        let rhs = [1.0, 2.0, 3.0];
        let xs = solve_sparse(3, &t, &rhs).unwrap();
        let dense = CsrMatrix::from_triplets(3, 3, &t).to_dense();
        let xd = solve_dense_symmetric(&dense, &rhs).unwrap();
        let xl = solve_dense(&dense, &rhs).unwrap();
        for i in 0..3 {
            assert!((xs[i] - xd[i]).abs() < 1e-12);
            assert!((xs[i] - xl[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dependent_rows_flags_repeats() {
        let g = Mat::<f64>::from_fn(3, 2, |i, j| match (i, j) {
            (0, 0) | (1, 1) => 1.0,
            (2, 0) | (2, 1) => 1.0,
            _ => 0.0,
        });
        let gram = &g * g.transpose();
        assert_eq!(dependent_rows(&gram, 1e-12), vec![2]);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 0, 0.3), (0, 2, 1.7), (1, 1, -0.2), (1, 2, 0.9)]);
        let g = CsrMatrix::from_triplets(3, 3, &m.gram_triplets(0));
        for (r, c, v) in g.triplets() {
            assert_eq!(v, g.get(c, r));
        }
    }
}
