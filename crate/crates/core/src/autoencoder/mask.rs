//! Tri-banded sparsity masks and masked weight matrices.
//!
//! Hidden node `h` of a mask with `N` outputs and `H` hidden nodes is centred
//! on output `c_h = round(h·(N−1)/(H−1))` and connects to three windows of
//! `b` consecutive outputs centred at `c_h − s`, `c_h` and `c_h + s`. Windows
//! running past either end are shifted back inside `[0, N)`, so `b = N`
//! gives a dense mask. The decoder output layer uses the mask as is
//! (`N × H`); the encoder input layer uses its transpose.

use log::warn;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityMask {
    n_output: usize,
    n_hidden: usize,
    band: usize,
    separation: usize,
    /// Row-compressed pattern of the `N × H` decoder mask.
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

fn window(center: isize, b: usize, n: usize) -> std::ops::Range<usize> {
    let start = center - ((b - 1) / 2) as isize;
    let start = start.clamp(0, (n - b) as isize) as usize;
    start..start + b
}

/// Builds the `N × H` tri-banded mask with `b` nonzeros per band and band
/// separation `s`.
pub fn build_mask(n: usize, h: usize, b: usize, s: usize) -> Result<SparsityMask> {
    if n == 0 || h == 0 || b == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask needs N, H, b >= 1 (got N={n}, H={h}, b={b})"
        )));
    }
    let b = if b > n {
        warn!("band width {b} exceeds {n} outputs, clipped");
        n
    } else {
        b
    };
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for hid in 0..h {
        let c = if h == 1 {
            (n - 1) / 2
        } else {
            ((hid * (n - 1)) as f64 / (h - 1) as f64).round() as usize
        } as isize;
        let mut rows: Vec<usize> = [c - s as isize, c, c + s as isize]
            .into_iter()
            .flat_map(|t| window(t, b, n))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        pairs.extend(rows.into_iter().map(|r| (r, hid)));
    }
    pairs.sort_unstable();
    let mut row_ptr = vec![0; n + 1];
    for &(r, _) in &pairs {
        row_ptr[r + 1] += 1;
    }
    for r in 0..n {
        row_ptr[r + 1] += row_ptr[r];
    }
    Ok(SparsityMask {
        n_output: n,
        n_hidden: h,
        band: b,
        separation: s,
        row_ptr,
        cols: pairs.into_iter().map(|p| p.1).collect(),
    })
}

impl SparsityMask {
    pub fn n_output(&self) -> usize {
        self.n_output
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn separation(&self) -> usize {
        self.separation
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Hidden nodes feeding output `r`, ascending.
    pub fn row(&self, r: usize) -> &[usize] {
        &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn contains(&self, r: usize, h: usize) -> bool {
        self.row(r).binary_search(&h).is_ok()
    }

    /// Outputs fed by hidden node `h`, ascending.
    pub fn column(&self, h: usize) -> Vec<usize> {
        (0..self.n_output).filter(|&r| self.contains(r, h)).collect()
    }

    pub fn is_dense(&self) -> bool {
        self.nnz() == self.n_output * self.n_hidden
    }

    /// Pattern of the `N × H` decoder weight.
    pub fn decoder_pattern(&self) -> MaskedMatrix {
        MaskedMatrix::from_pattern(self.n_output, self.n_hidden, self.row_ptr.clone(), self.cols.clone())
    }

    /// Pattern of the `H × N` encoder weight (the transpose).
    pub fn encoder_pattern(&self) -> MaskedMatrix {
        let mut pairs: Vec<(usize, usize)> = (0..self.n_output)
            .flat_map(|r| self.row(r).iter().map(move |&h| (h, r)))
            .collect();
        pairs.sort_unstable();
        let mut row_ptr = vec![0; self.n_hidden + 1];
        for &(h, _) in &pairs {
            row_ptr[h + 1] += 1;
        }
        for h in 0..self.n_hidden {
            row_ptr[h + 1] += row_ptr[h];
        }
        MaskedMatrix::from_pattern(self.n_hidden, self.n_output, row_ptr, pairs.into_iter().map(|p| p.1).collect())
    }
}

/// A weight matrix whose nonzero pattern is fixed by a mask. Only on-mask
/// values are stored, so off-mask entries are zero by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl MaskedMatrix {
    fn from_pattern(nrows: usize, ncols: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>) -> Self {
        let values = vec![0.0; col_idx.len()];
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// On-mask values in row-major pattern order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Sets an on-mask entry; writing off the mask is an error.
    pub fn set(&mut self, r: usize, c: usize, v: f64) -> Result<()> {
        if r >= self.nrows || c >= self.ncols {
            return Err(Error::InvalidArgument(format!("entry ({r}, {c}) out of bounds")));
        }
        match self.position(r, c) {
            Some(k) => {
                self.values[k] = v;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("entry ({r}, {c}) is off the sparsity mask"))),
        }
    }

    /// `y = W x + bias`.
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| {
                let (c, v) = self.row(r);
                bias[r] + c.iter().zip(v).map(|(&j, w)| w * x[j]).sum::<f64>()
            })
            .collect()
    }

    /// `out += Wᵀ y`.
    pub fn transpose_matvec_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            let (c, v) = self.row(r);
            for (&j, w) in c.iter().zip(v) {
                out[j] += w * yr;
            }
        }
    }

    /// `grad[k] += y_r · x_c` for every stored entry `k = (r, c)`.
    pub fn outer_add(&self, y: &[f64], x: &[f64], grad: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                grad[k] += yr * x[self.col_idx[k]];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_band_is_dense() {
        for (n, h) in [(7, 3), (5, 11), (1, 4)] {
            let m = build_mask(n, h, n, 0).unwrap();
            assert!(m.is_dense(), "N={n} H={h}");
        }
    }

    #[test]
    fn hand_enumerated_small_mask() {
        // Centres: hidden 0 -> output 0, hidden 1 -> output 9.
        let m = build_mask(10, 2, 1, 3).unwrap();
        assert_eq!(m.column(0), vec![0, 3]);
        assert_eq!(m.column(1), vec![6, 9]);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.row(3), &[0]);
        assert!(m.row(1).is_empty());
    }

    #[test]
    fn band_wider_than_output_is_clipped() {
        let m = build_mask(4, 2, 9, 1).unwrap();
        assert_eq!(m.band(), 4);
        assert!(m.is_dense());
    }

    #[test]
    fn default_sized_mask_covers_every_row() {
        let n = 2880;
        let m = build_mask(n, 4096, 9, 120).unwrap();
        assert!((0..n).all(|r| !m.row(r).is_empty()));
    }

    #[test]
    fn encoder_pattern_is_transpose() {
        let m = build_mask(13, 20, 3, 4).unwrap();
        let d = m.decoder_pattern();
        let e = m.encoder_pattern();
        assert_eq!(d.nnz(), e.nnz());
        for r in 0..13 {
            for h in 0..20 {
                assert_eq!(m.contains(r, h), e.position(h, r).is_some());
                assert_eq!(m.contains(r, h), d.position(r, h).is_some());
            }
        }
    }

    #[test]
    fn off_mask_writes_rejected() {
        let m = build_mask(10, 2, 1, 3).unwrap();
        let mut w = m.decoder_pattern();
        assert!(w.set(3, 0, 1.5).is_ok());
        assert_eq!(w.get(3, 0), 1.5);
        assert!(w.set(1, 0, 1.0).is_err());
        assert_eq!(w.get(1, 0), 0.0);
    }
}
