use faer::Mat;
use rand::Rng;

use super::mask::{build_mask, MaskedMatrix, SparsityMask};
use crate::decoder::{check_rows, Decoder, Jacobian};
use crate::error::{check_len, Error, Result};

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

#[inline]
pub fn swish(t: f64) -> f64 {
    t * sigmoid(t)
}

#[inline]
pub fn swish_prime(t: f64) -> f64 {
    let s = sigmoid(t);
    s * (1.0 + t * (1.0 - s))
}

/// `(swish(t), swish_prime(t))` from one sigmoid evaluation.
#[inline]
pub fn swish_pair(t: f64) -> (f64, f64) {
    let s = sigmoid(t);
    (t * s, s * (1.0 + t * (1.0 - s)))
}

/// Layer sizes and mask hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Architecture {
    pub latent: usize,
    pub hidden: usize,
    /// Nonzeros per band.
    pub band: usize,
    /// Band separation in output indices.
    pub separation: usize,
}

impl Architecture {
    /// `H = min(2N, 4096)`, `b = 9`, `s = stride`.
    pub fn with_defaults(n_input: usize, latent: usize, stride: usize) -> Self {
        Self {
            latent,
            hidden: (2 * n_input).clamp(1, 4096),
            band: 9,
            separation: stride,
        }
    }
}

/// Per-feature affine map to `[−1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    /// Min–max fit over the given columns of a column-major `n × m` array.
    /// Constant features get scale 1.
    pub fn fit(n: usize, columns: &[&[f64]]) -> Self {
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for c in columns {
            for k in 0..n {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let center = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let scale = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| {
                let h = 0.5 * (b - a);
                if h > 0.0 {
                    h
                } else {
                    1.0
                }
            })
            .collect();
        Self { center, scale }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn denormalize(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| c + s * v)
            .collect()
    }
}

/// Shallow sparse autoencoder
/// `h(x) = W_lat·σ(W_enc·norm(x) + b_enc) + b_lat`,
/// `g(z) = denorm(W_dec·σ(W_d1·z + b_d1) + b_dec)` with swish `σ` and
/// masked `W_enc`, `W_dec`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseAutoencoder {
    arch: Architecture,
    n_input: usize,
    mask: SparsityMask,
    pub(crate) norm: Normalization,
    pub(crate) w_enc: MaskedMatrix,
    pub(crate) b_enc: Vec<f64>,
    /// `n × H`, row-major.
    pub(crate) w_lat: Vec<f64>,
    pub(crate) b_lat: Vec<f64>,
    /// `H × n`, row-major.
    pub(crate) w_d1: Vec<f64>,
    pub(crate) b_d1: Vec<f64>,
    pub(crate) w_dec: MaskedMatrix,
    pub(crate) b_dec: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct Trace {
    pub xn: Vec<f64>,
    pub a1: Vec<f64>,
    pub h1: Vec<f64>,
    pub z: Vec<f64>,
    pub a2: Vec<f64>,
    pub h2: Vec<f64>,
    pub y: Vec<f64>,
}

impl SparseAutoencoder {
    /// All weights and biases zero.
    pub fn zeros(n_input: usize, arch: Architecture, norm: Normalization) -> Result<Self> {
        if arch.latent == 0 || arch.hidden == 0 || n_input == 0 {
            return Err(Error::InvalidArgument(format!(
                "autoencoder sizes must be positive (N={n_input}, n={}, H={})",
                arch.latent, arch.hidden
            )));
        }
        check_len("normalization center", n_input, norm.center.len())?;
        check_len("normalization scale", n_input, norm.scale.len())?;
        if norm.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("normalization scales must be positive".into()));
        }
        let mask = build_mask(n_input, arch.hidden, arch.band, arch.separation)?;
        let (h, n) = (arch.hidden, arch.latent);
        Ok(Self {
            arch,
            n_input,
            w_enc: mask.encoder_pattern(),
            w_dec: mask.decoder_pattern(),
            mask,
            norm,
            b_enc: vec![0.0; h],
            w_lat: vec![0.0; n * h],
            b_lat: vec![0.0; n],
            w_d1: vec![0.0; h * n],
            b_d1: vec![0.0; h],
            b_dec: vec![0.0; n_input],
        })
    }

    /// Xavier-uniform weights using masked fan counts; biases zero.
    pub fn initialize(&mut self, rng: &mut impl Rng) {
        let (h, n) = (self.arch.hidden, self.arch.latent);
        // Decoder: fan-in of output r is |row r|, fan-out of hidden j is |column j|.
        let mut col_count = vec![0usize; h];
        for r in 0..self.n_input {
            for &j in self.mask.row(r) {
                col_count[j] += 1;
            }
        }
        let row_ptr = self.w_dec.row_ptr().to_vec();
        let cols = self.w_dec.col_idx().to_vec();
        let vals = self.w_dec.values_mut();
        for r in 0..self.n_input {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let lim = (6.0 / ((row_ptr[r + 1] - row_ptr[r]) + col_count[cols[k]]) as f64).sqrt();
                vals[k] = rng.random_range(-lim..lim);
            }
        }
        // Encoder row j (hidden) reads |column j| inputs; input r feeds |row r| hidden.
        let row_ptr = self.w_enc.row_ptr().to_vec();
        let cols = self.w_enc.col_idx().to_vec();
        let vals = self.w_enc.values_mut();
        for j in 0..h {
            for k in row_ptr[j]..row_ptr[j + 1] {
                let fan = (row_ptr[j + 1] - row_ptr[j]) + self.mask.row(cols[k]).len();
                let lim = (6.0 / fan as f64).sqrt();
                vals[k] = rng.random_range(-lim..lim);
            }
        }
        let lim = (6.0 / (n + h) as f64).sqrt();
        for w in self.w_lat.iter_mut().chain(self.w_d1.iter_mut()) {
            *w = rng.random_range(-lim..lim);
        }
        for b in self
            .b_enc
            .iter_mut()
            .chain(self.b_lat.iter_mut())
            .chain(self.b_d1.iter_mut())
            .chain(self.b_dec.iter_mut())
        {
            *b = 0.0;
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn mask(&self) -> &SparsityMask {
        &self.mask
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn encoder_weight(&self) -> &MaskedMatrix {
        &self.w_enc
    }

    pub fn decoder_weight(&self) -> &MaskedMatrix {
        &self.w_dec
    }

    /// Sets an encoder input weight; off-mask entries are rejected.
    pub fn set_encoder_weight(&mut self, hidden: usize, input: usize, v: f64) -> Result<()> {
        self.w_enc.set(hidden, input, v)
    }

    /// Sets a decoder output weight; off-mask entries are rejected.
    pub fn set_decoder_weight(&mut self, output: usize, hidden: usize, v: f64) -> Result<()> {
        self.w_dec.set(output, hidden, v)
    }

    /// Parameter blocks in a fixed order: `W_enc, b_enc, W_lat, b_lat, W_d1,
    /// b_d1, W_dec, b_dec` (masked layers as on-mask values only).
    pub fn parameters(&self) -> [&[f64]; 8] {
        [
            self.w_enc.values(),
            &self.b_enc,
            &self.w_lat,
            &self.b_lat,
            &self.w_d1,
            &self.b_d1,
            self.w_dec.values(),
            &self.b_dec,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_enc.values_mut(),
            &mut self.b_enc,
            &mut self.w_lat,
            &mut self.b_lat,
            &mut self.w_d1,
            &mut self.b_d1,
            self.w_dec.values_mut(),
            &mut self.b_dec,
        ]
    }

    /// On-mask weights, dense weights and biases of encoder and decoder.
    pub fn n_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        check_len("autoencoder input", self.n_input, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("autoencoder input"));
        }
        Ok(())
    }

    fn check_latent(&self, z: &[f64]) -> Result<()> {
        check_len("latent vector", self.arch.latent, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent vector"));
        }
        Ok(())
    }

    pub(crate) fn hidden_decoder(&self, z: &[f64], j: usize) -> f64 {
        let n = self.arch.latent;
        self.b_d1[j] + self.w_d1[j * n..(j + 1) * n].iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let (h, n) = (self.arch.hidden, self.arch.latent);
        let xn = self.norm.normalize(x);
        let a1 = self.w_enc.affine(&xn, &self.b_enc);
        let h1: Vec<f64> = a1.iter().map(|&t| swish(t)).collect();
        let z: Vec<f64> = (0..n)
            .map(|i| self.b_lat[i] + self.w_lat[i * h..(i + 1) * h].iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        let a2: Vec<f64> = (0..h).map(|j| self.hidden_decoder(&z, j)).collect();
        let h2: Vec<f64> = a2.iter().map(|&t| swish(t)).collect();
        let y = self.w_dec.affine(&h2, &self.b_dec);
        Trace { xn, a1, h1, z, a2, h2, y }
    }

    /// `(h(x), g(h(x)))`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        let t = self.trace(x);
        let xhat = self.norm.denormalize(&t.y);
        Ok((t.z, xhat))
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).z)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_latent(z)?;
        let h2: Vec<f64> = (0..self.arch.hidden).map(|j| swish(self.hidden_decoder(z, j))).collect();
        Ok(self.norm.denormalize(&self.w_dec.affine(&h2, &self.b_dec)))
    }

    /// Analytic `∂g/∂z`, `N × n`.
    pub fn decoder_jacobian(&self, z: &[f64]) -> Result<Mat<f64>> {
        self.check_latent(z)?;
        let rows: Vec<usize> = (0..self.n_input).collect();
        Ok(self.rows_jacobian(z, &rows))
    }

    /// Jacobian rows of the listed outputs, each computed in the same
    /// summation order as the full Jacobian.
    pub(crate) fn rows_jacobian(&self, z: &[f64], rows: &[usize]) -> Mat<f64> {
        let n = self.arch.latent;
        let mut dh = vec![f64::NAN; self.arch.hidden];
        let mut buf = vec![0.0; rows.len() * n];
        for (i, &r) in rows.iter().enumerate() {
            let (cols, vals) = self.w_dec.row(r);
            for &h in cols {
                if dh[h].is_nan() {
                    dh[h] = swish_prime(self.hidden_decoder(z, h));
                }
            }
            jacobian_row(self.norm.scale[r], cols, vals, &dh, &self.w_d1, &mut buf[i * n..(i + 1) * n]);
        }
        Mat::from_fn(rows.len(), n, |i, k| buf[i * n + k])
    }

    /// Decoded state and Jacobian from one pass over the hidden layer.
    pub fn decode_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Mat<f64>)> {
        self.check_latent(z)?;
        let n = self.arch.latent;
        let (h2, dh): (Vec<f64>, Vec<f64>) = (0..self.arch.hidden).map(|j| swish_pair(self.hidden_decoder(z, j))).unzip();
        let mut x = Vec::with_capacity(self.n_input);
        let mut buf = vec![0.0; self.n_input * n];
        for r in 0..self.n_input {
            let (cols, vals) = self.w_dec.row(r);
            let y = self.b_dec[r] + cols.iter().zip(vals).map(|(&j, w)| w * h2[j]).sum::<f64>();
            x.push(self.norm.center[r] + self.norm.scale[r] * y);
            jacobian_row(self.norm.scale[r], cols, vals, &dh, &self.w_d1, &mut buf[r * n..(r + 1) * n]);
        }
        Ok((x, Mat::from_fn(self.n_input, n, |i, k| buf[i * n + k])))
    }
}

/// One decoder Jacobian row: `Σ_h s·w_h·σ'(a_h)·W1[h, :]`, entries in mask order.
pub(crate) fn jacobian_row(scale: f64, cols: &[usize], vals: &[f64], dh: &[f64], w_d1: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (&h, &w) in cols.iter().zip(vals) {
        let f = scale * w * dh[h];
        for (o, v) in out.iter_mut().zip(&w_d1[h * n..(h + 1) * n]) {
            *o += f * v;
        }
    }
}

impl Decoder for SparseAutoencoder {
    fn latent_dim(&self) -> usize {
        self.arch.latent
    }

    fn output_dim(&self) -> usize {
        self.n_input
    }

    fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        SparseAutoencoder::decode(self, z)
    }

    fn jacobian(&self, z: &[f64]) -> Result<Jacobian> {
        Ok(Jacobian::Dense(self.decoder_jacobian(z)?))
    }

    fn decode_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Jacobian)> {
        let (x, j) = SparseAutoencoder::decode_with_jacobian(self, z)?;
        Ok((x, Jacobian::Dense(j)))
    }

    fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        SparseAutoencoder::encode(self, x)
    }

    fn restrict(&self, rows: &[usize]) -> Result<Box<dyn Decoder>> {
        check_rows(rows, self.n_input)?;
        Ok(Box::new(super::extract_subnet(self, rows)?))
    }

    fn parameter_count(&self) -> usize {
        self.n_parameters()
    }
}
