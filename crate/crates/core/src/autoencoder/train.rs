use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{swish_prime, Architecture, Normalization, SparseAutoencoder};
use crate::error::{Error, Result};
use crate::matfile::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Early-stopping patience in epochs.
    pub patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 32,
            learning_rate: 1e-3,
            patience: 300,
            plateau_factor: 0.5,
            plateau_patience: 50,
            min_learning_rate: 1e-6,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
    /// Number of epochs actually run.
    pub epochs_run: usize,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainReport {
    pub fn best_validation_loss(&self) -> f64 {
        self.validation_loss[self.best_epoch]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,validation_loss,learning_rate\n");
        for e in 0..self.epochs_run {
            s.push_str(&format!(
                "{e},{:.10e},{:.10e},{:.3e}\n",
                self.train_loss[e], self.validation_loss[e], self.learning_rate[e]
            ));
        }
        s
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(ae: &SparseAutoencoder) -> Self {
        let sizes: Vec<usize> = ae.parameters().iter().map(|p| p.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, ae: &mut SparseAutoencoder, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (b, p) in ae.parameters_mut().into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[b], &mut self.v[b], &grads[b]);
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + EPS);
            }
        }
    }
}

/// `‖x − g(h(x))‖²` for one sample and, if `grads` is given, adds
/// `weight · ∇` of it to the gradient blocks.
fn sample_loss(ae: &SparseAutoencoder, x: &[f64], grads: Option<(&mut [Vec<f64>], f64)>) -> f64 {
    let t = ae.trace(x);
    let xhat = ae.norm.denormalize(&t.y);
    let loss: f64 = xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    let Some((g, weight)) = grads else {
        return loss;
    };
    let (h, n) = (ae.architecture().hidden, ae.architecture().latent);
    let dy: Vec<f64> = xhat
        .iter()
        .zip(x)
        .zip(&ae.norm.scale)
        .map(|((a, b), s)| 2.0 * weight * (a - b) * s)
        .collect();
    ae.w_dec.outer_add(&dy, &t.h2, &mut g[6]);
    for (gb, d) in g[7].iter_mut().zip(&dy) {
        *gb += d;
    }
    let mut dh2 = vec![0.0; h];
    ae.w_dec.transpose_matvec_add(&dy, &mut dh2);
    let da2: Vec<f64> = dh2.iter().zip(&t.a2).map(|(d, &a)| d * swish_prime(a)).collect();
    let mut dz = vec![0.0; n];
    for j in 0..h {
        let d = da2[j];
        g[5][j] += d;
        let row = &ae.w_d1[j * n..(j + 1) * n];
        let grow = &mut g[4][j * n..(j + 1) * n];
        for k in 0..n {
            grow[k] += d * t.z[k];
            dz[k] += row[k] * d;
        }
    }
    let mut dh1 = vec![0.0; h];
    for i in 0..n {
        let d = dz[i];
        g[3][i] += d;
        let row = &ae.w_lat[i * h..(i + 1) * h];
        let grow = &mut g[2][i * h..(i + 1) * h];
        for j in 0..h {
            grow[j] += d * t.h1[j];
            dh1[j] += row[j] * d;
        }
    }
    let da1: Vec<f64> = dh1.iter().zip(&t.a1).map(|(d, &a)| d * swish_prime(a)).collect();
    ae.w_enc.outer_add(&da1, &t.xn, &mut g[0]);
    for (gb, d) in g[1].iter_mut().zip(&da1) {
        *gb += d;
    }
    loss
}

/// Mean of `‖x − g(h(x))‖²` over the given snapshot columns.
pub fn mean_loss(ae: &SparseAutoencoder, data: &DenseMatrix, cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    cols.iter().map(|&c| sample_loss(ae, data.col(c), None)).sum::<f64>() / cols.len() as f64
}

/// Gradient blocks of the mean loss over `cols`; exposed for tests.
pub fn loss_gradient(ae: &SparseAutoencoder, data: &DenseMatrix, cols: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let mut g: Vec<Vec<f64>> = ae.parameters().iter().map(|p| vec![0.0; p.len()]).collect();
    let w = 1.0 / cols.len() as f64;
    let mut loss = 0.0;
    for &c in cols {
        loss += sample_loss(ae, data.col(c), Some((&mut g, w)));
    }
    (loss * w, g)
}

/// Random train/validation split of `m` samples.
pub fn split_indices(m: usize, validation_fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let n_val = ((m as f64 * validation_fraction).round() as usize).clamp(1, m - 1);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Trains an autoencoder on the columns of `snapshots` (`N × M`).
pub fn train(snapshots: &DenseMatrix, arch: &Architecture, cfg: &TrainConfig) -> Result<(SparseAutoencoder, TrainReport)> {
    let m = snapshots.cols;
    if m < 10 {
        return Err(Error::InvalidArgument(format!("training needs at least 10 snapshots, got {m}")));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0) {
        return Err(Error::InvalidArgument("invalid training configuration".into()));
    }
    if snapshots.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training snapshots"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = split_indices(m, cfg.validation_fraction, &mut rng);
    let cols: Vec<&[f64]> = train_idx.iter().map(|&c| snapshots.col(c)).collect();
    let norm = Normalization::fit(snapshots.rows, &cols);
    let mut ae = SparseAutoencoder::zeros(snapshots.rows, *arch, norm)?;
    ae.initialize(&mut rng);

    let mut adam = Adam::new(&ae);
    let mut lr = cfg.learning_rate;
    let mut best = (f64::INFINITY, 0usize, ae.clone());
    let mut plateau_best = f64::INFINITY;
    let mut plateau_wait = 0;
    let mut report = TrainReport {
        train_indices: train_idx.clone(),
        validation_indices: val_idx.clone(),
        ..TrainReport::default()
    };
    let mut order = train_idx.clone();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, g) = loss_gradient(&ae, snapshots, batch);
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut ae, &g, lr);
        }
        epoch_loss /= order.len() as f64;
        let val = mean_loss(&ae, snapshots, &val_idx);
        if !epoch_loss.is_finite() || !val.is_finite() {
            return Err(Error::Diverged(format!(
                "autoencoder loss became non-finite at epoch {epoch} (train {epoch_loss}, validation {val})"
            )));
        }
        report.train_loss.push(epoch_loss);
        report.validation_loss.push(val);
        report.learning_rate.push(lr);
        report.epochs_run = epoch + 1;
        if val < best.0 {
            best = (val, epoch, ae.clone());
        }
        if val < plateau_best * (1.0 - 1e-4) {
            plateau_best = val;
            plateau_wait = 0;
        } else {
            plateau_wait += 1;
            if plateau_wait > cfg.plateau_patience {
                lr = (lr * cfg.plateau_factor).max(cfg.min_learning_rate);
                plateau_wait = 0;
            }
        }
        if epoch - best.1 >= cfg.patience {
            debug!("early stop at epoch {epoch}, best {} at {}", best.0, best.1);
            break;
        }
    }
    report.best_epoch = best.1;
    Ok((best.2, report))
}
