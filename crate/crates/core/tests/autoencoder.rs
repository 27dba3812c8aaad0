use std::sync::OnceLock;

use ddrom::autoencoder::{
    build_mask, extract_subnet, load_checkpoint, save_checkpoint, train, Architecture, SparseAutoencoder, TrainConfig,
    TrainReport,
};
use ddrom::burgers::Grid;
use ddrom::dd::decompose;
use ddrom::decoder::Decoder;
use ddrom::matfile::DenseMatrix;
use ddrom::snapshots::{generate_snapshots, sample_parameters, SnapshotOptions};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Interior snapshots of one subdomain on a small mesh, and the row stride.
fn data() -> &'static (DenseMatrix, usize) {
    static D: OnceLock<(DenseMatrix, usize)> = OnceLock::new();
    D.get_or_init(|| {
        let g = Grid::reference(42, 10).unwrap();
        let l = decompose(&g, 2, 2).unwrap();
        let p = sample_parameters((1.0, 1e4), (5.0, 25.0), 5, 4).unwrap();
        let s = generate_snapshots(&g, 0.1, &p, &l, &SnapshotOptions::default()).unwrap();
        let stride = l.row_stride(&l.subdomain(3).interior);
        (s.interior[3].clone(), stride)
    })
}

fn arch() -> Architecture {
    let (x, stride) = data();
    Architecture::with_defaults(x.rows, 4, *stride)
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn trained() -> &'static (SparseAutoencoder, TrainReport) {
    static T: OnceLock<(SparseAutoencoder, TrainReport)> = OnceLock::new();
    T.get_or_init(|| train(&data().0, &arch(), &cfg(60)).unwrap())
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[test]
fn protocol_defaults() {
    let c = TrainConfig::default();
    assert_eq!((c.epochs, c.batch_size, c.patience), (2000, 32, 300));
    assert_eq!(c.learning_rate, 1e-3);
    assert_eq!(c.validation_fraction, 0.1);
}

#[test]
fn training_preserves_the_mask() {
    let (ae, _) = trained();
    let a = ae.architecture();
    let mask = build_mask(ae.n_input(), a.hidden, a.band, a.separation).unwrap();
    let dec = ae.decoder_weight();
    let enc = ae.encoder_weight();
    assert_eq!(dec.col_idx(), mask.decoder_pattern().col_idx());
    assert_eq!(enc.col_idx(), mask.encoder_pattern().col_idx());
    for r in 0..ae.n_input() {
        for h in 0..a.hidden {
            if !mask.contains(r, h) {
                assert_eq!(dec.get(r, h), 0.0);
                assert_eq!(enc.get(h, r), 0.0);
            }
        }
    }
    assert!(dec.values().iter().any(|&v| v != 0.0));
}

#[test]
fn retraining_is_deterministic() {
    let (ae, report) = trained();
    let (ae2, report2) = train(&data().0, &arch(), &cfg(60)).unwrap();
    assert_eq!(report.train_loss, report2.train_loss);
    assert_eq!(report.validation_loss, report2.validation_loss);
    assert_eq!(ae.parameters(), ae2.parameters());
    let (ae3, _) = train(&data().0, &arch(), &TrainConfig { seed: 12, ..cfg(60) }).unwrap();
    assert_ne!(ae.parameters(), ae3.parameters());
}

#[test]
fn training_reduces_the_loss() {
    let (_, r) = trained();
    assert!(r.best_validation_loss() < 0.5 * r.validation_loss[0]);
    assert_eq!(r.validation_indices.len(), 2);
}

#[test]
fn repeated_snapshot_is_learned_quickly() {
    let (x, stride) = data();
    let col = x.col(5).to_vec();
    let copies = DenseMatrix::from_columns(x.rows, &vec![col.clone(); 20]);
    let arch = Architecture::with_defaults(x.rows, 2, *stride);
    let (ae, r) = train(&copies, &arch, &TrainConfig { batch_size: 4, ..cfg(300) }).unwrap();
    let norm2: f64 = col.iter().map(|v| v * v).sum();
    assert!(r.best_validation_loss() <= 1e-6 * norm2, "{} vs {}", r.best_validation_loss(), 1e-6 * norm2);
    let (_, xhat) = ae.forward(&col).unwrap();
    assert!(rel(&xhat, &col) <= 1e-3);
}

#[test]
fn subnet_matches_full_decoder() {
    let (ae, _) = trained();
    let n = ae.n_input();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let full = ae.decode(&z).unwrap();
    let jfull = ae.decoder_jacobian(&z).unwrap();

    let all: Vec<usize> = (0..n).collect();
    let s = extract_subnet(ae, &all).unwrap();
    assert_eq!(s.decode(&z).unwrap(), full);

    let one = extract_subnet(ae, &[n / 2]).unwrap();
    assert_eq!(one.hidden_nodes(), ae.mask().row(n / 2));

    for trial in 0..5 {
        let mut rows = sample(&mut rng, n, n.div_ceil(10)).into_vec();
        rows.sort_unstable();
        let s = extract_subnet(ae, &rows).unwrap();
        let part: Vec<f64> = rows.iter().map(|&r| full[r]).collect();
        assert!(rel(&s.decode(&z).unwrap(), &part) <= 1e-13, "trial {trial}");
        let js = s.jacobian(&z).unwrap();
        for (k, &r) in rows.iter().enumerate() {
            for c in 0..4 {
                assert_eq!(js[(k, c)], jfull[(r, c)]);
            }
        }
        let boxed = ae.restrict(&rows).unwrap();
        assert!(rel(&boxed.decode(&z).unwrap(), &part) <= 1e-13);
        assert!(s.hidden_nodes().len() <= ae.architecture().hidden);
    }
}

#[test]
fn decoder_jacobian_matches_central_differences() {
    let (ae, _) = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-6;
    for _ in 0..10 {
        let z: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let j = ae.decoder_jacobian(&z).unwrap();
        assert_eq!((j.nrows(), j.ncols()), (ae.n_input(), 4));
        for k in 0..4 {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[k] += h;
            zm[k] -= h;
            let (p, m) = (ae.decode(&zp).unwrap(), ae.decode(&zm).unwrap());
            let fd: Vec<f64> = p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let col: Vec<f64> = (0..ae.n_input()).map(|r| j[(r, k)]).collect();
            assert!(rel(&fd, &col) <= 1e-5, "column {k}: {}", rel(&fd, &col));
        }
    }
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let (ae, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.ckpt");
    save_checkpoint(ae, 77, &p).unwrap();
    let (back, seed) = load_checkpoint(&p).unwrap();
    assert_eq!(seed, 77);
    assert_eq!(back.parameters(), ae.parameters());
    assert_eq!(back.normalization(), ae.normalization());
    let x = data().0.col(0);
    assert_eq!(back.forward(x).unwrap(), ae.forward(x).unwrap());

    let mut bytes = std::fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x10;
    std::fs::write(&p, bytes).unwrap();
    assert!(load_checkpoint(&p).is_err());
}
