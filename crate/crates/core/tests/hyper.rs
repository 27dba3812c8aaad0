use ddrom::hyper::{gaussian_test_matrix, greedy_sample, sample_subdomain, WeakConstraintMatrix};
use ddrom::linalg::dense_matvec;
use ddrom::matfile::DenseMatrix;
use ddrom::pod::pod;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Orthonormal 12×3 basis close to the unit vectors of `peaks`.
fn near_identity(peaks: [usize; 3], seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = peaks
        .iter()
        .map(|&p| (0..12).map(|r| if r == p { 1.0 } else { 0.15 * rng.random_range(-1.0..1.0) }).collect())
        .collect();
    pod(&DenseMatrix::from_columns(12, &cols), 3).unwrap().basis
}

#[test]
fn greedy_matches_exhaustive_volume_search() {
    for (seed, peaks) in [(0, [2, 7, 10]), (1, [0, 5, 11]), (2, [3, 4, 9])] {
        let u = near_identity(peaks, seed);
        let chosen = greedy_sample(&u, 3).unwrap();
        let mut best = (0.0, vec![]);
        for a in 0..12 {
            for b in a + 1..12 {
                for c in b + 1..12 {
                    let m = [a, b, c].map(|r| [0, 1, 2].map(|k| u.get(r, k)));
                    let v = det3(m).abs();
                    if v > best.0 {
                        best = (v, vec![a, b, c]);
                    }
                }
            }
        }
        assert_eq!(chosen, best.1, "seed {seed}");
        let mut sorted = peaks.to_vec();
        sorted.sort_unstable();
        assert_eq!(chosen, sorted);
    }
}

#[test]
fn first_step_takes_the_largest_entry() {
    let u = near_identity([6, 1, 8], 5);
    let first = greedy_sample(&DenseMatrix::column_vector(u.col(0)), 1).unwrap();
    let argmax = (0..12).max_by(|&a, &b| u.get(a, 0).abs().total_cmp(&u.get(b, 0).abs())).unwrap();
    assert_eq!(first, vec![argmax]);
}

#[test]
fn low_rank_residuals_still_sample_requested_rows() {
    let cols: Vec<Vec<f64>> = (0..6).map(|l| (0..50).map(|r| ((r as f64) * 0.1 * (1 + l % 2) as f64).sin()).collect()).collect();
    let s = sample_subdomain(2, &DenseMatrix::from_columns(50, &cols), 10).unwrap();
    assert_eq!(s.subdomain, 2);
    assert_eq!(s.len(), 10);
    assert!(s.rows.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn test_matrix_preserves_feasibility() {
    let c = gaussian_test_matrix(20, 40, 3).unwrap();
    assert_eq!(c.matrix, gaussian_test_matrix(20, 40, 3).unwrap().matrix);
    assert!(dense_matvec(&c.matrix, &vec![0.0; 40]).iter().all(|&v| v == 0.0));
    let id = WeakConstraintMatrix::identity(7);
    assert!(id.identity);
    assert_eq!(id.matrix, Mat::<f64>::identity(7, 7));
}
