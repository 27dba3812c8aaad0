use std::fs;
use std::sync::OnceLock;

use ddrom::burgers::{build_problem, BurgersParams, Grid};
use ddrom::dd::{decompose, restrict_state, scatter_state};
use ddrom::linalg::norm2;
use ddrom::snapshots::{generate_snapshots, sample_parameters, SnapshotOptions, SnapshotSet};
use ddrom::Error;

fn set() -> &'static SnapshotSet {
    static S: OnceLock<SnapshotSet> = OnceLock::new();
    S.get_or_init(|| {
        let g = Grid::reference(42, 10).unwrap();
        let l = decompose(&g, 2, 2).unwrap();
        let p = sample_parameters((1.0, 1e4), (5.0, 25.0), 4, 3).unwrap();
        generate_snapshots(&g, 0.1, &p, &l, &SnapshotOptions::default()).unwrap()
    })
}

#[test]
fn paper_grid_size() {
    assert_eq!(sample_parameters((1.0, 1e4), (5.0, 25.0), 80, 80).unwrap().len(), 6400);
    let one = sample_parameters((1.0, 1e4), (5.0, 25.0), 1, 1).unwrap();
    assert_eq!(one.points(), vec![(1.0, 5.0)]);
}

#[test]
fn columns_are_converged_and_restrictions_consistent() {
    let s = set();
    assert_eq!(s.len(), 12);
    assert!(s.failed.is_empty());
    for l in 0..s.len() {
        let (a, lambda) = s.params[l];
        let prob = build_problem(&s.grid, &BurgersParams::new(a, lambda, s.nu).unwrap()).unwrap();
        assert!(norm2(&prob.residual(s.column(l)).unwrap()) <= s.tolerance);
        let parts: Vec<_> = (0..4).map(|i| restrict_state(s.column(l), &s.layout, i).unwrap()).collect();
        for (i, (xi, xg)) in parts.iter().enumerate() {
            assert_eq!(xi.as_slice(), s.interior[i].col(l));
            assert_eq!(xg.as_slice(), s.interface[i].col(l));
        }
        assert_eq!(scatter_state(&s.layout, &parts).unwrap(), s.column(l));
    }
    s.check_restrictions().unwrap();
    assert!(s.residuals.iter().all(|r| r.cols > 0));
}

#[test]
fn save_load_is_bit_exact() {
    let s = set();
    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let mats = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "mat"))
        .count();
    assert_eq!(mats, 1 + 3 * 4);
    let t = SnapshotSet::load(dir.path()).unwrap();
    assert_eq!(t.x, s.x);
    assert_eq!(t.interior, s.interior);
    assert_eq!(t.interface, s.interface);
    assert_eq!(t.residuals, s.residuals);
    assert_eq!(t.params, s.params);
    assert_eq!(t.layout, s.layout);
}

#[test]
fn corrupted_files_are_rejected() {
    let s = set();

    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let p = dir.path().join("X_gamma_1.mat");
    let mut bytes = fs::read(&p).unwrap();
    bytes[0] = b'Z';
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(SnapshotSet::load(dir.path()), Err(Error::Format { .. })));

    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let p = dir.path().join("X.mat");
    let mut bytes = fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&p, &bytes).unwrap();
    assert!(matches!(SnapshotSet::load(dir.path()), Err(Error::Checksum(_))));

    let dir = tempfile::tempdir().unwrap();
    s.save(dir.path()).unwrap();
    let m = dir.path().join("manifest.txt");
    let text = fs::read_to_string(&m).unwrap().replace("n_snapshots = 12", "n_snapshots = 11");
    fs::write(&m, text).unwrap();
    assert!(matches!(SnapshotSet::load(dir.path()), Err(Error::Consistency(_))));
}
