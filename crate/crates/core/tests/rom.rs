use std::sync::OnceLock;

use ddrom::burgers::{build_problem, solve_fom, BurgersParams, FomProblem, Grid};
use ddrom::dd::{dd_fom_options, decompose, solve_dd_fom};
use ddrom::hyper::{gaussian_test_matrix, SamplingMatrix, WeakConstraintMatrix};
use ddrom::newton::NewtonOptions;
use ddrom::rom::{
    assemble_rom, parameter_table, relative_error, rom_options, solve_rom, write_bench_csv, BenchRow, Constraints,
    BENCH_HEADER,
};
use ddrom::snapshots::{generate_snapshots, sample_parameters, SnapshotOptions, SnapshotSet};
use ddrom::workflow::{
    autoencoder_parameter_counts, hr_samples, identity_decoders, pod_decoders, pod_interior_identity_interface, AeShape,
    RomSizes,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn snaps() -> &'static SnapshotSet {
    static S: OnceLock<SnapshotSet> = OnceLock::new();
    S.get_or_init(|| {
        let g = Grid::reference(42, 10).unwrap();
        let l = decompose(&g, 2, 2).unwrap();
        let p = sample_parameters((1.0, 1e4), (5.0, 25.0), 5, 4).unwrap();
        generate_snapshots(&g, 0.1, &p, &l, &SnapshotOptions::default()).unwrap()
    })
}

struct Case {
    fom: FomProblem,
    truth: Vec<f64>,
    x0: Vec<f64>,
}

fn case(a: f64, lambda: f64) -> Case {
    let s = snaps();
    let fom = build_problem(&s.grid, &BurgersParams::new(a, lambda, 0.1).unwrap()).unwrap();
    let (truth, _) = solve_fom(&fom, fom.exact_state().as_slice(), &NewtonOptions::default()).unwrap();
    Case {
        x0: s.column(s.nearest(a, lambda)).to_vec(),
        truth: truth.into_vec(),
        fom,
    }
}

#[test]
fn relative_error_definition() {
    let x = vec![(vec![1.0, 2.0], vec![3.0]), (vec![-1.0], vec![0.5, 0.25])];
    assert_eq!(relative_error(&x, &x).unwrap(), 0.0);
    let one = vec![(vec![1.0, -2.0], vec![0.5])];
    let two: Vec<_> = one.iter().map(|(a, b)| (a.iter().map(|v| 2.0 * v).collect(), b.iter().map(|v| 2.0 * v).collect())).collect();
    assert_eq!(relative_error(&one, &two).unwrap(), 1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let r: Vec<(Vec<f64>, Vec<f64>)> = (0..4).map(|_| (draw(7), draw(3))).collect();
    let a: Vec<(Vec<f64>, Vec<f64>)> = (0..4).map(|_| (draw(7), draw(3))).collect();
    let oracle = (r.iter().zip(&a).map(|(p, q)| {
        let d: f64 = p.0.iter().chain(&p.1).zip(q.0.iter().chain(&q.1)).map(|(x, y)| (x - y).powi(2)).sum();
        d / p.0.iter().chain(&p.1).map(|x| x * x).sum::<f64>()
    }).sum::<f64>() / 4.0).sqrt();
    assert!((relative_error(&r, &a).unwrap() - oracle).abs() <= 1e-14 * oracle);
    assert!(relative_error(&[(vec![0.0], vec![])], &[(vec![1.0], vec![])]).is_err());
}

#[test]
fn identity_rom_reproduces_dd_fom() {
    let s = snaps();
    let c = case(4000.0, 17.0);
    let rom = assemble_rom(&s.layout, identity_decoders(s), None, Constraints::Strong).unwrap();
    let init = rom.encode(&c.x0).unwrap();
    let (z, _, rep) = solve_rom(&rom, &c.fom, &init, &c.truth, &rom_options()).unwrap();
    assert!(rep.error <= 1e-6, "error {}", rep.error);
    assert!(rep.strong_violation <= 1e-8);

    let (parts, _) = solve_dd_fom(&c.fom, &s.layout, &c.x0, &dd_fom_options(&s.layout)).unwrap();
    let decoded = rom.decode(&z).unwrap();
    assert!(relative_error(&parts, &decoded).unwrap() <= 1e-6);
    assert_eq!(rom.parameter_counts(), vec![0; 4]);
}

#[test]
fn identity_test_matrix_equals_strong_constraints() {
    let s = snaps();
    let c = case(2500.0, 9.0);
    let opts = rom_options();
    let run = |con: Constraints| {
        let rom = assemble_rom(&s.layout, pod_interior_identity_interface(s, 4).unwrap(), None, con).unwrap();
        let init = rom.encode(&c.x0).unwrap();
        let (z, _, rep) = solve_rom(&rom, &c.fom, &init, &c.truth, &opts).unwrap();
        (rom.decode(&z).unwrap(), rep)
    };
    let (strong, _) = run(Constraints::Strong);
    let (weak, rep) = run(Constraints::Weak(WeakConstraintMatrix::identity(s.layout.n_constraints())));
    assert!(relative_error(&strong, &weak).unwrap() <= 1e-8);
    assert!(rep.strong_violation <= 1e-8);

    let n_a = s.layout.n_constraints();
    let g = gaussian_test_matrix(n_a / 2, n_a, 5).unwrap();
    let (_, rep) = run(Constraints::Weak(g));
    assert!(rep.strong_violation.is_finite());
    assert!(rep.weak_violation <= 1e-8);
}

#[test]
fn ls_rom_warm_start_settles_fast() {
    let s = snaps();
    let c = case(6000.0, 20.0);
    let decs = pod_decoders(s, RomSizes { n_omega: 6, n_gamma: 3 }).unwrap();
    let n_a = s.layout.n_constraints();
    let rom = assemble_rom(&s.layout, decs, None, Constraints::Weak(gaussian_test_matrix(6, n_a, 1).unwrap())).unwrap();
    let init = rom.encode(&c.truth).unwrap();
    let (_, res, rep) = solve_rom(&rom, &c.fom, &init, &c.truth, &rom_options()).unwrap();
    // Gauss-Newton on a nonzero residual: the objective settles within a few
    // steps even though stationarity then decays only linearly.
    let last = res.history.last().unwrap().objective;
    let third = res.history[3.min(res.history.len() - 1)].objective;
    assert!((third - last).abs() <= 1e-8 * last, "{third} vs {last}");
    assert!(res.history[3.min(res.history.len() - 1)].feasibility <= 1e-8);
    assert!(rep.error < 0.1);
    assert_eq!(rom.dof(), 36);
}

#[test]
fn sampling_every_row_matches_the_unreduced_rom() {
    let s = snaps();
    let c = case(3000.0, 12.0);
    let sizes = RomSizes { n_omega: 5, n_gamma: 3 };
    let all: Vec<SamplingMatrix> = s
        .layout
        .subdomains()
        .iter()
        .enumerate()
        .map(|(i, sd)| SamplingMatrix { subdomain: i, rows: (0..sd.rows.len()).collect() })
        .collect();
    let n_a = s.layout.n_constraints();
    let con = || Constraints::Weak(gaussian_test_matrix(6, n_a, 2).unwrap());
    let plain = assemble_rom(&s.layout, pod_decoders(s, sizes).unwrap(), None, con()).unwrap();
    let hr = assemble_rom(&s.layout, pod_decoders(s, sizes).unwrap(), Some(&all), con()).unwrap();
    assert!(hr.hyper_reduced());
    let init = plain.encode(&c.x0).unwrap();
    let (za, _, _) = solve_rom(&plain, &c.fom, &init, &c.truth, &rom_options()).unwrap();
    let (zb, _, _) = solve_rom(&hr, &c.fom, &init, &c.truth, &rom_options()).unwrap();
    for (a, b) in za.iter().flatten().zip(zb.iter().flatten()) {
        assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
    }

    let samples = hr_samples(s, 30).unwrap();
    let sparse = assemble_rom(&s.layout, pod_decoders(s, sizes).unwrap(), Some(&samples), con()).unwrap();
    assert_eq!(sparse.sampled_rows(0).unwrap().len(), 30);
    let (_, _, rep) = solve_rom(&sparse, &c.fom, &init, &c.truth, &rom_options()).unwrap();
    assert!(rep.error < 0.2, "HR error {}", rep.error);
}

#[test]
fn parameter_counts_shrink_with_more_subdomains() {
    let g = Grid::reference(122, 14).unwrap();
    let sizes = RomSizes { n_omega: 6, n_gamma: 3 };
    let rows: Vec<(String, Vec<usize>)> = [(1, 1), (2, 1), (2, 2), (4, 2)]
        .iter()
        .map(|&(a, b)| {
            let l = decompose(&g, a, b).unwrap();
            (format!("{a}x{b}"), autoencoder_parameter_counts(&l, sizes, &AeShape::default()).unwrap())
        })
        .collect();
    let table = parameter_table(rows);
    assert_eq!(table[0].reduction_percent, 0.0);
    for w in table.windows(2) {
        assert!(w[1].max_per_subdomain < w[0].max_per_subdomain);
        assert!(w[1].reduction_percent > w[0].reduction_percent);
    }
    assert!(parameter_table(vec![("none".into(), vec![])])[0].total == 0);
}

#[test]
fn bench_csv_has_one_line_per_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bench.csv");
    let row = BenchRow {
        rom_type: "NM".into(),
        n_omega: 6,
        n_gamma: 3,
        dof: 36,
        hr: true,
        n_hr_nodes: 100,
        error: 2.42e-3,
        speedup: 44.7,
        iterations: 5,
    };
    write_bench_csv(&p, &[row.clone(), row]).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], BENCH_HEADER);
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1], "NM,6,3,36,true,100,2.420000e-3,44.7000,5");
}
