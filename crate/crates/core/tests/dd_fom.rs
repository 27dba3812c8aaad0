use ddrom::burgers::{build_problem, solve_fom, BurgersParams, Grid};
use ddrom::dd::{dd_fom_options, decompose, restrict_state, scatter_state, solve_dd_fom};
use ddrom::newton::NewtonOptions;

fn rel_err(parts: &[(Vec<f64>, Vec<f64>)], reference: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((ai, ag), (bi, bg)) in parts.iter().zip(reference) {
        for (a, b) in ai.iter().chain(ag).zip(bi.iter().chain(bg)) {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    (num / den).sqrt()
}

#[test]
fn dd_fom_matches_monolithic_solution() {
    let grid = Grid::reference(42, 10).unwrap();
    let params = BurgersParams::new(3000.0, 15.0, 0.1).unwrap();
    let prob = build_problem(&grid, &params).unwrap();
    let exact = prob.exact_state().into_vec();
    let (fom, _) = solve_fom(&prob, &exact, &NewtonOptions::default()).unwrap();
    let layout = decompose(&grid, 2, 2).unwrap();
    let opts = dd_fom_options(&layout);
    let (parts, res) = solve_dd_fom(&prob, &layout, &exact, &opts).unwrap();

    let tol = 1e-8 * (grid.n_unknowns() as f64).sqrt();
    let rec = res.final_record();
    assert!(2.0 * rec.objective <= 2.0 * tol * tol, "objective {}", rec.objective);
    assert!(rec.feasibility <= 1e-10, "feasibility {}", rec.feasibility);

    let reference: Vec<_> = (0..layout.n_subdomains())
        .map(|i| restrict_state(fom.as_slice(), &layout, i).unwrap())
        .collect();
    let e = rel_err(&parts, &reference);
    assert!(e <= 1e-6, "relative error {e}");
    let x = scatter_state(&layout, &parts).unwrap();
    let r = prob.residual(&x).unwrap();
    assert!(ddrom::linalg::norm2(&r) <= 10.0 * tol);
}
