//! FOM snapshot generation over a tensor parameter grid, with on-disk
//! storage.
//!
//! Solves are warm-started along a serpentine walk of the parameter grid.
//! The walk may be cut into several independent chains which then run
//! concurrently; the cut points depend only on the chain count, so results do
//! not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::burgers::{build_problem, solve_fom_observed, BurgersParams, Grid};
use crate::dd::{restrict_state, scatter_state, DdLayout};
use crate::error::{Error, Result};
use crate::matfile::{self, DenseMatrix};
use crate::newton::NewtonOptions;
use crate::par;

pub const FORMAT_VERSION: u32 = 1;

/// Uniform tensor grid over `(a, λ)`, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    pub a_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub n_a: usize,
    pub n_lambda: usize,
}

fn linspace(lo: f64, hi: f64, n: usize, k: usize) -> f64 {
    if n == 1 {
        lo
    } else if k == n - 1 {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Builds the tensor grid; `a` varies fastest in the point ordering.
pub fn sample_parameters(
    a_range: (f64, f64),
    lambda_range: (f64, f64),
    n_a: usize,
    n_lambda: usize,
) -> Result<ParameterGrid> {
    if n_a == 0 || n_lambda == 0 {
        return Err(Error::InvalidArgument("parameter grid needs at least one point per direction".into()));
    }
    for (name, (lo, hi)) in [("a", a_range), ("lambda", lambda_range)] {
        if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("empty {name} range [{lo}, {hi}]")));
        }
    }
    Ok(ParameterGrid {
        a_range,
        lambda_range,
        n_a,
        n_lambda,
    })
}

impl ParameterGrid {
    pub fn len(&self) -> usize {
        self.n_a * self.n_lambda
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, idx: usize) -> (f64, f64) {
        let (ia, il) = (idx % self.n_a, idx / self.n_a);
        (
            linspace(self.a_range.0, self.a_range.1, self.n_a, ia),
            linspace(self.lambda_range.0, self.lambda_range.1, self.n_lambda, il),
        )
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Boustrophedon order: `a` ascending on even λ-rows, descending on odd.
    pub fn serpentine(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        for il in 0..self.n_lambda {
            for k in 0..self.n_a {
                let ia = if il % 2 == 0 { k } else { self.n_a - 1 - k };
                order.push(il * self.n_a + ia);
            }
        }
        order
    }
}

/// Index of the point nearest to `(a, λ)` in coordinates scaled by the
/// range widths.
pub fn nearest_parameter(points: &[(f64, f64)], a: f64, lambda: f64) -> Option<usize> {
    let (mut amin, mut amax, mut lmin, mut lmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(pa, pl) in points {
        amin = amin.min(pa);
        amax = amax.max(pa);
        lmin = lmin.min(pl);
        lmax = lmax.max(pl);
    }
    let sa = if amax > amin { amax - amin } else { 1.0 };
    let sl = if lmax > lmin { lmax - lmin } else { 1.0 };
    points
        .iter()
        .enumerate()
        .map(|(k, &(pa, pl))| (k, ((pa - a) / sa).powi(2) + ((pl - lambda) / sl).powi(2)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(k, _)| k)
}

#[derive(Clone, Debug)]
pub struct SnapshotOptions {
    pub newton: NewtonOptions,
    /// Number of independent warm-start chains.
    pub chains: usize,
    /// Keep residuals of non-converged Newton iterates for hyper-reduction.
    pub collect_residuals: bool,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            chains: 4,
            collect_residuals: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub grid: Grid,
    pub nu: f64,
    pub layout: DdLayout,
    /// Parameters of the stored columns, in column order.
    pub params: Vec<(f64, f64)>,
    /// Parameters whose solve failed.
    pub failed: Vec<(f64, f64)>,
    /// Newton tolerance every stored column satisfies.
    pub tolerance: f64,
    /// Monolithic snapshots, `N_x × M`.
    pub x: DenseMatrix,
    pub interior: Vec<DenseMatrix>,
    pub interface: Vec<DenseMatrix>,
    /// Subdomain residual snapshots, `N_i^r × M_r`.
    pub residuals: Vec<DenseMatrix>,
}

struct Solved {
    idx: usize,
    state: Vec<f64>,
    residuals: Vec<Vec<f64>>,
}

fn solve_chain(
    grid: &Grid,
    nu: f64,
    pgrid: &ParameterGrid,
    chain: &[usize],
    opts: &SnapshotOptions,
) -> Result<(Vec<Solved>, Vec<usize>)> {
    let mut out = Vec::new();
    let mut failed = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &idx in chain {
        let (a, lambda) = pgrid.point(idx);
        let problem = build_problem(grid, &BurgersParams::new(a, lambda, nu)?)?;
        let mut attempts = Vec::new();
        if let Some(w) = &warm {
            attempts.push(w.clone());
        }
        attempts.push(problem.exact_state().into_vec());
        let mut done = None;
        for init in attempts {
            let mut res = Vec::new();
            let mut obs = |_: &[f64], r: &[f64]| {
                if opts.collect_residuals {
                    res.push(r.to_vec());
                }
            };
            match solve_fom_observed(&problem, &init, &opts.newton, &mut obs) {
                Ok((state, _)) => {
                    done = Some((state.into_vec(), res));
                    break;
                }
                Err(e) => warn!("snapshot solve at (a={a}, lambda={lambda}) failed: {e}"),
            }
        }
        match done {
            Some((state, residuals)) => {
                warm = Some(state.clone());
                out.push(Solved { idx, state, residuals });
            }
            None => failed.push(idx),
        }
    }
    Ok((out, failed))
}

/// Solves the FOM at every grid parameter and restricts the solutions to the
/// subdomains of `layout`. Failed parameters are skipped with a warning.
pub fn generate_snapshots(
    grid: &Grid,
    nu: f64,
    pgrid: &ParameterGrid,
    layout: &DdLayout,
    opts: &SnapshotOptions,
) -> Result<SnapshotSet> {
    if &layout.grid != grid {
        return Err(Error::InvalidArgument("layout was built for a different grid".into()));
    }
    let order = pgrid.serpentine();
    let n_chains = opts.chains.clamp(1, order.len().max(1));
    let chunks: Vec<&[usize]> = (0..n_chains)
        .map(|c| &order[c * order.len() / n_chains..(c + 1) * order.len() / n_chains])
        .collect();
    let results = par::map_slice(&chunks, |chain| solve_chain(grid, nu, pgrid, chain, opts));
    let mut solved = Vec::new();
    let mut failed_idx = Vec::new();
    for r in results {
        let (s, f) = r?;
        solved.extend(s);
        failed_idx.extend(f);
    }
    solved.sort_by_key(|s| s.idx);
    failed_idx.sort_unstable();
    if solved.is_empty() {
        return Err(Error::Diverged("no snapshot solve converged".into()));
    }
    info!("{} snapshots solved, {} failed", solved.len(), failed_idx.len());

    let n = grid.n_unknowns();
    let cols: Vec<Vec<f64>> = solved.iter().map(|s| s.state.clone()).collect();
    let x = DenseMatrix::from_columns(n, &cols);
    let mut interior = Vec::new();
    let mut interface = Vec::new();
    let mut residuals = Vec::new();
    let all_res: Vec<&Vec<f64>> = solved.iter().flat_map(|s| s.residuals.iter()).collect();
    for i in 0..layout.n_subdomains() {
        let parts: Vec<(Vec<f64>, Vec<f64>)> =
            cols.iter().map(|c| restrict_state(c, layout, i)).collect::<Result<_>>()?;
        let sd = layout.subdomain(i);
        interior.push(DenseMatrix::from_columns(
            sd.n_interior(),
            &parts.iter().map(|p| p.0.clone()).collect::<Vec<_>>(),
        ));
        interface.push(DenseMatrix::from_columns(
            sd.n_interface(),
            &parts.into_iter().map(|p| p.1).collect::<Vec<_>>(),
        ));
        let rcols: Vec<Vec<f64>> = all_res
            .iter()
            .map(|r| sd.rows.iter().map(|&q| r[q]).collect())
            .collect();
        residuals.push(DenseMatrix::from_columns(sd.rows.len(), &rcols));
    }
    Ok(SnapshotSet {
        grid: *grid,
        nu,
        layout: layout.clone(),
        params: solved.iter().map(|s| pgrid.point(s.idx)).collect(),
        failed: failed_idx.iter().map(|&k| pgrid.point(k)).collect(),
        tolerance: opts.newton.tolerance(n),
        x,
        interior,
        interface,
        residuals,
    })
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    n_snapshots: usize,
    n_state: usize,
    n_subdomains: usize,
    n_residual_snapshots: usize,
    tolerance: f64,
    nu: f64,
    grid: Grid,
    params: Vec<(f64, f64)>,
    failed: Vec<(f64, f64)>,
    checksums: BTreeMap<String, String>,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Monolithic column `l`.
    pub fn column(&self, l: usize) -> &[f64] {
        self.x.col(l)
    }

    /// Index of the stored snapshot nearest to `(a, λ)`.
    pub fn nearest(&self, a: f64, lambda: f64) -> usize {
        nearest_parameter(&self.params, a, lambda).expect("snapshot set is never empty")
    }

    /// Checks that the subdomain matrices are restrictions of `x`.
    pub fn check_restrictions(&self) -> Result<()> {
        for l in 0..self.len() {
            let parts: Vec<_> = (0..self.layout.n_subdomains())
                .map(|i| (self.interior[i].col(l).to_vec(), self.interface[i].col(l).to_vec()))
                .collect();
            let back = scatter_state(&self.layout, &parts)?;
            if back != self.x.col(l) {
                return Err(Error::Consistency(format!("snapshot {l} restrictions disagree with X")));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut checksums = BTreeMap::new();
        let mut put = |name: String, m: &DenseMatrix| -> Result<()> {
            let p = dir.join(&name);
            matfile::write_matrix(&p, m)?;
            checksums.insert(name, matfile::sha256_file(&p)?);
            Ok(())
        };
        put("X.mat".into(), &self.x)?;
        for i in 0..self.layout.n_subdomains() {
            put(format!("X_omega_{i}.mat"), &self.interior[i])?;
            put(format!("X_gamma_{i}.mat"), &self.interface[i])?;
            put(format!("R_{i}.mat"), &self.residuals[i])?;
        }
        self.layout.save(&dir.join("layout"))?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            n_snapshots: self.len(),
            n_state: self.x.rows,
            n_subdomains: self.layout.n_subdomains(),
            n_residual_snapshots: self.residuals.first().map_or(0, |r| r.cols),
            tolerance: self.tolerance,
            nu: self.nu,
            grid: self.grid,
            params: self.params.clone(),
            failed: self.failed.clone(),
            checksums,
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("manifest.txt"), text)?;
        Ok(())
    }

    /// Loads a set written by [`SnapshotSet::save`], verifying checksums and
    /// that all shapes agree with the manifest.
    pub fn load(dir: &Path) -> Result<SnapshotSet> {
        let mpath = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&mpath)?;
        let m: Manifest = toml::from_str(&text).map_err(|e| Error::Format {
            path: mpath.clone(),
            reason: e.to_string(),
        })?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Format {
                path: mpath,
                reason: format!("unsupported snapshot format version {}", m.format_version),
            });
        }
        let get = |name: String, rows: Option<usize>, cols: usize| -> Result<DenseMatrix> {
            let p = dir.join(&name);
            let sum = m
                .checksums
                .get(&name)
                .ok_or_else(|| Error::Consistency(format!("manifest lists no checksum for {name}")))?;
            let mat = matfile::read_matrix_checked(&p, sum)?;
            if mat.cols != cols || rows.is_some_and(|r| r != mat.rows) {
                return Err(Error::Consistency(format!(
                    "{name} is {}x{}, manifest expects {}x{cols}",
                    mat.rows,
                    mat.cols,
                    rows.map_or("?".to_string(), |r| r.to_string())
                )));
            }
            Ok(mat)
        };
        if m.params.len() != m.n_snapshots {
            return Err(Error::Consistency(format!(
                "manifest lists {} parameters for {} snapshots",
                m.params.len(),
                m.n_snapshots
            )));
        }
        let layout = DdLayout::load(&dir.join("layout"))?;
        if layout.n_subdomains() != m.n_subdomains || layout.grid != m.grid {
            return Err(Error::Consistency("stored layout does not match the snapshot manifest".into()));
        }
        let x = get("X.mat".into(), Some(m.n_state), m.n_snapshots)?;
        let mut interior = Vec::new();
        let mut interface = Vec::new();
        let mut residuals = Vec::new();
        for i in 0..m.n_subdomains {
            let sd = layout.subdomain(i);
            interior.push(get(format!("X_omega_{i}.mat"), Some(sd.n_interior()), m.n_snapshots)?);
            interface.push(get(format!("X_gamma_{i}.mat"), Some(sd.n_interface()), m.n_snapshots)?);
            residuals.push(get(format!("R_{i}.mat"), Some(sd.rows.len()), m.n_residual_snapshots)?);
        }
        Ok(SnapshotSet {
            grid: m.grid,
            nu: m.nu,
            layout,
            params: m.params,
            failed: m.failed,
            tolerance: m.tolerance,
            x,
            interior,
            interface,
            residuals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_counts() {
        let g = sample_parameters((1.0, 1e4), (5.0, 25.0), 12, 12).unwrap();
        assert_eq!(g.len(), 144);
        assert_eq!(g.point(0), (1.0, 5.0));
        assert_eq!(g.point(143), (1e4, 25.0));
        let one = sample_parameters((1.0, 1e4), (5.0, 25.0), 1, 1).unwrap();
        assert_eq!(one.points(), vec![(1.0, 5.0)]);
        assert_eq!(sample_parameters((1.0, 1e4), (5.0, 25.0), 80, 80).unwrap().len(), 6400);
    }

    #[test]
    fn empty_ranges_rejected() {
        assert!(sample_parameters((10.0, 1.0), (5.0, 25.0), 2, 2).is_err());
        assert!(sample_parameters((1.0, 10.0), (5.0, 25.0), 0, 2).is_err());
    }

    #[test]
    fn serpentine_is_a_permutation_with_unit_steps() {
        let g = sample_parameters((1.0, 2.0), (1.0, 2.0), 4, 3).unwrap();
        let s = g.serpentine();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..12).collect::<Vec<_>>());
        for w in s.windows(2) {
            let (a0, l0) = (w[0] % 4, w[0] / 4);
            let (a1, l1) = (w[1] % 4, w[1] / 4);
            assert_eq!(a0.abs_diff(a1) + l0.abs_diff(l1), 1);
        }
    }

    #[test]
    fn nearest_uses_scaled_distance() {
        let pts = vec![(1.0, 5.0), (1e4, 5.0), (1.0, 25.0)];
        assert_eq!(nearest_parameter(&pts, 9000.0, 6.0), Some(1));
        assert_eq!(nearest_parameter(&pts, 100.0, 24.0), Some(2));
    }
}
