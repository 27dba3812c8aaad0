//! Assembly and evaluation of DD ROMs: per subdomain an interior and an
//! interface decoder, optional collocation hyper-reduction, and strong or
//! weak compatibility constraints, solved with the block SQP solver.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use faer::Mat;

use crate::burgers::{solve_fom, FomProblem};
use crate::dd::{build_constraints, restrict_state, DdLayout, SubdomainSystem};
use crate::decoder::{Decoder, Jacobian};
use crate::error::{check_len, Error, Result};
use crate::hyper::{SamplingMatrix, WeakConstraintMatrix};
use crate::linalg::{dense_matvec, norm2, CsrMatrix};
use crate::newton::NewtonOptions;
use crate::sqp::{self, BlockEval, BlockLsqProblem, BlockMatrix, BlockValues, SqpOptions, SqpResult};
use crate::stencil::StencilSystem;

/// Decoders of one subdomain.
#[derive(Debug)]
pub struct SubdomainDecoders {
    pub interior: Box<dyn Decoder>,
    pub interface: Box<dyn Decoder>,
}

#[derive(Debug)]
struct HrParts {
    rows: Vec<usize>,
    /// Local state positions read by the sampled rows, ascending.
    needed: Vec<usize>,
    /// How many of `needed` are interior positions.
    n_needed_interior: usize,
    interior: Option<Box<dyn Decoder>>,
    /// Needed interface positions, read off the full interface decode that
    /// the constraints need anyway.
    interface_rows: Vec<usize>,
}

#[derive(Debug)]
struct SubdomainRom {
    decoders: SubdomainDecoders,
    hr: Option<HrParts>,
    /// `A_i` (strong) or `C·A_i` (weak).
    constraint: ConstraintBlock,
}

#[derive(Debug, Clone)]
enum ConstraintBlock {
    Sparse(CsrMatrix),
    Dense(Mat<f64>),
}

impl ConstraintBlock {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ConstraintBlock::Sparse(a) => a.matvec(x),
            ConstraintBlock::Dense(a) => dense_matvec(a, x),
        }
    }

    fn nrows(&self) -> usize {
        match self {
            ConstraintBlock::Sparse(a) => a.nrows(),
            ConstraintBlock::Dense(a) => a.nrows(),
        }
    }
}

/// How compatibility between interface copies is enforced.
#[derive(Clone, Debug)]
pub enum Constraints {
    Strong,
    Weak(WeakConstraintMatrix),
}

/// A parameter-independent DD ROM.
#[derive(Debug)]
pub struct RomInstance {
    layout: DdLayout,
    subdomains: Vec<SubdomainRom>,
    constraints: Constraints,
}

/// Wires decoders, optional HR samples and constraints into a ROM.
pub fn assemble_rom(
    layout: &DdLayout,
    decoders: Vec<SubdomainDecoders>,
    hr: Option<&[SamplingMatrix]>,
    constraints: Constraints,
) -> Result<RomInstance> {
    let n_sub = layout.n_subdomains();
    check_len("decoder pairs", n_sub, decoders.len())?;
    let a = build_constraints(layout);
    if let Constraints::Weak(c) = &constraints {
        check_len("test matrix columns", a.n_constraints(), c.n_constraints())?;
    }
    if let Some(h) = hr {
        check_len("hyper-reduction samples", n_sub, h.len())?;
    }
    // Any grid-consistent system gives the stencil structure.
    let structure = crate::burgers::build_problem(&layout.grid, &crate::burgers::BurgersParams::new(1.0, 1.0, 1.0)?)?;
    let mut subs = Vec::with_capacity(n_sub);
    for (i, dec) in decoders.into_iter().enumerate() {
        let sd = layout.subdomain(i);
        check_len("interior decoder output", sd.n_interior(), dec.interior.output_dim())?;
        check_len("interface decoder output", sd.n_interface(), dec.interface.output_dim())?;
        let n_latent = dec.interior.latent_dim() + dec.interface.latent_dim();
        let hr_parts = match hr {
            None => None,
            Some(samples) => {
                let s = &samples[i];
                if s.subdomain != i {
                    return Err(Error::InvalidArgument(format!("sample set {i} belongs to subdomain {}", s.subdomain)));
                }
                if s.rows.len() < n_latent {
                    return Err(Error::InvalidArgument(format!(
                        "subdomain {i}: {} HR rows for {n_latent} latent unknowns",
                        s.rows.len()
                    )));
                }
                if s.rows.iter().any(|&r| r >= sd.rows.len()) || s.rows.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidArgument(format!("subdomain {i}: invalid HR rows")));
                }
                let sys = SubdomainSystem::new(&structure, layout, i)?;
                let (_, needed) = sys.system.select_rows(&s.rows);
                let n_int = needed.iter().take_while(|&&p| p < sd.n_interior()).count();
                let int_rows: Vec<usize> = needed[..n_int].to_vec();
                let gam_rows: Vec<usize> = needed[n_int..].iter().map(|p| p - sd.n_interior()).collect();
                Some(HrParts {
                    rows: s.rows.clone(),
                    interior: if int_rows.is_empty() { None } else { Some(dec.interior.restrict(&int_rows)?) },
                    interface_rows: gam_rows,
                    needed,
                    n_needed_interior: n_int,
                })
            }
        };
        let constraint = match &constraints {
            Constraints::Strong => ConstraintBlock::Sparse(a.blocks[i].clone()),
            Constraints::Weak(c) => {
                let ct = c.matrix.transpose().to_owned();
                ConstraintBlock::Dense(a.blocks[i].transpose().mul_dense(&ct).transpose().to_owned())
            }
        };
        subs.push(SubdomainRom {
            decoders: dec,
            hr: hr_parts,
            constraint,
        });
    }
    Ok(RomInstance {
        layout: layout.clone(),
        subdomains: subs,
        constraints,
    })
}

/// Eq.-style relative error: the square root of the subdomain mean of
/// `(‖Δx_Ω‖² + ‖Δx_Γ‖²) / (‖x_Ω‖² + ‖x_Γ‖²)`.
pub fn relative_error(reference: &[(Vec<f64>, Vec<f64>)], approx: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    check_len("subdomain count", reference.len(), approx.len())?;
    if reference.is_empty() {
        return Err(Error::InvalidArgument("no subdomains".into()));
    }
    let mut acc = 0.0;
    for (i, ((ri, rg), (ai, ag))) in reference.iter().zip(approx).enumerate() {
        check_len("interior state", ri.len(), ai.len())?;
        check_len("interface state", rg.len(), ag.len())?;
        let num: f64 = ri.iter().zip(ai).chain(rg.iter().zip(ag)).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = ri.iter().chain(rg).map(|a| a * a).sum();
        if !(den > 0.0) {
            return Err(Error::Degenerate(format!("subdomain {i} reference state has zero norm")));
        }
        acc += num / den;
    }
    Ok((acc / reference.len() as f64).sqrt())
}

/// The ROM at one parameter value.
pub struct RomProblem<'a> {
    rom: &'a RomInstance,
    systems: Vec<StencilSystem>,
}

impl RomInstance {
    pub fn layout(&self) -> &DdLayout {
        &self.layout
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn decoders(&self, i: usize) -> &SubdomainDecoders {
        &self.subdomains[i].decoders
    }

    pub fn latent_sizes(&self, i: usize) -> (usize, usize) {
        let d = &self.subdomains[i].decoders;
        (d.interior.latent_dim(), d.interface.latent_dim())
    }

    /// `Σ_i (n_i^Ω + n_i^Γ)`.
    pub fn dof(&self) -> usize {
        (0..self.n_subdomains()).map(|i| {
            let (a, b) = self.latent_sizes(i);
            a + b
        }).sum()
    }

    pub fn hyper_reduced(&self) -> bool {
        self.subdomains.iter().all(|s| s.hr.is_some())
    }

    /// HR sampled residual rows of subdomain `i`.
    pub fn sampled_rows(&self, i: usize) -> Option<&[usize]> {
        self.subdomains[i].hr.as_ref().map(|h| h.rows.as_slice())
    }

    pub fn problem(&self, fom: &FomProblem) -> Result<RomProblem<'_>> {
        if fom.grid() != &self.layout.grid {
            return Err(Error::InvalidArgument("FOM grid differs from the ROM layout".into()));
        }
        let mut systems = Vec::with_capacity(self.n_subdomains());
        for (i, s) in self.subdomains.iter().enumerate() {
            let sys = SubdomainSystem::new(fom, &self.layout, i)?.system;
            systems.push(match &s.hr {
                None => sys,
                Some(h) => {
                    let (compact, needed) = sys.select_rows(&h.rows);
                    debug_assert_eq!(needed, h.needed);
                    compact
                }
            });
        }
        Ok(RomProblem { rom: self, systems })
    }

    /// Latent coordinates of a monolithic state.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.n_subdomains())
            .map(|i| {
                let (xi, xg) = restrict_state(x, &self.layout, i)?;
                let d = &self.subdomains[i].decoders;
                Ok([d.interior.encode(&xi)?, d.interface.encode(&xg)?].concat())
            })
            .collect()
    }

    /// Full subdomain states `(g_Ω(ẑ_Ω), g_Γ(ẑ_Γ))`.
    pub fn decode(&self, latents: &[Vec<f64>]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        check_len("latent blocks", self.n_subdomains(), latents.len())?;
        latents
            .iter()
            .zip(&self.subdomains)
            .map(|(z, s)| {
                let ni = s.decoders.interior.latent_dim();
                check_len("latent block", ni + s.decoders.interface.latent_dim(), z.len())?;
                Ok((s.decoders.interior.decode(&z[..ni])?, s.decoders.interface.decode(&z[ni..])?))
            })
            .collect()
    }

    /// `‖Σ_i A_i g_Γ(ẑ_Γ)‖₂`, the strong-constraint violation.
    pub fn strong_violation(&self, latents: &[Vec<f64>]) -> Result<f64> {
        let states = self.decode(latents)?;
        let a = build_constraints(&self.layout);
        let refs: Vec<&[f64]> = states.iter().map(|s| s.1.as_slice()).collect();
        Ok(norm2(&a.apply(&refs)))
    }

    /// Relative error of a latent solution against a monolithic reference.
    pub fn error_against(&self, reference: &[f64], latents: &[Vec<f64>]) -> Result<f64> {
        let refs: Vec<(Vec<f64>, Vec<f64>)> = (0..self.n_subdomains())
            .map(|i| restrict_state(reference, &self.layout, i))
            .collect::<Result<_>>()?;
        relative_error(&refs, &self.decode(latents)?)
    }

    /// Trainable parameters (encoder and decoder) of each subdomain's
    /// interior and interface networks.
    pub fn parameter_counts(&self) -> Vec<usize> {
        self.subdomains
            .iter()
            .map(|s| s.decoders.interior.parameter_count() + s.decoders.interface.parameter_count())
            .collect()
    }
}

fn column_block(j: &CsrMatrix, start: usize, end: usize, jac: &Jacobian) -> Mat<f64> {
    let sub = j.column_range(start, end);
    match jac {
        Jacobian::Identity(_) => sub.to_dense(),
        Jacobian::Dense(d) => sub.mul_dense(d),
    }
}

impl RomProblem<'_> {
    fn split<'z>(&self, i: usize, z: &'z [f64]) -> (&'z [f64], &'z [f64]) {
        let ni = self.rom.subdomains[i].decoders.interior.latent_dim();
        z.split_at(ni)
    }

    fn residual_state(&self, i: usize, z: &[f64], with_jac: bool) -> Result<(Vec<f64>, Vec<f64>, Option<(Jacobian, Jacobian)>, Option<Jacobian>)> {
        let s = &self.rom.subdomains[i];
        let (zi, zg) = self.split(i, z);
        match &s.hr {
            None => {
                if with_jac {
                    let (xi, ji) = s.decoders.interior.decode_with_jacobian(zi)?;
                    let (xg, jg) = s.decoders.interface.decode_with_jacobian(zg)?;
                    let y = [xi, xg.clone()].concat();
                    Ok((y, xg, Some((ji, jg.clone())), Some(jg)))
                } else {
                    let xi = s.decoders.interior.decode(zi)?;
                    let xg = s.decoders.interface.decode(zg)?;
                    Ok(([xi, xg.clone()].concat(), xg, None, None))
                }
            }
            Some(h) => {
                let mut y = Vec::with_capacity(h.needed.len());
                let mut jacs = (Jacobian::Identity(0), Jacobian::Identity(0));
                if let Some(d) = &h.interior {
                    if with_jac {
                        let (v, j) = d.decode_with_jacobian(zi)?;
                        y.extend(v);
                        jacs.0 = j;
                    } else {
                        y.extend(d.decode(zi)?);
                    }
                }
                let (xg, jg) = if with_jac {
                    let (v, j) = s.decoders.interface.decode_with_jacobian(zg)?;
                    (v, Some(j))
                } else {
                    (s.decoders.interface.decode(zg)?, None)
                };
                let rows = &h.interface_rows;
                y.extend(rows.iter().map(|&r| xg[r]));
                if let Some(j) = &jg {
                    if !rows.is_empty() {
                        jacs.1 = Jacobian::Dense(match j {
                            Jacobian::Identity(_) => Mat::from_fn(rows.len(), zg.len(), |i, k| if rows[i] == k { 1.0 } else { 0.0 }),
                            Jacobian::Dense(m) => Mat::from_fn(rows.len(), zg.len(), |i, k| m[(rows[i], k)]),
                        });
                    }
                }
                Ok((y, xg, if with_jac { Some(jacs) } else { None }, jg))
            }
        }
    }
}

impl BlockLsqProblem for RomProblem<'_> {
    fn n_blocks(&self) -> usize {
        self.rom.n_subdomains()
    }

    fn block_dim(&self, i: usize) -> usize {
        let (a, b) = self.rom.latent_sizes(i);
        a + b
    }

    fn n_constraints(&self) -> usize {
        self.rom.subdomains[0].constraint.nrows()
    }

    fn evaluate(&self, i: usize, z: &[f64]) -> Result<BlockEval> {
        let s = &self.rom.subdomains[i];
        let sys = &self.systems[i];
        let (y, xg, jacs, jg_full) = self.residual_state(i, z, true)?;
        let (ji, jg) = jacs.expect("requested");
        let jg_full = jg_full.expect("requested");
        let residual = sys.residual(&y);
        let jsys = sys.jacobian(&y);
        let (n_int_state, n_state) = match &s.hr {
            None => (s.decoders.interior.output_dim(), y.len()),
            Some(h) => (h.n_needed_interior, y.len()),
        };
        let (ni, ng) = self.split(i, z);
        let (ni, ng) = (ni.len(), ng.len());
        let jacobian = match (&ji, &jg, &s.hr) {
            (Jacobian::Identity(_), Jacobian::Identity(_), None) => BlockMatrix::Sparse(jsys),
            _ => {
                let mut m = Mat::<f64>::zeros(residual.len(), ni + ng);
                if n_int_state > 0 {
                    let a = column_block(&jsys, 0, n_int_state, &ji);
                    m.as_mut().submatrix_mut(0, 0, residual.len(), ni).copy_from(&a);
                }
                if n_state > n_int_state {
                    let b = column_block(&jsys, n_int_state, n_state, &jg);
                    m.as_mut().submatrix_mut(0, ni, residual.len(), ng).copy_from(&b);
                }
                BlockMatrix::Dense(m)
            }
        };
        let constraint = s.constraint.apply(&xg);
        let n_c = s.constraint.nrows();
        let constraint_jacobian = match (&s.constraint, &jg_full) {
            (ConstraintBlock::Sparse(a), Jacobian::Identity(_)) => {
                BlockMatrix::Sparse(CsrMatrix::from_triplets(n_c, ni + ng, &a.shifted_triplets(0, ni)))
            }
            (c, j) => {
                let prod = match (c, j) {
                    (ConstraintBlock::Sparse(a), Jacobian::Dense(d)) => a.mul_dense(d),
                    (ConstraintBlock::Dense(a), Jacobian::Dense(d)) => a * d,
                    (ConstraintBlock::Dense(a), Jacobian::Identity(_)) => a.clone(),
                    (ConstraintBlock::Sparse(_), Jacobian::Identity(_)) => unreachable!(),
                };
                let mut m = Mat::<f64>::zeros(n_c, ni + ng);
                m.as_mut().submatrix_mut(0, ni, n_c, ng).copy_from(&prod);
                BlockMatrix::Dense(m)
            }
        };
        Ok(BlockEval {
            residual,
            jacobian,
            constraint,
            constraint_jacobian,
        })
    }

    fn evaluate_values(&self, i: usize, z: &[f64]) -> Result<BlockValues> {
        let s = &self.rom.subdomains[i];
        let (y, xg, _, _) = self.residual_state(i, z, false)?;
        Ok(BlockValues {
            residual: self.systems[i].residual(&y),
            constraint: s.constraint.apply(&xg),
        })
    }
}

impl RomProblem<'_> {
    /// Sum of single-row residual evaluations over all subdomains so far.
    pub fn row_evaluations(&self) -> usize {
        self.systems.iter().map(|s| s.row_evaluations()).sum()
    }

    pub fn system(&self, i: usize) -> &StencilSystem {
        &self.systems[i]
    }
}

/// Default ROM solver settings: KKT residual ≤ 1e-8.
pub fn rom_options() -> SqpOptions {
    SqpOptions::default()
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub error: f64,
    pub iterations: usize,
    /// ROM wall time with per-subdomain phases replaced by their maximum.
    pub rom_seconds: f64,
    pub rom_wall_seconds: f64,
    pub strong_violation: f64,
    pub weak_violation: f64,
}

/// Solves the ROM at the parameters of `fom` from `init` latents and
/// measures the error against the monolithic `reference` state.
pub fn solve_rom(
    rom: &RomInstance,
    fom: &FomProblem,
    init: &[Vec<f64>],
    reference: &[f64],
    opts: &SqpOptions,
) -> Result<(Vec<Vec<f64>>, SqpResult, EvalReport)> {
    let problem = rom.problem(fom)?;
    let lambda0 = vec![0.0; problem.n_constraints()];
    let res = sqp::solve(&problem, init, &lambda0, opts)?;
    let report = EvalReport {
        error: rom.error_against(reference, &res.blocks)?,
        iterations: res.iterations,
        rom_seconds: res.simulated_parallel_seconds(),
        rom_wall_seconds: res.wall_seconds,
        strong_violation: rom.strong_violation(&res.blocks)?,
        weak_violation: res.final_record().feasibility,
    };
    Ok((res.blocks.clone(), res, report))
}

/// Wall time of the monolithic Newton solve from `init` (median of `runs`).
pub fn time_fom(fom: &FomProblem, init: &[f64], runs: usize) -> Result<(Vec<f64>, f64)> {
    let mut times = Vec::new();
    let mut sol = Vec::new();
    for _ in 0..runs.max(1) {
        let t = Instant::now();
        let (x, _) = solve_fom(fom, init, &NewtonOptions::default())?;
        times.push(t.elapsed().as_secs_f64());
        sol = x.into_vec();
    }
    Ok((sol, median(&mut times)))
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One row of the benchmark table.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub rom_type: String,
    pub n_omega: usize,
    pub n_gamma: usize,
    pub dof: usize,
    pub hr: bool,
    pub n_hr_nodes: usize,
    pub error: f64,
    pub speedup: f64,
    pub iterations: usize,
}

pub const BENCH_HEADER: &str = "rom_type,n_omega,n_gamma,dof,hr,n_hr_nodes,error,speedup,iterations";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6e},{:.4},{}",
            self.rom_type, self.n_omega, self.n_gamma, self.dof, self.hr, self.n_hr_nodes, self.error, self.speedup, self.iterations
        )
    }
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv())?;
    }
    Ok(())
}

/// Runs one ROM configuration `runs` times and reports the median timing.
pub fn benchmark_rom(
    rom: &RomInstance,
    fom: &FomProblem,
    init: &[Vec<f64>],
    reference: &[f64],
    runs: usize,
    opts: &SqpOptions,
) -> Result<EvalReport> {
    let mut times = Vec::new();
    let mut report = None;
    for _ in 0..runs.max(1) {
        let (_, _, r) = solve_rom(rom, fom, init, reference, opts)?;
        times.push(r.rom_seconds);
        report = Some(r);
    }
    let mut r = report.expect("at least one run");
    r.rom_seconds = median(&mut times);
    Ok(r)
}

/// Parameter counts of a set of decoders/autoencoders across layouts.
#[derive(Clone, Debug)]
pub struct ParameterRow {
    pub layout: String,
    pub max_per_subdomain: usize,
    pub total: usize,
    pub reduction_percent: f64,
}

pub const PARAMETER_HEADER: &str = "layout,max_params_per_subdomain,total_params,reduction_percent";

/// Fills in the reduction of each row's max-per-subdomain count relative
/// to the first (single-subdomain) row.
pub fn parameter_table(rows: Vec<(String, Vec<usize>)>) -> Vec<ParameterRow> {
    let base = rows.first().map(|r| r.1.iter().copied().max().unwrap_or(0)).unwrap_or(0);
    rows.into_iter()
        .map(|(layout, counts)| {
            let max = counts.iter().copied().max().unwrap_or(0);
            ParameterRow {
                layout,
                max_per_subdomain: max,
                total: counts.iter().sum(),
                reduction_percent: if base > 0 { 100.0 * (1.0 - max as f64 / base as f64) } else { 0.0 },
            }
        })
        .collect()
}

impl ParameterRow {
    pub fn csv(&self) -> String {
        format!("{},{},{},{:.2}", self.layout, self.max_per_subdomain, self.total, self.reduction_percent)
    }
}
