//! Lagrange–Newton SQP with a Gauss–Newton Hessian for block-structured,
//! equality-constrained nonlinear least squares:
//!
//! ```text
//! min ½ Σᵢ ‖rᵢ(zᵢ)‖²   s.t.   Σᵢ cᵢ(zᵢ) = 0
//! ```
//!
//! Each iteration solves the KKT system
//! `[JᵀJ + ρI, Gᵀ; G, 0] [Δz; λ⁺] = [−Jᵀr; −c]` directly (dense LBLᵀ when all
//! blocks are dense, sparse LU otherwise) and backtracks on the ℓ₁ merit
//! function `½‖r‖² + μ‖c‖₁`.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use faer::Mat;

use crate::error::{check_len, Error, Result};
use crate::linalg::{dependent_rows, dot, norm1, norm2, norm_inf, solve_dense_symmetric, solve_sparse, CsrMatrix};
use crate::par;

/// A dense or sparse block of a Jacobian.
#[derive(Clone, Debug)]
pub enum BlockMatrix {
    Dense(Mat<f64>),
    Sparse(CsrMatrix),
}

impl BlockMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.nrows(),
            BlockMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.ncols(),
            BlockMatrix::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, BlockMatrix::Dense(_))
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Vec<f64> {
        match self {
            BlockMatrix::Dense(m) => crate::linalg::dense_transpose_matvec(m, y),
            BlockMatrix::Sparse(m) => m.transpose_matvec(y),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            BlockMatrix::Dense(m) => crate::linalg::dense_matvec(m, x),
            BlockMatrix::Sparse(m) => m.matvec(x),
        }
    }

    fn triplets(&self, row_off: usize, col_off: usize, out: &mut Vec<(usize, usize, f64)>) {
        match self {
            BlockMatrix::Dense(m) => {
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            out.push((i + row_off, j + col_off, v));
                        }
                    }
                }
            }
            BlockMatrix::Sparse(m) => out.extend(m.shifted_triplets(row_off, col_off)),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            BlockMatrix::Dense(m) => m.clone(),
            BlockMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// Residual, constraint contribution and their Jacobians for one block.
#[derive(Clone, Debug)]
pub struct BlockEval {
    pub residual: Vec<f64>,
    pub jacobian: BlockMatrix,
    /// This block's additive contribution to the constraint vector.
    pub constraint: Vec<f64>,
    pub constraint_jacobian: BlockMatrix,
}

/// Values only, for line-search trials.
#[derive(Clone, Debug)]
pub struct BlockValues {
    pub residual: Vec<f64>,
    pub constraint: Vec<f64>,
}

pub trait BlockLsqProblem: Sync {
    fn n_blocks(&self) -> usize;
    fn block_dim(&self, block: usize) -> usize;
    fn n_constraints(&self) -> usize;
    fn evaluate(&self, block: usize, z: &[f64]) -> Result<BlockEval>;
    fn evaluate_values(&self, block: usize, z: &[f64]) -> Result<BlockValues>;
    /// Linear constraints have a constant Jacobian, so its rank is only
    /// checked on the first iteration.
    fn linear_constraints(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug)]
pub struct SqpOptions {
    pub max_iter: usize,
    /// Absolute tolerance on stationarity ‖Jᵀr + Gᵀλ‖ and feasibility ‖c‖.
    pub abs_tol: f64,
    /// Stationarity is also accepted below `rel_tol · max(1, initial)`.
    pub rel_tol: f64,
    /// Also stop once `½‖r‖² ≤ objective_tol` with feasibility met
    /// (zero-residual problems).
    pub objective_tol: f64,
    /// Also stop once an accepted step satisfies
    /// `‖αΔz‖ ≤ step_tol·(1 + ‖z‖)` with feasibility met.
    pub step_tol: f64,
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Levenberg floor on the Gauss–Newton block.
    pub rho_floor: f64,
    /// Factorization retries, multiplying ρ by 10 each time.
    pub max_regularization_tries: usize,
    /// Relative pivot threshold for the constraint rank check.
    pub rank_tol: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            abs_tol: 1e-8,
            rel_tol: 1e-10,
            objective_tol: 0.0,
            step_tol: 1e-13,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
            rho_floor: 1e-10,
            max_regularization_tries: 8,
            rank_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub feasibility: f64,
    pub stationarity: f64,
    /// Accepted step length α of the step taken after this record (0 for the
    /// final record).
    pub step_length: f64,
}

/// Wall time of one iteration: per-block evaluation times (summed over the
/// Jacobian evaluation and all line-search trials) and the serial remainder.
#[derive(Clone, Debug, Default)]
pub struct PhaseTiming {
    pub block_seconds: Vec<f64>,
    pub serial_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Stationarity,
    Objective,
    Step,
}

#[derive(Clone, Debug)]
pub struct SqpResult {
    pub blocks: Vec<Vec<f64>>,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub timings: Vec<PhaseTiming>,
    pub wall_seconds: f64,
    pub stationarity_tol: f64,
    pub feasibility_tol: f64,
    pub termination: Termination,
}

impl SqpResult {
    pub fn final_record(&self) -> &IterationRecord {
        self.history.last().expect("history is never empty")
    }

    /// Wall time with every per-block phase replaced by the slowest block,
    /// i.e. the time an ideal one-process-per-subdomain run would take.
    pub fn simulated_parallel_seconds(&self) -> f64 {
        self.timings
            .iter()
            .map(|t| t.block_seconds.iter().fold(0.0f64, |m, &s| m.max(s)) + t.serial_seconds)
            .sum()
    }

    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,objective,feasibility,stationarity,step_length\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                r.iteration, r.objective, r.feasibility, r.stationarity, r.step_length
            ));
        }
        s
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.history_csv().as_bytes())?;
        Ok(())
    }
}

fn eval_all<P: BlockLsqProblem + ?Sized>(p: &P, z: &[Vec<f64>]) -> (Vec<Result<BlockEval>>, Vec<f64>) {
    let out = par::map_range(p.n_blocks(), |i| {
        let t = Instant::now();
        let e = p.evaluate(i, &z[i]);
        (e, t.elapsed().as_secs_f64())
    });
    out.into_iter().unzip()
}

fn values_all<P: BlockLsqProblem + ?Sized>(p: &P, z: &[Vec<f64>]) -> (Vec<Result<BlockValues>>, Vec<f64>) {
    let out = par::map_range(p.n_blocks(), |i| {
        let t = Instant::now();
        let e = p.evaluate_values(i, &z[i]);
        (e, t.elapsed().as_secs_f64())
    });
    out.into_iter().unzip()
}

fn merit_of(values: &[BlockValues], n_c: usize, mu: f64) -> (f64, f64) {
    let obj: f64 = values.iter().map(|v| 0.5 * dot(&v.residual, &v.residual)).sum();
    let mut c = vec![0.0; n_c];
    for v in values {
        for (a, b) in c.iter_mut().zip(&v.constraint) {
            *a += b;
        }
    }
    (obj + mu * norm1(&c), obj)
}

/// Relative merit tolerance of the Armijo test.
const MERIT_NOISE: f64 = 1e-12;

/// Solves the constrained least-squares problem from `z0` (one vector per
/// block) and initial multipliers `lambda0`.
pub fn solve<P: BlockLsqProblem + ?Sized>(
    problem: &P,
    z0: &[Vec<f64>],
    lambda0: &[f64],
    opts: &SqpOptions,
) -> Result<SqpResult> {
    let start = Instant::now();
    let nb = problem.n_blocks();
    let n_c = problem.n_constraints();
    check_len("sqp block count", nb, z0.len())?;
    check_len("sqp multipliers", n_c, lambda0.len())?;
    let dims: Vec<usize> = (0..nb).map(|i| problem.block_dim(i)).collect();
    for (i, z) in z0.iter().enumerate() {
        check_len("sqp block initial guess", dims[i], z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sqp initial guess"));
        }
    }
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let n_z: usize = dims.iter().sum();

    let mut z: Vec<Vec<f64>> = z0.to_vec();
    let mut lambda = lambda0.to_vec();
    let mut history = Vec::new();
    let mut timings = Vec::new();
    let mut stat_tol = opts.abs_tol;
    let feas_tol = opts.abs_tol;
    let mut iter = 0usize;

    loop {
        let mut timing = PhaseTiming::default();
        let (evals, secs) = eval_all(problem, &z);
        timing.block_seconds = secs;
        let serial_start = Instant::now();
        let evals: Vec<BlockEval> = evals.into_iter().collect::<Result<_>>()?;
        for (i, e) in evals.iter().enumerate() {
            if iter == 0 {
                check_len("block jacobian columns", dims[i], e.jacobian.ncols())?;
                check_len("block jacobian rows", e.residual.len(), e.jacobian.nrows())?;
                check_len("block constraint", n_c, e.constraint.len())?;
                check_len("block constraint jacobian rows", n_c, e.constraint_jacobian.nrows())?;
                check_len("block constraint jacobian columns", dims[i], e.constraint_jacobian.ncols())?;
            }
            if e.residual.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sqp residual"));
            }
        }

        let mut c = vec![0.0; n_c];
        for e in &evals {
            for (a, b) in c.iter_mut().zip(&e.constraint) {
                *a += b;
            }
        }
        let grads: Vec<Vec<f64>> = evals.iter().map(|e| e.jacobian.transpose_matvec(&e.residual)).collect();
        let objective: f64 = evals.iter().map(|e| 0.5 * dot(&e.residual, &e.residual)).sum();
        let mut lagr_grad: Vec<f64> = Vec::with_capacity(n_z);
        for (i, e) in evals.iter().enumerate() {
            let gl = e.constraint_jacobian.transpose_matvec(&lambda);
            lagr_grad.extend(grads[i].iter().zip(&gl).map(|(a, b)| a + b));
        }
        let stationarity = norm2(&lagr_grad);
        let feasibility = norm2(&c);
        if iter == 0 {
            stat_tol = opts.abs_tol.max(opts.rel_tol * stationarity.max(1.0));
        }
        history.push(IterationRecord {
            iteration: iter,
            objective,
            feasibility,
            stationarity,
            step_length: 0.0,
        });

        let feasible = feasibility <= feas_tol;
        let done = if feasible && stationarity <= stat_tol {
            Some(Termination::Stationarity)
        } else if feasible && objective <= opts.objective_tol {
            Some(Termination::Objective)
        } else {
            None
        };
        if let Some(termination) = done {
            timing.serial_seconds = serial_start.elapsed().as_secs_f64();
            timings.push(timing);
            return Ok(SqpResult {
                blocks: z,
                multipliers: lambda,
                iterations: iter,
                history,
                timings,
                wall_seconds: start.elapsed().as_secs_f64(),
                stationarity_tol: stat_tol,
                feasibility_tol: feas_tol,
                termination,
            });
        }
        if iter >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: stationarity.max(feasibility),
            });
        }

        if n_c > 0 && (iter == 0 || !problem.linear_constraints()) {
            check_constraint_rank(&evals, &offsets, n_c, opts.rank_tol)?;
        }

        let rhs: Vec<f64> = grads
            .iter()
            .flatten()
            .map(|g| -g)
            .chain(c.iter().map(|v| -v))
            .collect();
        let sol = solve_kkt(&evals, &offsets, n_z, n_c, &rhs, opts)?;
        let (step, lambda_new) = sol.split_at(n_z);

        let mu = (2.0 * norm_inf(lambda_new)).max(1.0);
        let merit0 = objective + mu * norm1(&c);
        let grad_flat: Vec<f64> = grads.iter().flatten().copied().collect();
        let slope = (dot(&grad_flat, step) - mu * norm1(&c)).min(0.0);

        // Merit changes below this are rounding noise, not descent failures.
        let noise = MERIT_NOISE * merit0.abs();
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut trial_block_secs = vec![0.0; nb];
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<Vec<f64>> = (0..nb)
                .map(|i| {
                    z[i].iter()
                        .zip(&step[offsets[i]..offsets[i] + dims[i]])
                        .map(|(a, d)| a + alpha * d)
                        .collect()
                })
                .collect();
            let (vals, secs) = values_all(problem, &trial);
            for (t, s) in trial_block_secs.iter_mut().zip(secs) {
                *t += s;
            }
            let vals: Vec<BlockValues> = vals.into_iter().collect::<Result<_>>()?;
            let (m, _) = merit_of(&vals, n_c, mu);
            if m.is_finite() && m <= merit0 + opts.c1 * alpha * slope + noise {
                accepted = Some(trial);
                break;
            }
            alpha *= opts.backtrack;
        }
        for (b, t) in timing.block_seconds.iter_mut().zip(&trial_block_secs) {
            *b += t;
        }
        let Some(trial) = accepted else {
            return Err(Error::LineSearch {
                iteration: iter,
                merit: merit0,
            });
        };
        let step_norm = alpha * norm2(step);
        let z_norm = z.iter().map(|b| dot(b, b)).sum::<f64>().sqrt();
        z = trial;
        lambda = lambda_new.to_vec();
        history.last_mut().unwrap().step_length = alpha;
        iter += 1;
        timing.serial_seconds = serial_start.elapsed().as_secs_f64() - trial_block_secs.iter().sum::<f64>();
        timing.serial_seconds = timing.serial_seconds.max(0.0);
        timings.push(timing);

        if step_norm <= opts.step_tol * (1.0 + z_norm) && feasible {
            // Re-evaluate at the final point so the returned record is exact.
            let (vals, _) = values_all(problem, &z);
            let vals: Vec<BlockValues> = vals.into_iter().collect::<Result<_>>()?;
            let (_, obj) = merit_of(&vals, n_c, 0.0);
            let mut cc = vec![0.0; n_c];
            for v in &vals {
                for (a, b) in cc.iter_mut().zip(&v.constraint) {
                    *a += b;
                }
            }
            if norm2(&cc) <= feas_tol {
                history.push(IterationRecord {
                    iteration: iter,
                    objective: obj,
                    feasibility: norm2(&cc),
                    stationarity: f64::NAN,
                    step_length: 0.0,
                });
                return Ok(SqpResult {
                    blocks: z,
                    multipliers: lambda,
                    iterations: iter,
                    history,
                    timings,
                    wall_seconds: start.elapsed().as_secs_f64(),
                    stationarity_tol: stat_tol,
                    feasibility_tol: feas_tol,
                    termination: Termination::Step,
                });
            }
        }
    }
}

fn check_constraint_rank(evals: &[BlockEval], offsets: &[usize], n_c: usize, tol: f64) -> Result<()> {
    // G Gᵀ accumulated column by column of G.
    let mut gram = Mat::<f64>::zeros(n_c, n_c);
    for (i, e) in evals.iter().enumerate() {
        let _ = offsets[i];
        match &e.constraint_jacobian {
            BlockMatrix::Dense(m) => {
                gram += m * m.transpose();
            }
            BlockMatrix::Sparse(m) => {
                let t = m.transpose();
                for col in 0..t.nrows() {
                    let (rows, vals) = t.row(col);
                    for (&ra, &va) in rows.iter().zip(vals) {
                        for (&rb, &vb) in rows.iter().zip(vals) {
                            gram[(ra, rb)] += va * vb;
                        }
                    }
                }
            }
        }
    }
    let bad = dependent_rows(&gram, tol);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { rows: bad })
    }
}

fn solve_kkt(
    evals: &[BlockEval],
    offsets: &[usize],
    n_z: usize,
    n_c: usize,
    rhs: &[f64],
    opts: &SqpOptions,
) -> Result<Vec<f64>> {
    let all_dense = evals.iter().all(|e| e.jacobian.is_dense());
    let n = n_z + n_c;
    let mut rho = opts.rho_floor;
    let mut last_err = None;
    for _ in 0..=opts.max_regularization_tries {
        let attempt = if all_dense {
            let mut k = Mat::<f64>::zeros(n, n);
            for (i, e) in evals.iter().enumerate() {
                let BlockMatrix::Dense(j) = &e.jacobian else { unreachable!() };
                let h = j.transpose() * j;
                let d = h.nrows();
                let scale = (0..d).fold(0.0f64, |m, a| m.max(h[(a, a)].abs())).max(1.0);
                for a in 0..d {
                    for b in 0..a {
                        let asym = (h[(a, b)] - h[(b, a)]).abs();
                        if asym > 1e-12 * scale {
                            return Err(Error::Factorization(format!(
                                "gauss-newton block {i} not symmetric ({asym:.3e})"
                            )));
                        }
                    }
                }
                let o = offsets[i];
                for a in 0..d {
                    for b in 0..d {
                        k[(o + a, o + b)] = 0.5 * (h[(a, b)] + h[(b, a)]);
                    }
                    k[(o + a, o + a)] += rho;
                }
                let g = e.constraint_jacobian.to_dense();
                for r in 0..n_c {
                    for cidx in 0..g.ncols() {
                        let v = g[(r, cidx)];
                        k[(n_z + r, o + cidx)] = v;
                        k[(o + cidx, n_z + r)] = v;
                    }
                }
            }
            solve_dense_symmetric(&k, rhs)
        } else {
            let mut trip = Vec::new();
            for (i, e) in evals.iter().enumerate() {
                let o = offsets[i];
                match &e.jacobian {
                    BlockMatrix::Sparse(j) => trip.extend(j.gram_triplets(o)),
                    BlockMatrix::Dense(j) => {
                        let h = j.transpose() * j;
                        for a in 0..h.nrows() {
                            for b in 0..h.ncols() {
                                trip.push((o + a, o + b, 0.5 * (h[(a, b)] + h[(b, a)])));
                            }
                        }
                    }
                }
                for a in 0..e.jacobian.ncols() {
                    trip.push((o + a, o + a, rho));
                }
                let mut g = Vec::new();
                e.constraint_jacobian.triplets(0, o, &mut g);
                for (r, cidx, v) in g {
                    trip.push((n_z + r, cidx, v));
                    trip.push((cidx, n_z + r, v));
                }
            }
            solve_sparse(n, &trip, rhs)
        };
        match attempt {
            Ok(x) => return Ok(x),
            Err(e) => {
                last_err = Some(e);
                rho *= 10.0;
            }
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Factorization("kkt".into())))
}
