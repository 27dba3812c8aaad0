//! Damped Newton iteration for square sparse nonlinear systems.

use crate::error::{check_len, Error, Result};
use crate::linalg::{norm2, solve_sparse, CsrMatrix};

/// A square nonlinear system `r(x) = 0` with a sparse Jacobian.
pub trait NonlinearSystem: Sync {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> CsrMatrix;
}

#[derive(Clone, Debug)]
pub struct NewtonOptions {
    /// Absolute tolerance on ‖r‖₂. `None` means `1e-8·sqrt(dim)`.
    pub abs_tol: Option<f64>,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            abs_tol: None,
            max_iter: 20,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 30,
        }
    }
}

impl NewtonOptions {
    pub fn tolerance(&self, dim: usize) -> f64 {
        self.abs_tol.unwrap_or(1e-8 * (dim as f64).sqrt())
    }
}

#[derive(Clone, Debug, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    /// ‖r‖₂ at every iterate, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub tolerance: f64,
}

/// Solves `r(x) = 0` from `x0`. `observer` sees every iterate that has not
/// yet converged together with its residual.
pub fn solve<S: NonlinearSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    opts: &NewtonOptions,
    observer: &mut dyn FnMut(&[f64], &[f64]),
) -> Result<(Vec<f64>, NewtonReport)> {
    let n = system.dim();
    check_len("newton initial guess", n, x0.len())?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("newton initial guess"));
    }
    let tol = opts.tolerance(n);
    let mut x = x0.to_vec();
    let mut r = system.residual(&x);
    let mut rnorm = norm2(&r);
    let mut report = NewtonReport {
        iterations: 0,
        residual_history: vec![rnorm],
        tolerance: tol,
    };
    loop {
        if rnorm <= tol {
            return Ok((x, report));
        }
        observer(&x, &r);
        if report.iterations >= opts.max_iter {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: rnorm,
            });
        }
        let jac = system.jacobian(&x);
        let trip: Vec<_> = jac.triplets().collect();
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = solve_sparse(n, &trip, &rhs)?;

        let merit = 0.5 * rnorm * rnorm;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            let rt = system.residual(&trial);
            let nt = norm2(&rt);
            // Newton direction: d/dα ½‖r‖² = −‖r‖².
            if nt.is_finite() && 0.5 * nt * nt <= merit * (1.0 - 2.0 * opts.c1 * alpha) {
                accepted = Some((trial, rt, nt));
                break;
            }
            alpha *= opts.backtrack;
        }
        let Some((xn, rn, nn)) = accepted else {
            return Err(Error::LineSearch {
                iteration: report.iterations,
                merit,
            });
        };
        x = xn;
        r = rn;
        rnorm = nn;
        report.iterations += 1;
        report.residual_history.push(rnorm);
    }
}
