//! Centered finite-difference discretization of the steady 2D Burgers
//! equations with Dirichlet data taken from the Cole–Hopf exact solution.
//!
//! Unknowns are the interior nodal values only. Interior nodes are numbered
//! x-fastest, `k = (j-1)(nx-2) + (i-1)`; the state is `[u; v]`, so `u` at node
//! `k` sits at position `k` and `v` at `n_nodes + k`. Residual rows use the
//! same numbering.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::CsrMatrix;
use crate::newton::{self, NewtonOptions, NewtonReport, NonlinearSystem};
use crate::stencil::{Coeffs, Component, RowStencil, Slot, StencilSystem};

/// Uniform tensor grid including boundary nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points per direction, got {nx}x{ny}"
            )));
        }
        if !(x1 > x0) || !(y1 > y0) || !x0.is_finite() || !x1.is_finite() || !y0.is_finite() || !y1.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "empty or non-finite domain [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Self { nx, ny, x0, x1, y0, y1 })
    }

    /// Grid on the reference domain `[-1, 1] × [0, 0.05]`.
    pub fn reference(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, (-1.0, 1.0), (0.0, 0.05))
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.nx, self.ny, (self.x0, self.x1), (self.y0, self.y1)).map(|_| ())
    }

    pub fn hx(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y0 + j as f64 * self.hy()
    }

    /// Interior nodes per direction.
    pub fn interior_dims(&self) -> (usize, usize) {
        (self.nx - 2, self.ny - 2)
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx - 2) * (self.ny - 2)
    }

    /// `N_x`, the number of unknowns.
    pub fn n_unknowns(&self) -> usize {
        2 * self.n_nodes()
    }

    /// Interior node number of grid point `(i, j)`, both in `1..n-1`.
    pub fn node(&self, i: usize, j: usize) -> usize {
        (j - 1) * (self.nx - 2) + (i - 1)
    }

    /// Grid point `(i, j)` of an interior node number.
    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % (self.nx - 2) + 1, k / (self.nx - 2) + 1)
    }
}

/// Shock-position `a`, steepness `lambda`, viscosity `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub a: f64,
    pub lambda: f64,
    pub nu: f64,
}

impl BurgersParams {
    pub fn new(a: f64, lambda: f64, nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !(a >= 1.0) || !(lambda > 0.0) || !a.is_finite() || !lambda.is_finite() || !nu.is_finite() {
            return Err(Error::InvalidParams(format!(
                "need nu > 0, a >= 1, lambda > 0; got a={a}, lambda={lambda}, nu={nu}"
            )));
        }
        Ok(Self { a, lambda, nu })
    }
}

/// ψ and its analytic partial derivatives `(ψ, ψ_x, ψ_y)`.
pub fn psi(x: f64, y: f64, p: &BurgersParams) -> (f64, f64, f64) {
    let t = p.lambda * (x - 1.0);
    let (c, s) = ((p.lambda * y).cos(), (p.lambda * y).sin());
    let psi = p.a * (1.0 + x) + 2.0 * t.cosh() * c;
    let psi_x = p.a + 2.0 * p.lambda * t.sinh() * c;
    let psi_y = -2.0 * p.lambda * t.cosh() * s;
    (psi, psi_x, psi_y)
}

/// Exact velocity `(u, v) = −2ν ∇ψ / ψ`.
pub fn exact_solution(x: f64, y: f64, p: &BurgersParams) -> (f64, f64) {
    let (f, fx, fy) = psi(x, y, p);
    (-2.0 * p.nu * fx / f, -2.0 * p.nu * fy / f)
}

/// Interior state `[u; v]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FomState {
    data: Vec<f64>,
}

impl FomState {
    pub fn new(data: Vec<f64>) -> Self {
        assert!(data.len() % 2 == 0, "state holds two components");
        Self { data }
    }

    pub fn u(&self) -> &[f64] {
        &self.data[..self.data.len() / 2]
    }

    pub fn v(&self) -> &[f64] {
        &self.data[self.data.len() / 2..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// The discretized monolithic problem at one parameter.
#[derive(Clone, Debug)]
pub struct FomProblem {
    grid: Grid,
    params: BurgersParams,
    system: StencilSystem,
}

/// Builds the residual rows for `grid` with Dirichlet data from the exact
/// solution at `params`.
pub fn build_problem(grid: &Grid, params: &BurgersParams) -> Result<FomProblem> {
    grid.validate()?;
    let (mx, my) = grid.interior_dims();
    let nn = grid.n_nodes();
    let slot = |i: usize, j: usize, comp: Component| -> Slot {
        if i == 0 || j == 0 || i == grid.nx - 1 || j == grid.ny - 1 {
            let (u, v) = exact_solution(grid.x(i), grid.y(j), params);
            Slot::Fixed(if comp == Component::U { u } else { v })
        } else {
            let k = grid.node(i, j);
            Slot::State(if comp == Component::U { k } else { nn + k })
        }
    };
    let mut rows = Vec::with_capacity(2 * nn);
    for comp in [Component::U, Component::V] {
        for j in 1..=my {
            for i in 1..=mx {
                let pts = [(i, j), (i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)];
                rows.push(RowStencil {
                    component: comp,
                    u: pts.map(|(a, b)| slot(a, b, Component::U)),
                    v: pts.map(|(a, b)| slot(a, b, Component::V)),
                });
            }
        }
    }
    let coeffs = Coeffs::new(grid.hx(), grid.hy(), params.nu);
    Ok(FomProblem {
        grid: *grid,
        params: *params,
        system: StencilSystem::new(coeffs, rows, grid.n_unknowns()),
    })
}

impl FomProblem {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &BurgersParams {
        &self.params
    }

    pub fn n_unknowns(&self) -> usize {
        self.grid.n_unknowns()
    }

    pub fn system(&self) -> &StencilSystem {
        &self.system
    }

    pub fn residual(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_len("fom residual state", self.n_unknowns(), state.len())?;
        Ok(self.system.residual(state))
    }

    pub fn jacobian(&self, state: &[f64]) -> Result<CsrMatrix> {
        check_len("fom jacobian state", self.n_unknowns(), state.len())?;
        Ok(self.system.jacobian(state))
    }

    /// Exact solution sampled at the interior nodes.
    pub fn exact_state(&self) -> FomState {
        let nn = self.grid.n_nodes();
        let mut data = vec![0.0; 2 * nn];
        for k in 0..nn {
            let (i, j) = self.grid.node_ij(k);
            let (u, v) = exact_solution(self.grid.x(i), self.grid.y(j), &self.params);
            data[k] = u;
            data[nn + k] = v;
        }
        FomState::new(data)
    }
}

impl NonlinearSystem for FomProblem {
    fn dim(&self) -> usize {
        self.n_unknowns()
    }

    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.system.residual(x)
    }

    fn jacobian(&self, x: &[f64]) -> CsrMatrix {
        self.system.jacobian(x)
    }
}

/// Newton solve of the monolithic system.
pub fn solve_fom(problem: &FomProblem, init: &[f64], opts: &NewtonOptions) -> Result<(FomState, NewtonReport)> {
    solve_fom_observed(problem, init, opts, &mut |_, _| {})
}

/// As [`solve_fom`], handing every non-converged iterate and its residual to
/// `observer`.
pub fn solve_fom_observed(
    problem: &FomProblem,
    init: &[f64],
    opts: &NewtonOptions,
    observer: &mut dyn FnMut(&[f64], &[f64]),
) -> Result<(FomState, NewtonReport)> {
    let (x, report) = newton::solve(problem, init, opts, observer)?;
    Ok((FomState::new(x), report))
}
