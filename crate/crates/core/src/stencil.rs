//! Row-wise five-point stencil kernels for the steady Burgers residual.
//!
//! Every residual row is described by a [`RowStencil`]: the slots of the
//! `u` and `v` values at the node and its four neighbours, each either a
//! position in some state vector or a fixed Dirichlet value. The same kernel
//! therefore serves the monolithic system, subdomain systems (slots mapped to
//! local `[x_Ω; x_Γ]` positions) and hyper-reduced systems (slots mapped to a
//! compact vector of only the required entries).

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::linalg::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Slot {
    State(usize),
    Fixed(f64),
}

impl Slot {
    #[inline]
    fn value(self, y: &[f64]) -> f64 {
        match self {
            Slot::State(k) => y[k],
            Slot::Fixed(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// Neighbour order inside a stencil.
pub const P: usize = 0;
pub const E: usize = 1;
pub const W: usize = 2;
pub const N: usize = 3;
pub const S: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowStencil {
    pub component: Component,
    pub u: [Slot; 5],
    pub v: [Slot; 5],
}

impl RowStencil {
    fn own(&self) -> &[Slot; 5] {
        match self.component {
            Component::U => &self.u,
            Component::V => &self.v,
        }
    }

    /// State positions read by this row.
    pub fn state_slots(&self) -> impl Iterator<Item = usize> + '_ {
        let own = self.own();
        let cross = match self.component {
            Component::U => self.v[P],
            Component::V => self.u[P],
        };
        own.iter()
            .copied()
            .chain(std::iter::once(cross))
            .filter_map(|s| match s {
                Slot::State(k) => Some(k),
                Slot::Fixed(_) => None,
            })
    }

    fn map_slots(&self, f: &impl Fn(usize) -> usize) -> RowStencil {
        let m = |s: Slot| match s {
            Slot::State(k) => Slot::State(f(k)),
            fixed => fixed,
        };
        RowStencil {
            component: self.component,
            u: self.u.map(m),
            v: self.v.map(m),
        }
    }
}

/// Finite-difference coefficients of the uniform grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub inv_2hx: f64,
    pub inv_2hy: f64,
    pub nu_hx2: f64,
    pub nu_hy2: f64,
}

impl Coeffs {
    pub fn new(hx: f64, hy: f64, nu: f64) -> Self {
        Self {
            inv_2hx: 0.5 / hx,
            inv_2hy: 0.5 / hy,
            nu_hx2: nu / (hx * hx),
            nu_hy2: nu / (hy * hy),
        }
    }

    /// `u·∂a/∂x + v·∂a/∂y − ν·Δa` at one node, `a` being the row's component.
    #[inline]
    pub fn row_residual(&self, row: &RowStencil, y: &[f64]) -> f64 {
        let a = row.own();
        let up = row.u[P].value(y);
        let vp = row.v[P].value(y);
        let ap = a[P].value(y);
        let ae = a[E].value(y);
        let aw = a[W].value(y);
        let an = a[N].value(y);
        let as_ = a[S].value(y);
        up * (ae - aw) * self.inv_2hx + vp * (an - as_) * self.inv_2hy
            - self.nu_hx2 * (ae - 2.0 * ap + aw)
            - self.nu_hy2 * (an - 2.0 * ap + as_)
    }

    /// Nonzero partial derivatives of one row, as (state position, value).
    /// Fixed slots are skipped; positions are distinct.
    #[inline]
    pub fn row_jacobian(&self, row: &RowStencil, y: &[f64], mut push: impl FnMut(usize, f64)) {
        let a = row.own();
        let up = row.u[P].value(y);
        let vp = row.v[P].value(y);
        let ae = a[E].value(y);
        let aw = a[W].value(y);
        let an = a[N].value(y);
        let as_ = a[S].value(y);
        let mut diag = 2.0 * (self.nu_hx2 + self.nu_hy2);
        let cross;
        match row.component {
            Component::U => {
                diag += (ae - aw) * self.inv_2hx;
                cross = (row.v[P], (an - as_) * self.inv_2hy);
            }
            Component::V => {
                diag += (an - as_) * self.inv_2hy;
                cross = (row.u[P], (ae - aw) * self.inv_2hx);
            }
        }
        let entries = [
            (a[P], diag),
            (a[E], up * self.inv_2hx - self.nu_hx2),
            (a[W], -up * self.inv_2hx - self.nu_hx2),
            (a[N], vp * self.inv_2hy - self.nu_hy2),
            (a[S], -vp * self.inv_2hy - self.nu_hy2),
            cross,
        ];
        for (slot, val) in entries {
            if let Slot::State(k) = slot {
                push(k, val);
            }
        }
    }
}

/// A set of residual rows over a state vector of length `n_state`.
#[derive(Debug)]
pub struct StencilSystem {
    coeffs: Coeffs,
    rows: Vec<RowStencil>,
    n_state: usize,
    row_evals: AtomicUsize,
}

impl Clone for StencilSystem {
    fn clone(&self) -> Self {
        Self {
            coeffs: self.coeffs,
            rows: self.rows.clone(),
            n_state: self.n_state,
            row_evals: AtomicUsize::new(0),
        }
    }
}

impl StencilSystem {
    pub fn new(coeffs: Coeffs, rows: Vec<RowStencil>, n_state: usize) -> Self {
        debug_assert!(rows.iter().all(|r| r.state_slots().all(|k| k < n_state)));
        Self {
            coeffs,
            rows,
            n_state,
            row_evals: AtomicUsize::new(0),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn rows(&self) -> &[RowStencil] {
        &self.rows
    }

    pub fn coeffs(&self) -> Coeffs {
        self.coeffs
    }

    /// Total number of single-row residual evaluations performed so far.
    pub fn row_evaluations(&self) -> usize {
        self.row_evals.load(Ordering::Relaxed)
    }

    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_state, "state length");
        self.row_evals.fetch_add(self.rows.len(), Ordering::Relaxed);
        self.rows
            .iter()
            .map(|r| self.coeffs.row_residual(r, y))
            .collect()
    }

    pub fn jacobian(&self, y: &[f64]) -> CsrMatrix {
        assert_eq!(y.len(), self.n_state, "state length");
        let mut row_ptr = Vec::with_capacity(self.rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.rows.len() * 6);
        let mut values = Vec::with_capacity(self.rows.len() * 6);
        let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(6);
        for r in &self.rows {
            scratch.clear();
            self.coeffs.row_jacobian(r, y, |k, v| scratch.push((k, v)));
            scratch.sort_by_key(|e| e.0);
            for &(k, v) in &scratch {
                col_idx.push(k);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix::from_raw(self.rows.len(), self.n_state, row_ptr, col_idx, values)
    }

    /// Restricts to the given rows and renumbers the state so that only the
    /// entries those rows read remain. Returns the compact system and, for
    /// each compact state position, the original position (sorted).
    pub fn select_rows(&self, rows: &[usize]) -> (StencilSystem, Vec<usize>) {
        let mut needed: Vec<usize> = rows
            .iter()
            .flat_map(|&r| self.rows[r].state_slots().collect::<Vec<_>>())
            .collect();
        needed.sort_unstable();
        needed.dedup();
        let mut position = vec![usize::MAX; self.n_state];
        for (i, &k) in needed.iter().enumerate() {
            position[k] = i;
        }
        let selected = rows
            .iter()
            .map(|&r| self.rows[r].map_slots(&|k| position[k]))
            .collect();
        (
            StencilSystem::new(self.coeffs, selected, needed.len()),
            needed,
        )
    }

    /// Renumbers the state through `map` (old position → new position) into
    /// a state of length `n_state`, keeping only the listed rows.
    pub fn remap(&self, rows: &[usize], map: &impl Fn(usize) -> usize, n_state: usize) -> StencilSystem {
        let selected = rows.iter().map(|&r| self.rows[r].map_slots(map)).collect();
        StencilSystem::new(self.coeffs, selected, n_state)
    }
}
