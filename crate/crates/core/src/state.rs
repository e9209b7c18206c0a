//! Conservative/primitive state storage on a Cartesian mesh.
//!
//! A [`State`] owns the flat solution vector: `n_cells * n_vars` values in
//! cell-major order, so the per-cell view and the flat view alias the same
//! buffer. For the Euler equations `n_vars = dim + 2` with layout
//! `[rho, rho*u_1, .., rho*u_d, rho*E]` per cell.

use std::sync::Arc;

use crate::error::SolveError;
use crate::mesh::{DofMap, Mesh, MAX_DIM};

#[derive(Debug, Clone)]
pub struct State {
    mesh: Arc<Mesh>,
    n_vars: usize,
    values: Vec<f64>,
    time: f64,
}

impl State {
    /// Wraps an existing flat vector; `values.len()` must equal
    /// `mesh.n_cells() * n_vars`.
    pub fn from_flat(mesh: Arc<Mesh>, n_vars: usize, values: Vec<f64>, time: f64) -> Self {
        assert_eq!(values.len(), mesh.n_cells() * n_vars);
        State {
            mesh,
            n_vars,
            values,
            time,
        }
    }

    /// Conservative Euler state (`n_vars = dim + 2`) filled from a primitive
    /// initial-condition closure evaluated at cell centers.
    pub fn from_primitive_ic<F>(mesh: Arc<Mesh>, gamma: f64, ic: F) -> Self
    where
        F: Fn([f64; MAX_DIM]) -> PrimitiveRow,
    {
        let dim = mesh.dim();
        let c = dim + 2;
        let mut values = vec![0.0; mesh.n_cells() * c];
        for cell in 0..mesh.n_cells() {
            let prim = ic(mesh.center(cell));
            primitive_to_conservative_row(&prim, dim, gamma, &mut values[cell * c..(cell + 1) * c]);
        }
        State {
            mesh,
            n_vars: c,
            values,
            time: 0.0,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_dof(&self) -> usize {
        self.values.len()
    }

    pub fn dof_map(&self) -> DofMap {
        DofMap::new(self.mesh.n_cells(), self.n_vars)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn flat(&self) -> &[f64] {
        &self.values
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn cell(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_vars..(cell + 1) * self.n_vars]
    }

    #[inline]
    pub fn cell_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.values[cell * self.n_vars..(cell + 1) * self.n_vars]
    }
}

/// Primitive variables of one cell: `[rho, u_1, .., u_d, P]`.
pub type PrimitiveRow = [f64; MAX_DIM + 2];

/// Primitive variables for every cell, same cell-major layout as [`State`].
#[derive(Debug, Clone)]
pub struct PrimitiveState {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl PrimitiveState {
    pub fn n_vars(&self) -> usize {
        self.dim + 2
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        let c = self.n_vars();
        &self.values[cell * c..(cell + 1) * c]
    }
}

/// Pressure from a conservative row via the ideal gas law.
#[inline]
pub fn pressure(cons: &[f64], dim: usize, gamma: f64) -> f64 {
    let rho = cons[0];
    let mut ke = 0.0;
    for a in 0..dim {
        ke += cons[1 + a] * cons[1 + a];
    }
    (gamma - 1.0) * (cons[dim + 1] - 0.5 * ke / rho)
}

/// Converts one conservative row to primitives; checks positivity.
#[inline]
pub fn conservative_to_primitive_row(
    cons: &[f64],
    dim: usize,
    gamma: f64,
    cell: usize,
    out: &mut [f64],
) -> Result<(), SolveError> {
    let rho = cons[0];
    if !(rho > 0.0) {
        return Err(SolveError::Positivity {
            cell,
            what: "density",
        });
    }
    out[0] = rho;
    for a in 0..dim {
        out[1 + a] = cons[1 + a] / rho;
    }
    let p = pressure(cons, dim, gamma);
    if !(p > 0.0) {
        return Err(SolveError::Positivity {
            cell,
            what: "pressure",
        });
    }
    out[dim + 1] = p;
    Ok(())
}

/// Converts one primitive row `[rho, u.., P]` to conservatives.
#[inline]
pub fn primitive_to_conservative_row(prim: &[f64], dim: usize, gamma: f64, out: &mut [f64]) {
    let rho = prim[0];
    let p = prim[dim + 1];
    out[0] = rho;
    let mut ke = 0.0;
    for a in 0..dim {
        out[1 + a] = rho * prim[1 + a];
        ke += prim[1 + a] * prim[1 + a];
    }
    out[dim + 1] = p / (gamma - 1.0) + 0.5 * rho * ke;
}

/// Whole-state conversion; fails on the first non-admissible cell.
pub fn conservative_to_primitive(state: &State, gamma: f64) -> Result<PrimitiveState, SolveError> {
    let dim = state.mesh().dim();
    let c = state.n_vars();
    let mut values = vec![0.0; state.flat().len()];
    for cell in 0..state.mesh().n_cells() {
        conservative_to_primitive_row(
            state.cell(cell),
            dim,
            gamma,
            cell,
            &mut values[cell * c..(cell + 1) * c],
        )?;
    }
    Ok(PrimitiveState { dim, values })
}

/// Admissibility of one conservative row (`rho > 0`, internal energy > 0).
#[inline]
pub fn row_admissible(cons: &[f64], dim: usize) -> bool {
    let rho = cons[0];
    if !(rho > 0.0) {
        return false;
    }
    let mut ke = 0.0;
    for a in 0..dim {
        ke += cons[1 + a] * cons[1 + a];
    }
    cons[dim + 1] - 0.5 * ke / rho > 0.0
}

/// First non-admissible cell of a flat conservative vector, if any.
pub fn first_inadmissible(flat: &[f64], dim: usize) -> Option<usize> {
    let c = dim + 2;
    flat.chunks_exact(c)
        .position(|row| !row_admissible(row, dim))
}
