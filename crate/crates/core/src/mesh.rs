//! Uniform Cartesian meshes in one and two dimensions.
//!
//! Cells are addressed by a single flat index; in 2D the x axis is fastest
//! (`cell = i + nx * j`). Sampling, filtering and the flux stencil all work on
//! whole cells, so the mesh only needs extents, counts and neighbor lookup.

use crate::error::ParamError;

pub const MAX_DIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    cells: [usize; MAX_DIM],
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    widths: [f64; MAX_DIM],
}

impl Mesh {
    /// 1D mesh of `n` uniform cells on `(lo, hi)`.
    pub fn line(n: usize, lo: f64, hi: f64) -> Result<Self, ParamError> {
        Self::new(1, [n, 1], [lo, 0.0], [hi, 1.0])
    }

    /// 2D mesh of `nx * ny` uniform cells on `(lo[0], hi[0]) x (lo[1], hi[1])`.
    pub fn rect(nx: usize, ny: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<Self, ParamError> {
        Self::new(2, [nx, ny], lo, hi)
    }

    fn new(
        dim: usize,
        cells: [usize; MAX_DIM],
        lo: [f64; MAX_DIM],
        hi: [f64; MAX_DIM],
    ) -> Result<Self, ParamError> {
        let mut widths = [0.0; MAX_DIM];
        for a in 0..dim {
            if cells[a] == 0 {
                return Err(ParamError::new(format!("axis {a}: zero cells")));
            }
            let w = (hi[a] - lo[a]) / cells[a] as f64;
            if !(w > 0.0) {
                return Err(ParamError::new(format!(
                    "axis {a}: cell width must be positive, got {w}"
                )));
            }
            widths[a] = w;
        }
        Ok(Mesh {
            dim,
            cells,
            lo,
            hi,
            widths,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_along(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.widths[axis]
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.lo[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.hi[axis]
    }

    /// Volume (1D: length) of one cell; the mesh is uniform.
    pub fn cell_volume(&self) -> f64 {
        self.widths[..self.dim].iter().product()
    }

    /// Flat cell index from per-axis coordinates.
    pub fn cell_at(&self, ij: [usize; MAX_DIM]) -> usize {
        debug_assert!(ij[0] < self.cells[0] && ij[1] < self.cells[1]);
        ij[0] + self.cells[0] * ij[1]
    }

    /// Per-axis coordinates of a flat cell index.
    pub fn coords(&self, cell: usize) -> [usize; MAX_DIM] {
        [cell % self.cells[0], cell / self.cells[0]]
    }

    /// Physical coordinates of a cell center.
    pub fn center(&self, cell: usize) -> [f64; MAX_DIM] {
        let ij = self.coords(cell);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = self.lo[a] + (ij[a] as f64 + 0.5) * self.widths[a];
        }
        x
    }

    /// Neighbor `offset` cells away along `axis`, or `None` past the boundary.
    /// `offset` may be negative.
    pub fn neighbor(&self, cell: usize, axis: usize, offset: isize) -> Option<usize> {
        let ij = self.coords(cell);
        let t = ij[axis] as isize + offset;
        if t < 0 || t >= self.cells[axis] as isize {
            return None;
        }
        let mut ij = ij;
        ij[axis] = t as usize;
        Some(self.cell_at(ij))
    }
}

/// Cell-major flat indexing of `(cell, var)` pairs: all `n_vars` entries of a
/// cell are contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    pub n_cells: usize,
    pub n_vars: usize,
}

impl DofMap {
    pub fn new(n_cells: usize, n_vars: usize) -> Self {
        DofMap { n_cells, n_vars }
    }

    pub fn n_dof(&self) -> usize {
        self.n_cells * self.n_vars
    }

    #[inline]
    pub fn flat(&self, cell: usize, var: usize) -> usize {
        debug_assert!(cell < self.n_cells && var < self.n_vars);
        cell * self.n_vars + var
    }

    #[inline]
    pub fn cell_var(&self, flat: usize) -> (usize, usize) {
        debug_assert!(flat < self.n_dof());
        (flat / self.n_vars, flat % self.n_vars)
    }

    /// Checked variant of [`DofMap::flat`].
    pub fn flat_checked(&self, cell: usize, var: usize) -> Result<usize, crate::error::IndexError> {
        if cell >= self.n_cells {
            return Err(crate::error::IndexError::Cell {
                cell,
                n_cells: self.n_cells,
            });
        }
        if var >= self.n_vars {
            return Err(crate::error::IndexError::Var {
                var,
                n_vars: self.n_vars,
            });
        }
        Ok(self.flat(cell, var))
    }
}
