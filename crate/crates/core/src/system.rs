//! Semi-discrete system abstraction used by the time integrator.
//!
//! The right-hand side can be evaluated on any subset of cells, reading the
//! state either from a full flat vector or from a compact buffer holding only
//! the sampled cells and their stencil closure. Both paths run the same
//! per-cell arithmetic, so subset rows are bit-identical to full rows.

use crate::error::SolveError;
use crate::mesh::Mesh;

/// Marker for cells absent from a scattered view.
pub const ABSENT: u32 = u32::MAX;

/// Read access to per-cell state rows.
#[derive(Clone, Copy)]
pub enum StateView<'a> {
    /// The whole flat vector, cell-major.
    Full { flat: &'a [f64], c: usize },
    /// Compact buffer over a cell subset; `loc[cell]` is the row position in
    /// `buf`, or [`ABSENT`] when the cell is not part of the view.
    Scatter {
        loc: &'a [u32],
        buf: &'a [f64],
        c: usize,
    },
}

impl<'a> StateView<'a> {
    #[inline]
    pub fn cell(&self, cell: usize) -> &'a [f64] {
        match *self {
            StateView::Full { flat, c } => &flat[cell * c..cell * c + c],
            StateView::Scatter { loc, buf, c } => {
                let pos = loc[cell];
                debug_assert!(pos != ABSENT, "cell {cell} missing from scattered view");
                let p = pos as usize * c;
                &buf[p..p + c]
            }
        }
    }
}

/// Spatial semi-discretization `dq/dt = f*(q, t)`.
pub trait SemiDiscrete: Sync {
    fn mesh(&self) -> &Mesh;

    /// Conserved variables per cell.
    fn n_vars(&self) -> usize;

    /// The RHS of a cell depends only on cells within this many positions
    /// along each axis.
    fn stencil_radius(&self) -> usize;

    /// Evaluates RHS rows for `cells` (all cells when `None`) into `out`,
    /// which holds `cells.len() * n_vars` values in the order of `cells`.
    fn rhs_cells(
        &self,
        t: f64,
        view: StateView,
        cells: Option<&[usize]>,
        out: &mut [f64],
    ) -> Result<(), SolveError>;

    /// Local admissibility of one state row (used by line search and the
    /// filter gate). Defaults to unconditional.
    fn row_admissible(&self, row: &[f64]) -> bool {
        let _ = row;
        true
    }
}
