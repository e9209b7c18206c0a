//! Error types shared across the solver stack.

use thiserror::Error;

/// Failures raised while evaluating or solving the discrete system.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    /// Density or internal energy dropped to a non-physical value.
    #[error("non-physical state in cell {cell}: {what}")]
    Positivity { cell: usize, what: &'static str },

    /// The Roe-averaged state at an interface is inadmissible.
    #[error("inadmissible Roe average at the face between cells {left} and {right} (axis {axis})")]
    RoeAverage {
        left: usize,
        right: usize,
        axis: usize,
    },

    /// Newton failed to bring the residual below tolerance.
    #[error("Newton did not converge after {iterations} iterations (|R|_inf = {residual_norm:.3e})")]
    NewtonDiverged {
        residual_norm: f64,
        iterations: usize,
    },

    /// The (pivoted) linear solve hit a singular matrix.
    #[error("singular linear system in Newton update")]
    SingularMatrix,

    /// GMRES stalled before reaching the requested tolerance.
    #[error("linear solver stalled at relative residual {relative_residual:.3e}")]
    LinearStall { relative_residual: f64 },

    /// The sampled basis P^T Phi lost column rank; points must be re-selected.
    #[error("sampled basis is rank deficient (rank {rank} < {needed})")]
    GappyRankDeficient { rank: usize, needed: usize },

    /// A full solve aborted the run.
    #[error("full solve failed at step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<SolveError>,
    },
}

/// Invalid mesh/state indexing.
#[derive(Debug, Clone, Error)]
pub enum IndexError {
    #[error("cell index {cell} out of range (n_cells = {n_cells})")]
    Cell { cell: usize, n_cells: usize },
    #[error("variable index {var} out of range (n_vars = {n_vars})")]
    Var { var: usize, n_vars: usize },
    #[error("flat index {flat} out of range (n_dof = {n_dof})")]
    Flat { flat: usize, n_dof: usize },
}

/// Invalid run or model parameters.
#[derive(Debug, Clone, Error)]
#[error("{0}")]
pub struct ParamError(pub String);

impl ParamError {
    pub fn new(msg: impl Into<String>) -> Self {
        ParamError(msg.into())
    }
}
