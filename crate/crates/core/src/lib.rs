//! Training-free adaptive reduced-order modeling of time-dependent
//! conservation laws.
//!
//! The solver advances an implicit finite-volume discretization of the Euler
//! equations and, once a snapshot window exists, replaces most full implicit
//! solves by hybrid steps: a partial solve on dynamically sampled cells,
//! gappy-POD reconstruction everywhere else, and residual-gated Shapiro
//! filtering to keep the mixed snapshot smooth. Sampling adapts every step
//! from the pointwise reconstruction error, so no offline training phase is
//! needed.

pub mod basis;
pub mod bdf;
pub mod driver;
pub mod error;
pub mod euler;
pub mod filter;
pub mod linalg;
pub mod mesh;
pub mod riemann;
pub mod sampling;
pub mod snapshot;
pub mod solve;
pub mod state;
pub mod system;

pub use basis::{gappy_coordinates, odeim_select, pod, reference_state, OdeimPoints, ReducedModel};
pub use bdf::{bdf_function, BdfResidual, BdfScheme};
pub use driver::{
    compute_metrics, relative_l1_error, run_arom, run_hdm, summarize_run, AromConfig, CollectSink,
    FullSolvePeriod, NullSink, Problem, RunError, RunMetrics, RunOutput, RunSummary, SolveKind,
    StepRecord, StepSink,
};
pub use error::{IndexError, ParamError, SolveError};
pub use euler::{
    minmod, muscl_reconstruct, physical_flux, roe_flux, BoundaryCondition, BoundarySpec, EulerFv,
    EulerOptions, GasModel, LimitVariables, SlopeMode, StencilSpec,
};
pub use filter::{
    residual_gated_filter, shapiro_filter_line, CellResidual, FilterOrder, FilterReport,
    FilterSettings,
};
pub use mesh::{DofMap, Mesh};
pub use riemann::{exact_riemann_solution, solve_riemann, RiemannSolution, RiemannState};
pub use sampling::{
    assemble_sampling, pointwise_error, select_rre_points, RreSettings, SamplingSets,
};
pub use solve::{
    full_solve, newton_solve, partial_solve, LinearSolverKind, NewtonReport, NewtonSettings,
    NewtonWorkspace, PartialOutcome, SubiterationSettings, SystemShape,
};
pub use state::{conservative_to_primitive, PrimitiveRow, PrimitiveState, State};
pub use system::{SemiDiscrete, StateView};
