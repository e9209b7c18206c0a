//! Run orchestration: the pure high-dimensional reference runner and the
//! adaptive runner that interleaves full solves, partial solves on sampled
//! cells, gappy reconstruction elsewhere, and residual-gated filtering.
//!
//! Schedule per step `k = 1..N_t`: full solve when `k+1 <= w` or
//! `k % z == 0`; otherwise a hybrid step with the model built at the last
//! refresh. After a step, when `k >= w-1` and `(k+1) % z != 0`, the window
//! basis, sampling points and reference state are rebuilt for the next step.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::basis::{odeim_select, pod, GappySolver, ReducedModel};
use crate::bdf::{BdfResidual, BdfScheme};
use crate::error::{ParamError, SolveError};
use crate::euler::{BoundarySpec, EulerFv, EulerOptions, GasModel, StencilSpec};
use crate::filter::{residual_gated_filter, CellResidual, FilterReport, FilterSettings};
use crate::linalg::norm_inf;
use crate::mesh::{Mesh, MAX_DIM};
use crate::sampling::{
    assemble_sampling, pointwise_error, select_rre_points, RreSettings, SamplingSets,
};
use crate::solve::{
    full_solve, partial_solve, NewtonReport, NewtonSettings, NewtonWorkspace,
    SubiterationSettings, SystemShape,
};
use crate::state::{first_inadmissible, PrimitiveRow, State};
use crate::system::SemiDiscrete;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ParamError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Full-solve cadence: every `z` steps, or warmup-only (`z = inf`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FullSolvePeriod {
    Every(usize),
    WarmupOnly,
}

impl FullSolvePeriod {
    pub fn divides(self, k: usize) -> bool {
        match self {
            FullSolvePeriod::Every(z) => k % z == 0,
            FullSolvePeriod::WarmupOnly => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AromConfig {
    /// Snapshot window width `w`.
    pub window: usize,
    /// POD modes `m`.
    pub modes: usize,
    /// Full-solve period `z`.
    pub full_period: FullSolvePeriod,
    /// RRE threshold.
    pub delta: f64,
    /// ODEIM cell count `n_p`.
    pub odeim_points: usize,
    pub sub: SubiterationSettings,
    pub filter: FilterSettings,
    pub newton: NewtonSettings,
    pub bdf_order: usize,
    pub n_steps: usize,
    pub t_final: f64,
}

impl AromConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.bdf_order != 1 && self.bdf_order != 2 {
            return Err(ParamError::new("bdf_order must be 1 or 2"));
        }
        if self.window < self.bdf_order + 1 {
            return Err(ParamError::new(format!(
                "window w = {} must be at least bdf_order + 1 = {}",
                self.window,
                self.bdf_order + 1
            )));
        }
        if self.modes > self.window {
            return Err(ParamError::new(format!(
                "modes m = {} must satisfy m <= w = {}",
                self.modes, self.window
            )));
        }
        if let FullSolvePeriod::Every(z) = self.full_period {
            if z < 1 {
                return Err(ParamError::new("z must be at least 1"));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(ParamError::new(format!(
                "delta = {} must lie in (0, 1]",
                self.delta
            )));
        }
        if self.odeim_points < self.modes {
            return Err(ParamError::new(format!(
                "odeim_points n_p = {} must be at least m = {}",
                self.odeim_points, self.modes
            )));
        }
        if self.n_steps < self.window {
            return Err(ParamError::new(format!(
                "n_steps N_t = {} must be at least w = {}",
                self.n_steps, self.window
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(ParamError::new("t_final must be positive"));
        }
        if !(self.sub.eps_y > 0.0) || self.sub.j_max < 1 {
            return Err(ParamError::new("subiteration settings invalid"));
        }
        self.filter.validate()?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }
}

/// A concrete experiment: mesh, gas, boundaries and the primitive IC.
pub struct Problem {
    pub name: String,
    pub mesh: Arc<Mesh>,
    pub gas: GasModel,
    pub boundary: BoundarySpec,
    pub euler: EulerOptions,
    pub ic: Box<dyn Fn([f64; MAX_DIM]) -> PrimitiveRow + Sync>,
}

impl Problem {
    pub fn system(&self) -> EulerFv {
        EulerFv::new(
            self.mesh.clone(),
            self.gas,
            self.boundary,
            self.ic.as_ref(),
            self.euler,
        )
    }

    pub fn initial_state(&self) -> State {
        State::from_primitive_ic(self.mesh.clone(), self.gas.gamma, self.ic.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveKind {
    Full { escalated: bool },
    Hybrid,
}

impl SolveKind {
    pub fn is_hybrid(self) -> bool {
        matches!(self, SolveKind::Hybrid)
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub kind: SolveKind,
    /// Cells whose values came from an HDM solve this step.
    pub n_gamma: usize,
    /// ODEIM cells active this step (0 on full steps).
    pub n_p: usize,
    /// RRE cells active this step (0 on full steps).
    pub n_g: usize,
    /// Subiterations used (0 on full steps).
    pub subiterations: usize,
    pub newton_iterations: usize,
    pub jacobian_assemblies: usize,
    /// Compute time of the step (solve + model upkeep, no I/O or metrics).
    pub solve_seconds: f64,
    pub filter: Option<FilterReport>,
}

/// Streaming observer; work done here is excluded from solve timings.
pub trait StepSink {
    fn on_initial(&mut self, _flat: &[f64], _time: f64) {}
    fn on_step(
        &mut self,
        _record: &StepRecord,
        _flat: &[f64],
        _time: f64,
        _sampling: Option<&SamplingSets>,
        _singular_values: Option<&[f64]>,
    ) {
    }
}

/// Sink that ignores everything.
pub struct NullSink;

impl StepSink for NullSink {}

/// Sink that keeps every snapshot in memory (index 0 is the initial state).
#[derive(Default)]
pub struct CollectSink {
    pub snapshots: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl StepSink for CollectSink {
    fn on_initial(&mut self, flat: &[f64], time: f64) {
        self.snapshots.push(flat.to_vec());
        self.times.push(time);
    }

    fn on_step(
        &mut self,
        _record: &StepRecord,
        flat: &[f64],
        time: f64,
        _sampling: Option<&SamplingSets>,
        _singular_values: Option<&[f64]>,
    ) {
        self.snapshots.push(flat.to_vec());
        self.times.push(time);
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    /// Sum of per-step compute times.
    pub solve_seconds: f64,
    pub escalations: usize,
}

impl RunOutput {
    pub fn mean_step_seconds(&self) -> f64 {
        self.solve_seconds / self.records.len().max(1) as f64
    }
}

/// Per-cell infinity norm of the step residual, with a per-cell fallback so
/// non-evaluable cells read as infinite instead of aborting.
struct StepResidual<'a, S: SemiDiscrete> {
    res: BdfResidual<'a, S>,
    sys: &'a S,
    rows: Vec<f64>,
    row1: Vec<f64>,
}

impl<'a, S: SemiDiscrete> StepResidual<'a, S> {
    fn new(sys: &'a S, t: f64, dt_beta: f64, shift: Vec<f64>) -> Self {
        StepResidual {
            res: BdfResidual::full(sys, t, dt_beta, shift),
            sys,
            rows: Vec::new(),
            row1: vec![0.0; sys.n_vars()],
        }
    }
}

impl<'a, S: SemiDiscrete> CellResidual for StepResidual<'a, S> {
    fn n_cells(&self) -> usize {
        self.sys.mesh().n_cells()
    }

    fn residual_cells(&mut self, flat: &[f64], cells: &[usize], out: &mut [f64]) {
        let c = self.sys.n_vars();
        self.rows.resize(cells.len() * c, 0.0);
        match self.res.eval(flat, Some(cells), &mut self.rows) {
            Ok(()) => {
                for (slot, o) in out.iter_mut().enumerate().take(cells.len()) {
                    *o = norm_inf(&self.rows[slot * c..(slot + 1) * c]);
                }
            }
            Err(_) => {
                // Rare: isolate the non-evaluable cells one by one.
                for (slot, &cell) in cells.iter().enumerate() {
                    out[slot] = match self.res.eval(flat, Some(&[cell]), &mut self.row1) {
                        Ok(()) => norm_inf(&self.row1),
                        Err(_) => f64::INFINITY,
                    };
                }
            }
        }
    }

    fn row_admissible(&self, row: &[f64]) -> bool {
        self.sys.row_admissible(row)
    }

    fn stencil_radius(&self) -> usize {
        self.sys.stencil_radius()
    }
}

/// The reduced model and sampling sets active for one upcoming step.
struct ActiveModel {
    model: ReducedModel,
    gappy: GappySolver,
    sampling: SamplingSets,
}

/// Shared stepping state; both runners drive their full solves through this
/// so a degenerate schedule (`z = 1`) reproduces the reference run bit for
/// bit.
struct TimeLoop<'a> {
    sys: &'a EulerFv,
    scheme_startup: BdfScheme,
    scheme_main: BdfScheme,
    bdf_order: usize,
    full_shape: SystemShape,
    full_ws: NewtonWorkspace,
    /// Last `w` snapshots, oldest first.
    window: VecDeque<Vec<f64>>,
    window_cap: usize,
}

impl<'a> TimeLoop<'a> {
    fn new(sys: &'a EulerFv, config: &AromConfig) -> Self {
        let dt = config.dt();
        TimeLoop {
            sys,
            scheme_startup: BdfScheme::new(1, dt).expect("validated"),
            scheme_main: BdfScheme::new(config.bdf_order, dt).expect("validated"),
            bdf_order: config.bdf_order,
            full_shape: SystemShape::full(sys, config.newton.linear),
            full_ws: NewtonWorkspace::new(),
            window: VecDeque::new(),
            window_cap: config.window,
        }
    }

    fn scheme_for(&self, k: usize) -> &BdfScheme {
        // Too little history for the main scheme during startup (k = 1 with
        // BDF2 has a single prior state).
        if k < self.bdf_order {
            &self.scheme_startup
        } else {
            &self.scheme_main
        }
    }

    /// BDF history slices for step `k`, oldest first.
    fn history(&self, k: usize) -> Vec<&[f64]> {
        let s = self.scheme_for(k).order();
        let len = self.window.len();
        (0..s)
            .map(|j| self.window[len - s + j].as_slice())
            .collect()
    }

    fn latest(&self) -> &[f64] {
        self.window.back().expect("window seeded with gamma_0")
    }

    fn push(&mut self, snap: Vec<f64>) {
        self.window.push_back(snap);
        if self.window.len() > self.window_cap {
            self.window.pop_front();
        }
    }

    fn advance_full(
        &mut self,
        k: usize,
        t_k: f64,
        settings: &NewtonSettings,
    ) -> Result<(Vec<f64>, NewtonReport), SolveError> {
        let scheme = if k < self.bdf_order {
            &self.scheme_startup
        } else {
            &self.scheme_main
        };
        let s = scheme.order();
        let len = self.window.len();
        let history: Vec<&[f64]> = (0..s)
            .map(|j| self.window[len - s + j].as_slice())
            .collect();
        let guess = self.window[len - 1].clone();
        full_solve(
            self.sys,
            scheme,
            t_k,
            &history,
            &guess,
            settings,
            &self.full_shape,
            &mut self.full_ws,
        )
    }
}

/// Reference runner: every step is a full solve.
pub fn run_hdm(
    config: &AromConfig,
    problem: &Problem,
    sink: &mut dyn StepSink,
) -> Result<RunOutput, RunError> {
    config.validate()?;
    let sys = problem.system();
    let mut tl = TimeLoop::new(&sys, config);
    let dt = config.dt();
    let n_cells = problem.mesh.n_cells();

    let gamma0 = problem.initial_state().into_flat();
    sink.on_initial(&gamma0, 0.0);
    tl.push(gamma0);

    let mut records = Vec::with_capacity(config.n_steps);
    let mut solve_seconds = 0.0;

    for k in 1..=config.n_steps {
        let t_k = k as f64 * dt;
        let started = Instant::now();
        let (snap, report) = tl
            .advance_full(k, t_k, &config.newton)
            .map_err(|e| step_failed(k, e))?;
        let secs = started.elapsed().as_secs_f64();
        solve_seconds += secs;

        let record = StepRecord {
            k,
            kind: SolveKind::Full { escalated: false },
            n_gamma: n_cells,
            n_p: 0,
            n_g: 0,
            subiterations: 0,
            newton_iterations: report.iterations,
            jacobian_assemblies: report.assemblies,
            solve_seconds: secs,
            filter: None,
        };
        sink.on_step(&record, &snap, t_k, None, None);
        records.push(record);
        tl.push(snap);
    }

    Ok(RunOutput {
        records,
        solve_seconds,
        escalations: 0,
    })
}

/// Adaptive runner implementing the hybrid-snapshot schedule.
pub fn run_arom(
    config: &AromConfig,
    problem: &Problem,
    sink: &mut dyn StepSink,
) -> Result<RunOutput, RunError> {
    config.validate()?;
    let mesh = problem.mesh.clone();
    let n_cells = mesh.n_cells();
    if config.odeim_points > n_cells {
        return Err(ParamError::new(format!(
            "odeim_points n_p = {} exceeds the cell count {}",
            config.odeim_points, n_cells
        ))
        .into());
    }

    let sys = problem.system();
    let c = sys.n_vars();
    let mut tl = TimeLoop::new(&sys, config);
    let dt = config.dt();
    let w = config.window;
    let z = config.full_period;
    let stencil = StencilSpec {
        radius: sys.stencil_radius(),
    };

    let gamma0 = problem.initial_state().into_flat();
    sink.on_initial(&gamma0, 0.0);
    tl.push(gamma0);

    let mut psi: Option<DVector<f64>> = None;
    let mut active: Option<ActiveModel> = None;

    let mut records = Vec::with_capacity(config.n_steps);
    let mut solve_seconds = 0.0;
    let mut escalations = 0usize;

    for k in 1..=config.n_steps {
        let t_k = k as f64 * dt;
        let started = Instant::now();

        let full_due = (k + 1 <= w) || z.divides(k);
        let mut used_sampling: Option<SamplingSets> = None;
        let mut filter_report: Option<FilterReport> = None;
        let mut hybrid_y: Option<DVector<f64>> = None;

        let (snap, kind, sub_iters, newton_iters, assemblies);
        if full_due {
            let (s, report) = tl
                .advance_full(k, t_k, &config.newton)
                .map_err(|e| step_failed(k, e))?;
            snap = s;
            kind = SolveKind::Full { escalated: false };
            sub_iters = 0;
            newton_iters = report.iterations;
            assemblies = report.assemblies;
        } else {
            let attempt = match &active {
                Some(am) => hybrid_step(&sys, &tl, config, k, t_k, am, &mesh, c),
                None => Err(SolveError::GappyRankDeficient { rank: 0, needed: 0 }),
            };
            match attempt {
                Ok(out) => {
                    let am = active.as_ref().expect("hybrid step used a model");
                    used_sampling = Some(am.sampling.clone());
                    filter_report = Some(out.filter);
                    hybrid_y = Some(out.y);
                    snap = out.snap;
                    kind = SolveKind::Hybrid;
                    sub_iters = out.subiterations;
                    newton_iters = out.newton_iterations;
                    assemblies = out.assemblies;
                }
                Err(_) => {
                    // Partial solve failed: escalate this step to a full
                    // solve and record it as such.
                    escalations += 1;
                    let (s, report) = tl
                        .advance_full(k, t_k, &config.newton)
                        .map_err(|e| step_failed(k, e))?;
                    snap = s;
                    kind = SolveKind::Full { escalated: true };
                    sub_iters = 0;
                    newton_iters = report.iterations;
                    assemblies = report.assemblies;
                }
            }
        }

        tl.push(snap);

        // Reference-state bootstrap once w snapshots exist.
        if k == w - 1 {
            psi = Some(window_mean(&tl.window));
        }

        // Refresh the model for step k+1 unless k+1 is a scheduled full
        // solve (its basis would be discarded unused).
        let mut refresh_svals: Option<Vec<f64>> = None;
        if k >= w - 1 && !z.divides(k + 1) {
            let psi_now = psi.as_ref().expect("bootstrapped at k = w-1").clone();

            let g: Vec<usize> = if k >= w {
                match &active {
                    Some(am) => {
                        let latest = tl.latest();
                        let y = match &hybrid_y {
                            Some(y) => y.clone(),
                            None => {
                                // Full-solve step: coordinates of the latest
                                // snapshot from the sampled rows of the last
                                // built model.
                                let sampled: Vec<f64> = am
                                    .gappy
                                    .rows
                                    .iter()
                                    .map(|&row| latest[row] - am.model.psi[row])
                                    .collect();
                                am.gappy.coords(&sampled)
                            }
                        };
                        let errs = pointwise_error(latest, &am.model, &y, c);
                        select_rre_points(
                            &errs,
                            RreSettings {
                                delta: config.delta,
                            },
                        )
                    }
                    None => Vec::new(),
                }
            } else {
                Vec::new()
            };

            let deviations = window_deviations(&tl.window, &psi_now);
            let (phi, svals, rank_deficient) = pod(&deviations, config.modes);
            let psi_next = window_mean(&tl.window);
            let model = ReducedModel {
                phi,
                psi: psi_next.clone(),
                singular_values: svals.clone(),
                rank_deficient,
                window: w,
            };
            let points = odeim_select(&model.phi, config.odeim_points, c)
                .expect("n_p bounds validated upfront");
            active = match GappySolver::new(&model, &points, c) {
                Ok(gappy) => {
                    let sampling = assemble_sampling(&g, &points, &mesh, stencil);
                    Some(ActiveModel {
                        model,
                        gappy,
                        sampling,
                    })
                }
                // Degenerate sampled basis: drop the model; the next hybrid
                // step escalates to a full solve.
                Err(_) => None,
            };
            psi = Some(psi_next);
            refresh_svals = Some(svals);
        }

        let secs = started.elapsed().as_secs_f64();
        solve_seconds += secs;

        let (n_gamma, n_p, n_g) = match (&kind, &used_sampling) {
            (SolveKind::Hybrid, Some(sets)) => (sets.n_sampled(), sets.p.len(), sets.g.len()),
            _ => (n_cells, 0, 0),
        };
        let record = StepRecord {
            k,
            kind,
            n_gamma,
            n_p,
            n_g,
            subiterations: sub_iters,
            newton_iterations: newton_iters,
            jacobian_assemblies: assemblies,
            solve_seconds: secs,
            filter: filter_report,
        };
        sink.on_step(
            &record,
            tl.latest(),
            t_k,
            used_sampling.as_ref(),
            refresh_svals.as_deref(),
        );
        records.push(record);
    }

    Ok(RunOutput {
        records,
        solve_seconds,
        escalations,
    })
}

fn step_failed(k: usize, e: SolveError) -> RunError {
    RunError::Solve(SolveError::StepFailed {
        step: k,
        source: Box::new(e),
    })
}

struct HybridOutcome {
    snap: Vec<f64>,
    y: DVector<f64>,
    subiterations: usize,
    newton_iterations: usize,
    assemblies: usize,
    filter: FilterReport,
}

#[allow(clippy::too_many_arguments)]
fn hybrid_step(
    sys: &EulerFv,
    tl: &TimeLoop,
    config: &AromConfig,
    k: usize,
    t_k: f64,
    am: &ActiveModel,
    mesh: &Arc<Mesh>,
    c: usize,
) -> Result<HybridOutcome, SolveError> {
    let scheme = tl.scheme_for(k);
    let history = tl.history(k);
    let prev = tl.latest();

    let out = partial_solve(
        sys,
        scheme,
        t_k,
        &history,
        prev,
        &am.sampling,
        &am.model,
        &am.gappy,
        &config.sub,
        &config.newton,
    )?;

    // Hybrid snapshot: reconstruction everywhere, partial-solve rows on the
    // sampled cells.
    let mut snap: Vec<f64> = am.model.reconstruct(&out.y).as_slice().to_vec();
    for (slot, &cell) in am.sampling.s_hat.iter().enumerate() {
        snap[cell * c..(cell + 1) * c].copy_from_slice(&out.v_hat[slot * c..(slot + 1) * c]);
    }

    // Residual-gated filtering of the mixed snapshot.
    let shift = scheme.history_shift(&history, None, c);
    let mut gate = StepResidual::new(sys, t_k, scheme.dt_beta(), shift);
    let filter = residual_gated_filter(mesh, c, &mut snap, &mut gate, &config.filter);

    if let Some(cell) = first_inadmissible(&snap, mesh.dim()) {
        return Err(SolveError::Positivity {
            cell,
            what: "hybrid snapshot",
        });
    }

    Ok(HybridOutcome {
        snap,
        y: out.y,
        subiterations: out.subiterations,
        newton_iterations: out.newton_iterations,
        assemblies: out.assemblies,
        filter,
    })
}

fn window_mean(window: &VecDeque<Vec<f64>>) -> DVector<f64> {
    let n = window[0].len();
    let mut psi = DVector::zeros(n);
    for snap in window {
        for (p, v) in psi.iter_mut().zip(snap.iter()) {
            *p += v;
        }
    }
    psi / window.len() as f64
}

fn window_deviations(window: &VecDeque<Vec<f64>>, psi: &DVector<f64>) -> DMatrix<f64> {
    let n = window[0].len();
    let w = window.len();
    let mut dev = DMatrix::zeros(n, w);
    for (j, snap) in window.iter().enumerate() {
        for i in 0..n {
            dev[(i, j)] = snap[i] - psi[i];
        }
    }
    dev
}

/// Relative L1 distance between two flat states (all conserved variables, or
/// density only).
pub fn relative_l1_error(a: &[f64], reference: &[f64], c: usize, density_only: bool) -> f64 {
    assert_eq!(a.len(), reference.len());
    let mut num = 0.0;
    let mut den = 0.0;
    if density_only {
        for (av, rv) in a.chunks_exact(c).zip(reference.chunks_exact(c)) {
            num += (av[0] - rv[0]).abs();
            den += rv[0].abs();
        }
    } else {
        for (av, rv) in a.iter().zip(reference.iter()) {
            num += (av - rv).abs();
            den += rv.abs();
        }
    }
    num / den
}

/// Sampling / subiteration / timing averages of one run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Mean sampled fraction over all steps (1.0 for a pure reference run).
    pub s_bar: f64,
    /// Mean sampled fraction over hybrid steps; `None` when there were none.
    pub s_star: Option<f64>,
    /// Mean ODEIM fraction over hybrid steps.
    pub p_bar: Option<f64>,
    /// Mean subiterations over hybrid steps.
    pub j_bar: Option<f64>,
    /// Largest hybrid sampled fraction.
    pub max_hybrid_fraction: Option<f64>,
    pub n_full: usize,
    pub n_hybrid: usize,
    pub escalations: usize,
    pub mean_step_seconds: f64,
}

pub fn summarize_run(run: &RunOutput, n_cells: usize) -> RunSummary {
    let n_steps = run.records.len();
    let mut s_sum = 0.0;
    let mut s_hybrid = 0.0;
    let mut p_sum = 0.0;
    let mut j_sum = 0.0;
    let mut max_hybrid = 0.0f64;
    let mut n_hybrid = 0usize;
    for r in &run.records {
        let frac = r.n_gamma as f64 / n_cells as f64;
        s_sum += frac;
        if r.kind.is_hybrid() {
            n_hybrid += 1;
            s_hybrid += frac;
            p_sum += r.n_p as f64 / n_cells as f64;
            j_sum += r.subiterations as f64;
            max_hybrid = max_hybrid.max(frac);
        }
    }
    let hybrid = |x: f64| {
        if n_hybrid > 0 {
            Some(x / n_hybrid as f64)
        } else {
            None
        }
    };
    RunSummary {
        s_bar: s_sum / n_steps.max(1) as f64,
        s_star: hybrid(s_hybrid),
        p_bar: hybrid(p_sum),
        j_bar: hybrid(j_sum),
        max_hybrid_fraction: if n_hybrid > 0 { Some(max_hybrid) } else { None },
        n_full: n_steps - n_hybrid,
        n_hybrid,
        escalations: run.escalations,
        mean_step_seconds: run.mean_step_seconds(),
    }
}

/// Cross-run metrics: per-step errors against a reference trajectory plus
/// the wall-time speedup.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub summary: RunSummary,
    /// `e_k` for `k = 1..N_t`.
    pub errors: Vec<f64>,
    pub e_bar: f64,
    pub t_h_mean: f64,
    pub t_r_mean: f64,
    pub speedup: f64,
}

/// Combines an adaptive run with its reference; trajectories include the
/// initial state at index 0 and must live on the same step grid.
pub fn compute_metrics(
    arom_run: &RunOutput,
    arom_traj: &[Vec<f64>],
    hdm_run: &RunOutput,
    hdm_traj: &[Vec<f64>],
    n_cells: usize,
    c: usize,
    density_only: bool,
) -> Result<RunMetrics, ParamError> {
    if arom_traj.len() != hdm_traj.len() {
        return Err(ParamError::new(format!(
            "trajectory lengths differ: {} vs {}",
            arom_traj.len(),
            hdm_traj.len()
        )));
    }
    let summary = summarize_run(arom_run, n_cells);
    let errors: Vec<f64> = (1..arom_traj.len())
        .map(|k| relative_l1_error(&arom_traj[k], &hdm_traj[k], c, density_only))
        .collect();
    let e_bar = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    let t_h_mean = hdm_run.mean_step_seconds();
    let t_r_mean = arom_run.mean_step_seconds();
    Ok(RunMetrics {
        summary,
        errors,
        e_bar,
        t_h_mean,
        t_r_mean,
        speedup: t_h_mean / t_r_mean,
    })
}
