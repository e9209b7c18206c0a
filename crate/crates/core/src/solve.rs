//! Newton solves of the per-step residual, full or restricted to a sampled
//! cell set.
//!
//! Jacobians are assembled by graph-colored finite differences of the
//! residual (the radius-2 cross stencil admits a `(2r+1)^dim` cell coloring),
//! stored banded in 1D and CSR in 2D, and reused across iterations and
//! steps until convergence slows (modified Newton). The convergence test is
//! always on the true residual, so reuse never changes what "solved" means.

use nalgebra::DVector;

use crate::basis::{GappySolver, ReducedModel};
use crate::bdf::{BdfResidual, BdfScheme};
use crate::error::SolveError;
use crate::linalg::{gmres, norm_inf, Banded, BlockJacobi, Csr, GmresOpts};
use crate::sampling::SamplingSets;
use crate::system::{SemiDiscrete, ABSENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolverKind {
    /// Direct banded LU; valid when unknown cells lie on a line (1D).
    BandedDirect,
    /// Restarted GMRES with a cell-block Jacobi preconditioner.
    GmresBlockJacobi,
}

#[derive(Debug, Clone)]
pub struct NewtonSettings {
    /// Absolute infinity-norm residual tolerance.
    pub tol_abs: f64,
    pub max_iter: usize,
    pub linear: LinearSolverKind,
    pub gmres: GmresOpts,
    pub max_backtracks: usize,
}

impl NewtonSettings {
    pub fn for_dim(dim: usize) -> Self {
        NewtonSettings {
            tol_abs: if dim == 1 { 1e-10 } else { 1e-8 },
            max_iter: 20,
            linear: if dim == 1 {
                LinearSolverKind::BandedDirect
            } else {
                LinearSolverKind::GmresBlockJacobi
            },
            gmres: GmresOpts {
                tol_rel: 1e-6,
                restart: 60,
                max_iter: 600,
            },
            max_backtracks: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NewtonReport {
    pub iterations: usize,
    pub assemblies: usize,
    pub residual_norm: f64,
}

/// Coloring and sparsity of one unknown set (all cells or a sampled subset).
pub struct SystemShape {
    /// Sorted unknown cells; `None` means every mesh cell in order.
    cells: Option<Vec<usize>>,
    n_unknown: usize,
    c: usize,
    /// Per unknown position: sorted unknown positions coupled through the
    /// stencil (self included).
    adjacency: Vec<Vec<u32>>,
    /// Structurally independent cell groups; perturbing one variable of every
    /// cell in a group gives untangled Jacobian columns.
    classes: Vec<Vec<u32>>,
    /// Per class: sorted unknown positions whose rows react to the class.
    affected: Vec<Vec<u32>>,
    kind: LinearSolverKind,
    banded_kl: usize,
}

impl SystemShape {
    pub fn full<S: SemiDiscrete>(sys: &S, kind: LinearSolverKind) -> Self {
        Self::build(sys, None, kind)
    }

    pub fn subset<S: SemiDiscrete>(sys: &S, cells: &[usize], kind: LinearSolverKind) -> Self {
        Self::build(sys, Some(cells.to_vec()), kind)
    }

    fn build<S: SemiDiscrete>(sys: &S, cells: Option<Vec<usize>>, kind: LinearSolverKind) -> Self {
        let mesh = sys.mesh();
        let c = sys.n_vars();
        let r = sys.stencil_radius();
        let dim = mesh.dim();
        let n_mesh = mesh.n_cells();

        let n_unknown = cells.as_ref().map_or(n_mesh, |s| s.len());
        let mut pos_of = vec![ABSENT; n_mesh];
        match &cells {
            None => {
                for (p, slot) in pos_of.iter_mut().enumerate() {
                    *slot = p as u32;
                }
            }
            Some(list) => {
                for (p, &cell) in list.iter().enumerate() {
                    pos_of[cell] = p as u32;
                }
            }
        }
        let cell_of = |p: usize| -> usize {
            match &cells {
                None => p,
                Some(list) => list[p],
            }
        };

        // Cross-stencil adjacency restricted to unknown cells.
        let mut adjacency: Vec<Vec<u32>> = Vec::with_capacity(n_unknown);
        for p in 0..n_unknown {
            let cell = cell_of(p);
            let mut nb: Vec<u32> = vec![p as u32];
            for axis in 0..dim {
                for off in 1..=r as isize {
                    for dir in [-off, off] {
                        if let Some(n) = mesh.neighbor(cell, axis, dir) {
                            if pos_of[n] != ABSENT {
                                nb.push(pos_of[n]);
                            }
                        }
                    }
                }
            }
            nb.sort_unstable();
            adjacency.push(nb);
        }

        // Tile coloring: cells whose per-axis coordinates agree mod (2r+1)
        // never share a residual row.
        let period = 2 * r + 1;
        let n_classes = period.pow(dim as u32);
        let mut classes: Vec<Vec<u32>> = vec![Vec::new(); n_classes];
        for p in 0..n_unknown {
            let ij = mesh.coords(cell_of(p));
            let mut id = 0usize;
            for axis in (0..dim).rev() {
                id = id * period + (ij[axis] % period);
            }
            classes[id].push(p as u32);
        }
        classes.retain(|g| !g.is_empty());

        let mut affected: Vec<Vec<u32>> = Vec::with_capacity(classes.len());
        let mut mark = vec![false; n_unknown];
        for group in &classes {
            let mut rows: Vec<u32> = Vec::new();
            for &p in group {
                for &nb in &adjacency[p as usize] {
                    if !mark[nb as usize] {
                        mark[nb as usize] = true;
                        rows.push(nb);
                    }
                }
            }
            rows.sort_unstable();
            for &p in &rows {
                mark[p as usize] = false;
            }
            affected.push(rows);
        }

        SystemShape {
            cells,
            n_unknown,
            c,
            adjacency,
            classes,
            affected,
            kind,
            banded_kl: c * (r + 1) - 1,
        }
    }

    pub fn n_dof(&self) -> usize {
        self.n_unknown * self.c
    }

    pub fn matches_cells(&self, cells: Option<&[usize]>) -> bool {
        match (&self.cells, cells) {
            (None, None) => true,
            (Some(a), Some(b)) => a == b,
            _ => false,
        }
    }

    fn new_matrix(&self) -> LinMatrix {
        match self.kind {
            LinearSolverKind::BandedDirect => {
                LinMatrix::Banded(Banded::zeros(self.n_dof(), self.banded_kl, self.banded_kl))
            }
            LinearSolverKind::GmresBlockJacobi => {
                let c = self.c;
                let mut rows: Vec<Vec<u32>> = Vec::with_capacity(self.n_dof());
                for p in 0..self.n_unknown {
                    let mut cols: Vec<u32> = Vec::with_capacity(self.adjacency[p].len() * c);
                    for &nb in &self.adjacency[p] {
                        for v in 0..c {
                            cols.push(nb * c as u32 + v as u32);
                        }
                    }
                    for _ in 0..c {
                        rows.push(cols.clone());
                    }
                }
                LinMatrix::Sparse {
                    mat: Csr::from_pattern(&rows),
                    prec: None,
                }
            }
        }
    }
}

pub enum LinMatrix {
    Banded(Banded),
    Sparse { mat: Csr, prec: Option<BlockJacobi> },
}

/// Reusable Newton state: the assembled (possibly stale) Jacobian and the
/// assembly scratch. Full-system workspaces persist across steps so the
/// factorization amortizes over the run.
pub struct NewtonWorkspace {
    matrix: Option<LinMatrix>,
    stale_uses: usize,
    vp: Vec<f64>,
    r_pert: Vec<f64>,
    h: Vec<f64>,
    slot_of: Vec<u32>,
}

impl NewtonWorkspace {
    pub fn new() -> Self {
        NewtonWorkspace {
            matrix: None,
            stale_uses: 0,
            vp: Vec::new(),
            r_pert: Vec::new(),
            h: Vec::new(),
            slot_of: Vec::new(),
        }
    }

    pub fn invalidate(&mut self) {
        self.matrix = None;
        self.stale_uses = 0;
    }
}

impl Default for NewtonWorkspace {
    fn default() -> Self {
        Self::new()
    }
}

const SQRT_EPS: f64 = 1.4901161193847656e-8;

/// Colored finite-difference assembly of `dR/dv` at `v`, followed by
/// factorization / preconditioner setup. On success the workspace holds a
/// fresh matrix.
fn assemble<S: SemiDiscrete>(
    res: &mut BdfResidual<S>,
    shape: &SystemShape,
    v: &[f64],
    r_base: &[f64],
    ws: &mut NewtonWorkspace,
) -> Result<(), SolveError> {
    let c = shape.c;
    let n = shape.n_dof();
    ws.vp.resize(n, 0.0);
    ws.r_pert.resize(n, 0.0);
    ws.h.resize(shape.n_unknown.max(1), 0.0);
    if ws.slot_of.len() != shape.n_unknown {
        ws.slot_of = vec![ABSENT; shape.n_unknown];
    }

    let mut matrix = match ws.matrix.take() {
        Some(mut m) => {
            match &mut m {
                LinMatrix::Banded(b) => b.reset(),
                LinMatrix::Sparse { mat, prec } => {
                    mat.clear_values();
                    *prec = None;
                }
            }
            m
        }
        None => shape.new_matrix(),
    };

    let mut affected_pos: Vec<usize> = Vec::new();
    for (class, affected) in shape.classes.iter().zip(shape.affected.iter()) {
        affected_pos.clear();
        affected_pos.extend(affected.iter().map(|&p| p as usize));
        for (slot, &p) in affected.iter().enumerate() {
            ws.slot_of[p as usize] = slot as u32;
        }
        let n_aff = affected_pos.len();
        for var in 0..c {
            ws.vp.copy_from_slice(v);
            ws.h.resize(class.len().max(1), 0.0);
            for (gi, &p) in class.iter().enumerate() {
                let dof = p as usize * c + var;
                let h = SQRT_EPS * (1.0 + v[dof].abs());
                ws.h[gi] = h;
                ws.vp[dof] += h;
            }
            res.eval(&ws.vp, Some(&affected_pos), &mut ws.r_pert[..n_aff * c])?;
            for (gi, &p) in class.iter().enumerate() {
                let col = p as usize * c + var;
                let h = ws.h[gi];
                for &nb in &shape.adjacency[p as usize] {
                    let slot = ws.slot_of[nb as usize] as usize;
                    for v2 in 0..c {
                        let row = nb as usize * c + v2;
                        let val = (ws.r_pert[slot * c + v2] - r_base[row]) / h;
                        if val != 0.0 {
                            match &mut matrix {
                                LinMatrix::Banded(b) => b.set(row, col, val),
                                LinMatrix::Sparse { mat, .. } => mat.set(row, col as u32, val),
                            }
                        }
                    }
                }
            }
        }
        for &p in affected.iter() {
            ws.slot_of[p as usize] = ABSENT;
        }
    }

    match &mut matrix {
        LinMatrix::Banded(b) => b.factor()?,
        LinMatrix::Sparse { mat, prec } => {
            *prec = Some(BlockJacobi::from_csr(mat, c)?);
        }
    }
    ws.matrix = Some(matrix);
    ws.stale_uses = 0;
    Ok(())
}

fn solve_linear(
    matrix: &LinMatrix,
    rhs: &[f64],
    delta: &mut [f64],
    gmres_opts: GmresOpts,
) -> Result<(), SolveError> {
    match matrix {
        LinMatrix::Banded(b) => {
            delta.copy_from_slice(rhs);
            b.solve(delta);
            Ok(())
        }
        LinMatrix::Sparse { mat, prec } => {
            let prec = prec.as_ref().expect("preconditioner built at assembly");
            gmres(mat, prec, rhs, delta, gmres_opts)?;
            Ok(())
        }
    }
}

/// Damped modified-Newton iteration on `res`, starting from (and updating)
/// `v`. Converged means `|R(v)|_inf <= settings.tol_abs`.
pub fn newton_solve<S: SemiDiscrete>(
    res: &mut BdfResidual<S>,
    shape: &SystemShape,
    settings: &NewtonSettings,
    ws: &mut NewtonWorkspace,
    v: &mut [f64],
) -> Result<NewtonReport, SolveError> {
    let n = res.n_dof();
    assert_eq!(shape.n_dof(), n);
    assert_eq!(v.len(), n);

    let mut report = NewtonReport::default();
    let mut r = vec![0.0; n];
    let mut r_try = vec![0.0; n];
    let mut neg_r = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut v_try = vec![0.0; n];

    res.eval(v, None, &mut r)?;
    let mut rn = norm_inf(&r);

    loop {
        if rn <= settings.tol_abs {
            report.residual_norm = rn;
            return Ok(report);
        }
        if report.iterations >= settings.max_iter {
            return Err(SolveError::NewtonDiverged {
                residual_norm: rn,
                iterations: report.iterations,
            });
        }

        if ws.matrix.is_none() {
            assemble(res, shape, v, &r, ws)?;
            report.assemblies += 1;
        }

        for i in 0..n {
            neg_r[i] = -r[i];
        }
        match solve_linear(
            ws.matrix.as_ref().expect("assembled above"),
            &neg_r,
            &mut delta,
            settings.gmres,
        ) {
            Ok(()) => {}
            Err(e) => {
                // A stale factorization may be the culprit; rebuild once at
                // the current iterate before giving up.
                if ws.stale_uses > 0 {
                    ws.invalidate();
                    continue;
                }
                return Err(e);
            }
        }

        // Backtracking line search on the residual norm; positivity failures
        // count as rejections.
        let mut alpha = 1.0f64;
        let mut accepted = false;
        for _ in 0..=settings.max_backtracks {
            for i in 0..n {
                v_try[i] = v[i] + alpha * delta[i];
            }
            if res.admissible(&v_try) {
                let rn_try = match res.eval(&v_try, None, &mut r_try) {
                    Ok(()) => norm_inf(&r_try),
                    Err(_) => f64::INFINITY,
                };
                if rn_try < rn || rn_try <= settings.tol_abs {
                    v.copy_from_slice(&v_try);
                    std::mem::swap(&mut r, &mut r_try);
                    rn = rn_try;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }

        if accepted {
            report.iterations += 1;
            ws.stale_uses += 1;
        } else if ws.stale_uses > 0 {
            // The cached Jacobian no longer describes this state; refresh.
            ws.invalidate();
        } else {
            return Err(SolveError::NewtonDiverged {
                residual_norm: rn,
                iterations: report.iterations,
            });
        }
    }
}

/// Solves the full step `R_k(q) = 0` and returns the new state vector.
pub fn full_solve<S: SemiDiscrete>(
    sys: &S,
    scheme: &BdfScheme,
    t_k: f64,
    history: &[&[f64]],
    guess: &[f64],
    settings: &NewtonSettings,
    shape: &SystemShape,
    ws: &mut NewtonWorkspace,
) -> Result<(Vec<f64>, NewtonReport), SolveError> {
    debug_assert!(shape.matches_cells(None));
    let shift = scheme.history_shift(history, None, sys.n_vars());
    let mut res = BdfResidual::full(sys, t_k, scheme.dt_beta(), shift);
    let mut v = guess.to_vec();
    let report = newton_solve(&mut res, shape, settings, ws, &mut v)?;
    Ok((v, report))
}

#[derive(Debug, Clone, Copy)]
pub struct SubiterationSettings {
    /// Reduced-coordinate convergence tolerance.
    pub eps_y: f64,
    pub j_max: usize,
}

impl Default for SubiterationSettings {
    fn default() -> Self {
        SubiterationSettings {
            eps_y: 1e-4,
            j_max: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartialOutcome {
    /// Solved values on the sampled cells (ordered like `sampling.s_hat`).
    pub v_hat: Vec<f64>,
    /// Final reduced coordinates.
    pub y: DVector<f64>,
    /// Restricted solves performed (`1 <= J <= j_max`).
    pub subiterations: usize,
    pub newton_iterations: usize,
    pub assemblies: usize,
}

/// Partial solve of one step: Newton on the sampled cells with frozen
/// neighbor values, alternating with gappy refreshes of the neighbors, until
/// the reduced coordinates settle (`eps_y`) or `j_max` is reached.
#[allow(clippy::too_many_arguments)]
pub fn partial_solve<S: SemiDiscrete>(
    sys: &S,
    scheme: &BdfScheme,
    t_k: f64,
    history: &[&[f64]],
    prev: &[f64],
    sampling: &SamplingSets,
    model: &ReducedModel,
    gappy: &GappySolver,
    sub: &SubiterationSettings,
    settings: &NewtonSettings,
) -> Result<PartialOutcome, SolveError> {
    let c = sys.n_vars();
    let n_s = sampling.s_hat.len();

    let shift = scheme.history_shift(history, Some(&sampling.s_hat), c);
    let frozen = gather_rows(prev, &sampling.s_tilde, c);
    let mut res = BdfResidual::restricted(sys, t_k, scheme.dt_beta(), shift, sampling, frozen);

    // Restricted solves keep the banded structure in 1D: sorted subset
    // positions preserve "within stencil radius" adjacency.
    let shape = SystemShape::subset(sys, &sampling.s_hat, settings.linear);
    let mut ws = NewtonWorkspace::new();

    let mut v_hat = gather_rows(prev, &sampling.s_hat, c);

    // Positions of the gappy rows inside v_hat.
    let mut pos_of_cell = std::collections::HashMap::with_capacity(n_s);
    for (p, &cell) in sampling.s_hat.iter().enumerate() {
        pos_of_cell.insert(cell, p);
    }
    let row_pos: Vec<usize> = gappy
        .rows
        .iter()
        .map(|&row| {
            let (cell, var) = (row / c, row % c);
            pos_of_cell[&cell] * c + var
        })
        .collect();

    let mut y = DVector::zeros(model.n_modes());
    let mut y_prev: Option<DVector<f64>> = None;
    let mut j_used = 0;
    let mut newton_iterations = 0;
    let mut assemblies = 0;
    let mut sampled = vec![0.0; gappy.rows.len()];

    for j in 1..=sub.j_max {
        let report = newton_solve(&mut res, &shape, settings, &mut ws, &mut v_hat)?;
        newton_iterations += report.iterations;
        assemblies += report.assemblies;
        j_used = j;

        for (s, (&gp, &row)) in row_pos.iter().zip(gappy.rows.iter()).enumerate() {
            sampled[s] = v_hat[gp] - model.psi[row];
        }
        y = gappy.coords(&sampled);

        if let Some(prev_y) = &y_prev {
            if (&y - prev_y).norm() < sub.eps_y {
                break;
            }
        }
        if sampling.s_tilde.is_empty() || j == sub.j_max {
            break;
        }

        // Refresh the frozen neighbors from the current reduced coordinates.
        let mut tilde = vec![0.0; sampling.s_tilde.len() * c];
        for (slot, &cell) in sampling.s_tilde.iter().enumerate() {
            for var in 0..c {
                let row = cell * c + var;
                let mut val = model.psi[row];
                for k in 0..model.n_modes() {
                    val += model.phi[(row, k)] * y[k];
                }
                tilde[slot * c + var] = val;
            }
        }
        res.set_frozen(tilde);
        y_prev = Some(y.clone());
    }

    Ok(PartialOutcome {
        v_hat,
        y,
        subiterations: j_used,
        newton_iterations,
        assemblies,
    })
}

/// Copies the rows of `cells` out of a flat cell-major vector.
pub fn gather_rows(flat: &[f64], cells: &[usize], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; cells.len() * c];
    for (slot, &cell) in cells.iter().enumerate() {
        out[slot * c..(slot + 1) * c].copy_from_slice(&flat[cell * c..(cell + 1) * c]);
    }
    out
}
