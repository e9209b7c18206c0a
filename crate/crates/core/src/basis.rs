//! Windowed reduced-basis machinery: POD of mean-shifted snapshot windows,
//! gappy least-squares coordinates from sampled cells, and oversampled DEIM
//! point selection at cell granularity.

use nalgebra::{DMatrix, DVector};

use crate::error::{ParamError, SolveError};

/// Affine reduced model `v ~ psi + Phi y` over the flat DOF vector.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    /// Orthonormal basis, `n_dof x m`.
    pub phi: DMatrix<f64>,
    /// Reference state (window mean), `n_dof`.
    pub psi: DVector<f64>,
    /// Singular values of the deviation window (all of them, diagnostics).
    pub singular_values: Vec<f64>,
    /// True when the window rank fell short of the requested mode count.
    pub rank_deficient: bool,
    /// Window width the model was built from.
    pub window: usize,
}

impl ReducedModel {
    pub fn n_modes(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.phi.nrows()
    }

    /// `psi + Phi y`.
    pub fn reconstruct(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.n_modes() == 0 {
            return self.psi.clone();
        }
        &self.psi + &self.phi * y
    }
}

/// Dominant left singular vectors of a deviation matrix.
///
/// Returns at most `m` columns; fewer when the numerical rank is smaller, in
/// which case the caller should run the window with the achievable rank.
/// Column signs follow a fixed convention (largest-magnitude entry positive,
/// first such entry on ties) so repeated builds are bit-identical.
pub fn pod(deviations: &DMatrix<f64>, m: usize) -> (DMatrix<f64>, Vec<f64>, bool) {
    let w = deviations.ncols();
    assert!(m <= w, "requested {m} modes from a window of {w}");
    let svd = deviations.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");

    // Order modes by descending singular value (stable).
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let svals: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();

    let tol = 1e-12 * svals.first().copied().unwrap_or(0.0);
    let rank = svals.iter().take_while(|&&s| s > tol && s > 0.0).count();
    let keep = rank.min(m);

    let mut phi = DMatrix::zeros(deviations.nrows(), keep);
    for (k, &src) in order.iter().take(keep).enumerate() {
        let col = u.column(src);
        // Deterministic sign: flip so the largest-|.| entry is positive.
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        let sgn = if col[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..col.len() {
            phi[(i, k)] = sgn * col[i];
        }
    }
    (phi, svals, keep < m)
}

/// Arithmetic mean of the window snapshots (columns).
pub fn reference_state(window: &DMatrix<f64>) -> DVector<f64> {
    let w = window.ncols();
    assert!(w > 0);
    let mut psi = DVector::zeros(window.nrows());
    for j in 0..w {
        psi += window.column(j);
    }
    psi / w as f64
}

/// ODEIM sampling cells, in greedy selection order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdeimPoints {
    pub cells: Vec<usize>,
}

impl OdeimPoints {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Greedy (oversampled) DEIM selection at cell granularity.
///
/// The first `m` points follow the classic DEIM recursion (interpolatory fit
/// of mode `t` on the previously selected rows); the remaining `n_p - m`
/// points keep cycling over the modes with a least-squares fit on everything
/// selected so far. A selected DOF row claims its whole cell: rows of taken
/// cells are excluded from later argmax scans, and the sampled rows used for
/// the fits are the winning (dominant-variable) rows.
pub fn odeim_select(
    phi: &DMatrix<f64>,
    n_p: usize,
    n_vars: usize,
) -> Result<OdeimPoints, ParamError> {
    let n_dof = phi.nrows();
    assert_eq!(n_dof % n_vars, 0);
    let n_cells = n_dof / n_vars;
    let m = phi.ncols();
    if n_p > n_cells {
        return Err(ParamError::new(format!(
            "requested {n_p} sampling cells from a mesh of {n_cells}"
        )));
    }
    if m > 0 && n_p < m {
        return Err(ParamError::new(format!(
            "need at least m = {m} sampling cells, requested {n_p}"
        )));
    }

    let mut taken = vec![false; n_cells];
    let mut sel_rows: Vec<usize> = Vec::with_capacity(n_p);
    let mut cells: Vec<usize> = Vec::with_capacity(n_p);
    let mut residual = DVector::zeros(n_dof);

    for t in 0..n_p {
        if m == 0 {
            residual.fill(0.0);
        } else {
            // Mode `t % m`, fitted on the modes before it at the rows picked
            // so far: for t < m this is the classic DEIM recursion (square
            // interpolation system), beyond that the same formula continues
            // with a least-squares fit over all selected rows.
            let mode = t % m;
            if mode == 0 {
                residual.copy_from(&phi.column(0));
            } else {
                let a = DMatrix::from_fn(sel_rows.len(), mode, |r, j| phi[(sel_rows[r], j)]);
                let b = DVector::from_fn(sel_rows.len(), |r, _| phi[(sel_rows[r], mode)]);
                let coeffs = lstsq(&a, &b);
                residual.copy_from(&phi.column(mode));
                for j in 0..mode {
                    for i in 0..n_dof {
                        residual[i] -= coeffs[j] * phi[(i, j)];
                    }
                }
            }
        }

        // Argmax over rows of untaken cells; strict > keeps the lowest index
        // on ties, and an all-zero residual degenerates to the first untaken
        // cell.
        let mut best_row = usize::MAX;
        let mut best_abs = -1.0f64;
        for row in 0..n_dof {
            if taken[row / n_vars] {
                continue;
            }
            let v = residual[row].abs();
            if v > best_abs {
                best_abs = v;
                best_row = row;
            }
        }
        debug_assert!(best_row != usize::MAX);
        let cell = best_row / n_vars;
        taken[cell] = true;
        sel_rows.push(best_row);
        cells.push(cell);
    }
    Ok(OdeimPoints { cells })
}

/// Least squares via QR; falls back to the normal equations only in the
/// degenerate zero-column case.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let ncols = a.ncols();
    if ncols == 0 {
        return DVector::zeros(0);
    }
    let qr = a.clone().qr();
    let rhs = qr.q().transpose() * b;
    let r = qr.r();
    // Manual back-substitution tolerating tiny pivots.
    let mut y = DVector::zeros(ncols);
    for i in (0..ncols).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..ncols {
            s -= r[(i, j)] * y[j];
        }
        y[i] = if r[(i, i)].abs() > 1e-300 {
            s / r[(i, i)]
        } else {
            0.0
        };
    }
    y
}

/// Cached least-squares factorization of the sampled basis `P^T Phi`, where a
/// sampled cell contributes all of its `n_vars` DOF rows.
#[derive(Debug, Clone)]
pub struct GappySolver {
    /// Flat DOF rows sampled by the points, cell-major in point order.
    pub rows: Vec<usize>,
    qr: Option<nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    m: usize,
}

impl GappySolver {
    pub fn new(model: &ReducedModel, points: &OdeimPoints, n_vars: usize) -> Result<Self, SolveError> {
        let m = model.n_modes();
        let mut rows = Vec::with_capacity(points.len() * n_vars);
        for &cell in &points.cells {
            for v in 0..n_vars {
                rows.push(cell * n_vars + v);
            }
        }
        if m == 0 {
            return Ok(GappySolver { rows, qr: None, m });
        }
        let sampled = DMatrix::from_fn(rows.len(), m, |r, j| model.phi[(rows[r], j)]);
        let qr = sampled.qr();
        // Column-rank check on the R diagonal.
        let r = qr.r();
        let scale = (0..m).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
        let rank = (0..m).filter(|&i| r[(i, i)].abs() > 1e-12 * scale.max(1e-300)).count();
        if rank < m {
            return Err(SolveError::GappyRankDeficient { rank, needed: m });
        }
        Ok(GappySolver { rows, qr: Some(qr), m })
    }

    /// Least-squares reduced coordinates from deviation values `(v - psi)` at
    /// the sampled rows (ordered as [`GappySolver::rows`]).
    pub fn coords(&self, sampled_deviation: &[f64]) -> DVector<f64> {
        assert_eq!(sampled_deviation.len(), self.rows.len());
        let Some(qr) = &self.qr else {
            return DVector::zeros(0);
        };
        let b = DVector::from_column_slice(sampled_deviation);
        let rhs = qr.q().transpose() * b;
        let r = qr.r();
        let mut y = DVector::zeros(self.m);
        for i in (0..self.m).rev() {
            let mut s = rhs[i];
            for j in (i + 1)..self.m {
                s -= r[(i, j)] * y[j];
            }
            y[i] = s / r[(i, i)];
        }
        y
    }
}

/// One-shot gappy solve: `y = (P^T Phi)^+ P^T (v - psi)` from deviation
/// values at the point cells.
pub fn gappy_coordinates(
    model: &ReducedModel,
    points: &OdeimPoints,
    sampled_deviation: &[f64],
    n_vars: usize,
) -> Result<DVector<f64>, SolveError> {
    let solver = GappySolver::new(model, points, n_vars)?;
    Ok(solver.coords(sampled_deviation))
}
