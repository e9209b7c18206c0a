//! Backward differentiation formulas and the per-step nonlinear residual.
//!
//! A step solves `R_k(q) = q - F_k(q) = 0` with
//! `F_k(q) = dt*beta*f*(q, t_k) - sum_j a_j q_hist`. The residual object
//! evaluates either the full system or its restriction to a sampled cell set
//! with frozen neighbor values.

use crate::error::{ParamError, SolveError};
use crate::sampling::SamplingSets;
use crate::system::{SemiDiscrete, StateView, ABSENT};

/// BDF coefficients `a_0..a_s` (normalized so `a_s = 1`) and `beta`.
#[derive(Debug, Clone)]
pub struct BdfScheme {
    order: usize,
    a: Vec<f64>,
    beta: f64,
    dt: f64,
}

impl BdfScheme {
    pub fn new(order: usize, dt: f64) -> Result<Self, ParamError> {
        if !(dt > 0.0) {
            return Err(ParamError::new(format!("dt must be positive, got {dt}")));
        }
        match order {
            1 => Ok(BdfScheme {
                order,
                a: vec![-1.0, 1.0],
                beta: 1.0,
                dt,
            }),
            2 => Ok(BdfScheme {
                order,
                a: vec![1.0 / 3.0, -4.0 / 3.0, 1.0],
                beta: 2.0 / 3.0,
                dt,
            }),
            _ => Err(ParamError::new(format!("unsupported BDF order {order}"))),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dt_beta(&self) -> f64 {
        self.dt * self.beta
    }

    pub fn coefficient(&self, j: usize) -> f64 {
        self.a[j]
    }

    /// `sum_{j<s} a_j hist[j]` over the requested cells; `history` is ordered
    /// oldest to newest and must hold exactly `order` states.
    pub fn history_shift(
        &self,
        history: &[&[f64]],
        cells: Option<&[usize]>,
        c: usize,
    ) -> Vec<f64> {
        assert_eq!(history.len(), self.order, "history must hold s states");
        let n_rows = cells.map_or(history[0].len() / c, |s| s.len());
        let mut shift = vec![0.0; n_rows * c];
        for (j, h) in history.iter().enumerate() {
            let aj = self.a[j];
            match cells {
                None => {
                    for (s, hv) in shift.iter_mut().zip(h.iter()) {
                        *s += aj * hv;
                    }
                }
                Some(list) => {
                    for (row, &cell) in list.iter().enumerate() {
                        for v in 0..c {
                            shift[row * c + v] += aj * h[cell * c + v];
                        }
                    }
                }
            }
        }
        shift
    }
}

/// `F_k` rows at the requested cells for a full candidate vector:
/// `dt*beta*f*(q, t_k) - sum_j a_j q_hist`.
pub fn bdf_function<S: SemiDiscrete>(
    sys: &S,
    scheme: &BdfScheme,
    t_k: f64,
    candidate: &[f64],
    history: &[&[f64]],
    cells: Option<&[usize]>,
    out: &mut [f64],
) -> Result<(), SolveError> {
    let c = sys.n_vars();
    let view = StateView::Full {
        flat: candidate,
        c,
    };
    sys.rhs_cells(t_k, view, cells, out)?;
    let shift = scheme.history_shift(history, cells, c);
    let db = scheme.dt_beta();
    for (o, s) in out.iter_mut().zip(shift.iter()) {
        *o = db * *o - s;
    }
    Ok(())
}

/// Which DOFs a step solves for.
enum Unknowns {
    Full {
        n_cells: usize,
    },
    /// Sampled cells are the unknowns; their stencil neighbors enter as
    /// frozen data. `loc` maps every cell of the union to its row in the
    /// compact buffer (sampled rows first).
    Subset {
        cells: Vec<usize>,
        loc: Vec<u32>,
    },
}

/// The nonlinear residual `R(v) = v + shift - dt*beta*f*` of one time step,
/// over either all cells or a sampled subset.
pub struct BdfResidual<'a, S: SemiDiscrete> {
    sys: &'a S,
    t: f64,
    dt_beta: f64,
    shift: Vec<f64>,
    unknowns: Unknowns,
    frozen: Vec<f64>,
    buf: Vec<f64>,
    cell_scratch: Vec<usize>,
}

impl<'a, S: SemiDiscrete> BdfResidual<'a, S> {
    /// Residual over every cell.
    pub fn full(sys: &'a S, t: f64, dt_beta: f64, shift: Vec<f64>) -> Self {
        let n_cells = sys.mesh().n_cells();
        assert_eq!(shift.len(), n_cells * sys.n_vars());
        BdfResidual {
            sys,
            t,
            dt_beta,
            shift,
            unknowns: Unknowns::Full { n_cells },
            frozen: Vec::new(),
            buf: Vec::new(),
            cell_scratch: Vec::new(),
        }
    }

    /// Residual restricted to the sampled cells, with neighbor rows frozen at
    /// `frozen` (ordered like `sampling.s_tilde`).
    pub fn restricted(
        sys: &'a S,
        t: f64,
        dt_beta: f64,
        shift: Vec<f64>,
        sampling: &SamplingSets,
        frozen: Vec<f64>,
    ) -> Self {
        let c = sys.n_vars();
        let n_s = sampling.s_hat.len();
        assert_eq!(shift.len(), n_s * c);
        assert_eq!(frozen.len(), sampling.s_tilde.len() * c);
        let mut loc = vec![ABSENT; sys.mesh().n_cells()];
        for (row, &cell) in sampling.s_hat.iter().enumerate() {
            loc[cell] = row as u32;
        }
        for (row, &cell) in sampling.s_tilde.iter().enumerate() {
            loc[cell] = (n_s + row) as u32;
        }
        let buf = vec![0.0; (n_s + sampling.s_tilde.len()) * c];
        BdfResidual {
            sys,
            t,
            dt_beta,
            shift,
            unknowns: Unknowns::Subset {
                cells: sampling.s_hat.clone(),
                loc,
            },
            frozen,
            buf,
            cell_scratch: Vec::new(),
        }
    }

    pub fn n_unknown_cells(&self) -> usize {
        match &self.unknowns {
            Unknowns::Full { n_cells } => *n_cells,
            Unknowns::Subset { cells, .. } => cells.len(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.sys.n_vars()
    }

    pub fn n_dof(&self) -> usize {
        self.n_unknown_cells() * self.n_vars()
    }

    pub fn system(&self) -> &'a S {
        self.sys
    }

    /// Cell id of unknown-row position `pos`.
    pub fn cell_of(&self, pos: usize) -> usize {
        match &self.unknowns {
            Unknowns::Full { .. } => pos,
            Unknowns::Subset { cells, .. } => cells[pos],
        }
    }

    /// Replaces the frozen neighbor rows (subiteration refresh).
    pub fn set_frozen(&mut self, frozen: Vec<f64>) {
        assert_eq!(frozen.len(), self.frozen.len());
        self.frozen = frozen;
    }

    /// Evaluates residual rows at `rows` (positions into the unknown-cell
    /// list; `None` = all) for the unknown vector `v`.
    pub fn eval(
        &mut self,
        v: &[f64],
        rows: Option<&[usize]>,
        out: &mut [f64],
    ) -> Result<(), SolveError> {
        let c = self.sys.n_vars();
        assert_eq!(v.len(), self.n_dof());
        match &self.unknowns {
            Unknowns::Full { .. } => {
                let view = StateView::Full { flat: v, c };
                self.sys.rhs_cells(self.t, view, rows, out)?;
                finish_rows(v, &self.shift, self.dt_beta, rows, c, out);
            }
            Unknowns::Subset { cells, loc } => {
                let n_s = cells.len();
                self.buf[..n_s * c].copy_from_slice(v);
                self.buf[n_s * c..].copy_from_slice(&self.frozen);
                let view = StateView::Scatter {
                    loc,
                    buf: &self.buf,
                    c,
                };
                let cell_list: &[usize] = match rows {
                    None => cells,
                    Some(positions) => {
                        self.cell_scratch.clear();
                        self.cell_scratch
                            .extend(positions.iter().map(|&p| cells[p]));
                        &self.cell_scratch
                    }
                };
                self.sys.rhs_cells(self.t, view, Some(cell_list), out)?;
                finish_rows(v, &self.shift, self.dt_beta, rows, c, out);
            }
        }
        Ok(())
    }

    /// True when every unknown row of `v` is admissible for the system.
    pub fn admissible(&self, v: &[f64]) -> bool {
        let c = self.sys.n_vars();
        v.chunks_exact(c).all(|row| self.sys.row_admissible(row))
    }
}

#[inline]
fn finish_rows(
    v: &[f64],
    shift: &[f64],
    dt_beta: f64,
    rows: Option<&[usize]>,
    c: usize,
    out: &mut [f64],
) {
    match rows {
        None => {
            for i in 0..out.len() {
                out[i] = v[i] + shift[i] - dt_beta * out[i];
            }
        }
        Some(positions) => {
            for (slot, &p) in positions.iter().enumerate() {
                for var in 0..c {
                    let dof = p * c + var;
                    let o = slot * c + var;
                    out[o] = v[dof] + shift[dof] - dt_beta * out[o];
                }
            }
        }
    }
}
