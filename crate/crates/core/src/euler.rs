//! Second-order MUSCL finite-volume discretization of the compressible Euler
//! equations on a Cartesian mesh: Roe flux, minmod limiter, dimension-by-
//! dimension face sweeps, Dirichlet-from-IC and reflective wall boundaries.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{ParamError, SolveError};
use crate::mesh::{Mesh, MAX_DIM};
use crate::state::{
    conservative_to_primitive_row, primitive_to_conservative_row, row_admissible, PrimitiveRow,
};
use crate::system::{SemiDiscrete, StateView};

/// Ideal gas model.
#[derive(Debug, Clone, Copy)]
pub struct GasModel {
    pub gamma: f64,
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self, ParamError> {
        if gamma > 1.0 {
            Ok(GasModel { gamma })
        } else {
            Err(ParamError::new(format!("gamma must exceed 1, got {gamma}")))
        }
    }
}

/// Boundary condition of one mesh face.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Ghost cells frozen at initial-condition values.
    DirichletFromIc,
    /// Reflective wall: mirrored state with negated normal velocity.
    Wall,
}

/// One condition per boundary side, indexed `[x-lo, x-hi, y-lo, y-hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundarySpec {
    sides: [BoundaryCondition; 2 * MAX_DIM],
}

impl BoundarySpec {
    pub fn uniform(bc: BoundaryCondition) -> Self {
        BoundarySpec {
            sides: [bc; 2 * MAX_DIM],
        }
    }

    pub fn dirichlet_from_ic() -> Self {
        Self::uniform(BoundaryCondition::DirichletFromIc)
    }

    pub fn walls() -> Self {
        Self::uniform(BoundaryCondition::Wall)
    }

    /// Per-side conditions, ordered `[x-lo, x-hi, y-lo, y-hi]`.
    pub fn per_side(sides: [BoundaryCondition; 2 * MAX_DIM]) -> Self {
        BoundarySpec { sides }
    }

    #[inline]
    pub fn side(&self, axis: usize, hi: bool) -> BoundaryCondition {
        self.sides[2 * axis + hi as usize]
    }
}

/// Flux stencil extent per axis.
#[derive(Debug, Clone, Copy)]
pub struct StencilSpec {
    pub radius: usize,
}

impl Default for StencilSpec {
    fn default() -> Self {
        StencilSpec { radius: 2 }
    }
}

/// Which variables the slope limiter acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitVariables {
    Conservative,
    Primitive,
}

/// Reconstruction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeMode {
    Muscl,
    FirstOrder,
}

/// Scheme options; the defaults are used by both bundled experiments.
#[derive(Debug, Clone, Copy)]
pub struct EulerOptions {
    pub limit: LimitVariables,
    pub slope: SlopeMode,
    /// Harten entropy-fix parameter (fraction of the Roe sound speed);
    /// `None` disables the fix.
    pub entropy_fix: Option<f64>,
}

impl Default for EulerOptions {
    fn default() -> Self {
        EulerOptions {
            limit: LimitVariables::Conservative,
            slope: SlopeMode::Muscl,
            entropy_fix: None,
        }
    }
}

/// Minmod limiter: 0 on opposing signs, else the smaller-magnitude argument.
#[inline]
pub fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Limited face values of the middle cell from a `(q_{i-1}, q_i, q_{i+1})`
/// triple: `(q_i - sigma/2, q_i + sigma/2)` per component.
#[inline]
pub fn muscl_reconstruct(qm: &[f64], q0: &[f64], qp: &[f64], lo: &mut [f64], hi: &mut [f64]) {
    for v in 0..q0.len() {
        let sigma = minmod(q0[v] - qm[v], qp[v] - q0[v]);
        lo[v] = q0[v] - 0.5 * sigma;
        hi[v] = q0[v] + 0.5 * sigma;
    }
}

/// Analytic Euler flux along `axis` from a primitive row `[rho, u.., P]`.
pub fn physical_flux(prim: &[f64], axis: usize, dim: usize, gamma: f64, out: &mut [f64]) {
    let rho = prim[0];
    let p = prim[dim + 1];
    let un = prim[1 + axis];
    let mut ke = 0.0;
    for a in 0..dim {
        ke += prim[1 + a] * prim[1 + a];
    }
    let rho_e = p / (gamma - 1.0) + 0.5 * rho * ke;
    out[0] = rho * un;
    for a in 0..dim {
        out[1 + a] = rho * un * prim[1 + a];
    }
    out[1 + axis] += p;
    out[dim + 1] = un * (rho_e + p);
}

/// Roe flux between two primitive rows across a face normal to `axis`.
///
/// `left`/`right` carry the cell indices only for error reporting.
pub fn roe_flux(
    prim_l: &[f64],
    prim_r: &[f64],
    axis: usize,
    dim: usize,
    gas: GasModel,
    entropy_fix: Option<f64>,
    left: usize,
    right: usize,
    out: &mut [f64],
) -> Result<(), SolveError> {
    let gamma = gas.gamma;
    let c = dim + 2;

    let mut fl = [0.0; MAX_DIM + 2];
    let mut fr = [0.0; MAX_DIM + 2];
    physical_flux(prim_l, axis, dim, gamma, &mut fl[..c]);
    physical_flux(prim_r, axis, dim, gamma, &mut fr[..c]);

    // Roe averages with sqrt-density weights.
    let rl = prim_l[0].sqrt();
    let rr = prim_r[0].sqrt();
    let wsum = rl + rr;
    let mut u = [0.0; MAX_DIM];
    for a in 0..dim {
        u[a] = (rl * prim_l[1 + a] + rr * prim_r[1 + a]) / wsum;
    }
    let hl = enthalpy(prim_l, dim, gamma);
    let hr = enthalpy(prim_r, dim, gamma);
    let h = (rl * hl + rr * hr) / wsum;
    let mut q2 = 0.0;
    for a in 0..dim {
        q2 += u[a] * u[a];
    }
    let a2 = (gamma - 1.0) * (h - 0.5 * q2);
    if !(a2 > 0.0) {
        return Err(SolveError::RoeAverage { left, right, axis });
    }
    let a = a2.sqrt();
    let rho_roe = rl * rr;

    let un = u[axis];
    let d_rho = prim_r[0] - prim_l[0];
    let d_p = prim_r[dim + 1] - prim_l[dim + 1];
    let d_un = prim_r[1 + axis] - prim_l[1 + axis];

    // Wave strengths: acoustic pair, entropy, and (2D) shear.
    let alpha_minus = (d_p - rho_roe * a * d_un) / (2.0 * a2);
    let alpha_entropy = d_rho - d_p / a2;
    let alpha_plus = (d_p + rho_roe * a * d_un) / (2.0 * a2);

    let abs = |lam: f64| -> f64 {
        match entropy_fix {
            Some(frac) => {
                let delta = frac * a;
                if lam.abs() < delta {
                    0.5 * (lam * lam / delta + delta)
                } else {
                    lam.abs()
                }
            }
            None => lam.abs(),
        }
    };
    let lam_minus = abs(un - a);
    let lam_mid = abs(un);
    let lam_plus = abs(un + a);

    // Dissipation = sum over waves of alpha * |lambda| * r.
    let mut diss = [0.0; MAX_DIM + 2];
    let add_acoustic = |diss: &mut [f64; MAX_DIM + 2], alpha: f64, lam: f64, sgn: f64| {
        let w = alpha * lam;
        diss[0] += w;
        for b in 0..dim {
            diss[1 + b] += w * u[b];
        }
        diss[1 + axis] += w * sgn * a;
        diss[dim + 1] += w * (h + sgn * un * a);
    };
    add_acoustic(&mut diss, alpha_minus, lam_minus, -1.0);
    add_acoustic(&mut diss, alpha_plus, lam_plus, 1.0);
    {
        let w = alpha_entropy * lam_mid;
        diss[0] += w;
        for b in 0..dim {
            diss[1 + b] += w * u[b];
        }
        diss[dim + 1] += w * 0.5 * q2;
    }
    if dim == 2 {
        let t_axis = 1 - axis;
        let d_ut = prim_r[1 + t_axis] - prim_l[1 + t_axis];
        let w = rho_roe * d_ut * lam_mid;
        diss[1 + t_axis] += w;
        diss[dim + 1] += w * u[t_axis];
    }

    for v in 0..c {
        out[v] = 0.5 * (fl[v] + fr[v]) - 0.5 * diss[v];
    }
    Ok(())
}

#[inline]
fn enthalpy(prim: &[f64], dim: usize, gamma: f64) -> f64 {
    let mut ke = 0.0;
    for a in 0..dim {
        ke += prim[1 + a] * prim[1 + a];
    }
    gamma / (gamma - 1.0) * prim[dim + 1] / prim[0] + 0.5 * ke
}

/// MUSCL/Roe semi-discretization with ghost-cell boundary closure.
pub struct EulerFv {
    mesh: Arc<Mesh>,
    gas: GasModel,
    bc: BoundarySpec,
    opts: EulerOptions,
    /// Dirichlet ghost rows per side: `[layer][transverse][var]`, two layers.
    ghost: [Vec<f64>; 2 * MAX_DIM],
    parallel_threshold: usize,
}

impl EulerFv {
    pub fn new(
        mesh: Arc<Mesh>,
        gas: GasModel,
        bc: BoundarySpec,
        ic: &dyn Fn([f64; MAX_DIM]) -> PrimitiveRow,
        opts: EulerOptions,
    ) -> Self {
        let dim = mesh.dim();
        let c = dim + 2;
        let mut ghost: [Vec<f64>; 2 * MAX_DIM] = Default::default();
        for axis in 0..dim {
            for hi in [false, true] {
                let side = 2 * axis + hi as usize;
                if bc.side(axis, hi) != BoundaryCondition::DirichletFromIc {
                    continue;
                }
                let n_t = if dim == 2 {
                    mesh.cells_along(1 - axis)
                } else {
                    1
                };
                let mut rows = vec![0.0; 2 * n_t * c];
                for layer in 1..=2usize {
                    for t in 0..n_t {
                        let mut x = [0.0; MAX_DIM];
                        if dim == 2 {
                            x[1 - axis] = mesh.lo(1 - axis) + (t as f64 + 0.5) * mesh.width(1 - axis);
                        }
                        x[axis] = if hi {
                            mesh.hi(axis) + (layer as f64 - 0.5) * mesh.width(axis)
                        } else {
                            mesh.lo(axis) - (layer as f64 - 0.5) * mesh.width(axis)
                        };
                        let prim = ic(x);
                        let at = ((layer - 1) * n_t + t) * c;
                        primitive_to_conservative_row(
                            &prim[..c],
                            dim,
                            gas.gamma,
                            &mut rows[at..at + c],
                        );
                    }
                }
                ghost[side] = rows;
            }
        }
        EulerFv {
            mesh,
            gas,
            bc,
            opts,
            ghost,
            parallel_threshold: 4096,
        }
    }

    pub fn gas(&self) -> GasModel {
        self.gas
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.bc
    }

    pub fn options(&self) -> EulerOptions {
        self.opts
    }

    /// Ghost row `layer` cells past the boundary on `(axis, hi)` at transverse
    /// position `t`; wall ghosts mirror the interior through `view`.
    #[inline]
    fn ghost_row(
        &self,
        view: &StateView,
        axis: usize,
        hi: bool,
        layer: usize,
        t: usize,
        row: &mut [f64],
    ) {
        let dim = self.mesh.dim();
        let c = dim + 2;
        let side = 2 * axis + hi as usize;
        match self.bc.side(axis, hi) {
            BoundaryCondition::DirichletFromIc => {
                let n_t = if dim == 2 {
                    self.mesh.cells_along(1 - axis)
                } else {
                    1
                };
                let at = ((layer - 1) * n_t + t) * c;
                row.copy_from_slice(&self.ghost[side][at..at + c]);
            }
            BoundaryCondition::Wall => {
                let n_a = self.mesh.cells_along(axis);
                let pos = if hi { n_a - layer } else { layer - 1 };
                let mut ij = [0usize; MAX_DIM];
                ij[axis] = pos;
                if dim == 2 {
                    ij[1 - axis] = t;
                }
                let interior = self.mesh.cell_at(ij);
                row.copy_from_slice(view.cell(interior));
                row[1 + axis] = -row[1 + axis];
            }
        }
    }

    /// RHS of a single cell: minus the face-flux divergence over all axes.
    fn rhs_one_cell(&self, view: &StateView, cell: usize, out: &mut [f64]) -> Result<(), SolveError> {
        let dim = self.mesh.dim();
        let c = dim + 2;
        let gamma = self.gas.gamma;
        out[..c].fill(0.0);

        let ij = self.mesh.coords(cell);
        let nx = self.mesh.cells_along(0);

        let mut line = [[0.0f64; MAX_DIM + 2]; 5];
        let mut work = [[0.0f64; MAX_DIM + 2]; 5];
        let mut prim_l = [0.0f64; MAX_DIM + 2];
        let mut prim_r = [0.0f64; MAX_DIM + 2];
        let mut flux_lo = [0.0f64; MAX_DIM + 2];
        let mut flux_hi = [0.0f64; MAX_DIM + 2];

        for axis in 0..dim {
            let n_a = self.mesh.cells_along(axis);
            let stride = if axis == 0 { 1 } else { nx };
            let pos = ij[axis] as isize;
            let t = if dim == 2 { ij[1 - axis] } else { 0 };

            // Gather the 5-cell line, substituting ghost rows past the ends.
            for (s, off) in (-2isize..=2).enumerate() {
                let q = pos + off;
                if q < 0 {
                    let layer = (-q) as usize;
                    let mut row = [0.0; MAX_DIM + 2];
                    self.ghost_row(view, axis, false, layer, t, &mut row[..c]);
                    line[s][..c].copy_from_slice(&row[..c]);
                } else if q >= n_a as isize {
                    let layer = (q - n_a as isize + 1) as usize;
                    let mut row = [0.0; MAX_DIM + 2];
                    self.ghost_row(view, axis, true, layer, t, &mut row[..c]);
                    line[s][..c].copy_from_slice(&row[..c]);
                } else {
                    let n = (cell as isize + off * stride as isize) as usize;
                    line[s][..c].copy_from_slice(view.cell(n));
                }
            }

            // Reconstruct in the requested variable set.
            let limit_prim = self.opts.limit == LimitVariables::Primitive;
            if limit_prim {
                for s in 0..5 {
                    let local = (cell as isize + (s as isize - 2) * stride as isize).max(0) as usize;
                    let mut prim = [0.0; MAX_DIM + 2];
                    conservative_to_primitive_row(&line[s][..c], dim, gamma, local, &mut prim[..c])?;
                    work[s][..c].copy_from_slice(&prim[..c]);
                }
            } else {
                work = line;
            }

            // Face values of cells -1, 0, +1 along the line.
            let mut lo_of = [[0.0f64; MAX_DIM + 2]; 3];
            let mut hi_of = [[0.0f64; MAX_DIM + 2]; 3];
            for s in 0..3 {
                match self.opts.slope {
                    SlopeMode::Muscl => {
                        let mut lo = [0.0; MAX_DIM + 2];
                        let mut hi = [0.0; MAX_DIM + 2];
                        muscl_reconstruct(
                            &work[s][..c],
                            &work[s + 1][..c],
                            &work[s + 2][..c],
                            &mut lo[..c],
                            &mut hi[..c],
                        );
                        lo_of[s] = lo;
                        hi_of[s] = hi;
                    }
                    SlopeMode::FirstOrder => {
                        lo_of[s] = work[s + 1];
                        hi_of[s] = work[s + 1];
                    }
                }
            }

            // Low face joins cell -1 to cell 0; high face joins cell 0 to +1.
            for (is_hi, l_state, r_state) in
                [(false, hi_of[0], lo_of[1]), (true, hi_of[1], lo_of[2])]
            {
                let (pl, pr): (&[f64], &[f64]) = if limit_prim {
                    for face in [&l_state, &r_state] {
                        if !(face[0] > 0.0) || !(face[dim + 1] > 0.0) {
                            return Err(SolveError::Positivity {
                                cell,
                                what: "reconstructed face state",
                            });
                        }
                    }
                    (&l_state[..c], &r_state[..c])
                } else {
                    conservative_to_primitive_row(&l_state[..c], dim, gamma, cell, &mut prim_l[..c])?;
                    conservative_to_primitive_row(&r_state[..c], dim, gamma, cell, &mut prim_r[..c])?;
                    (&prim_l[..c], &prim_r[..c])
                };
                let out_flux = if is_hi { &mut flux_hi } else { &mut flux_lo };
                roe_flux(
                    pl,
                    pr,
                    axis,
                    dim,
                    self.gas,
                    self.opts.entropy_fix,
                    cell,
                    cell,
                    &mut out_flux[..c],
                )?;
            }

            let inv_h = 1.0 / self.mesh.width(axis);
            for v in 0..c {
                out[v] -= (flux_hi[v] - flux_lo[v]) * inv_h;
            }
        }
        Ok(())
    }
}

impl SemiDiscrete for EulerFv {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn n_vars(&self) -> usize {
        self.mesh.dim() + 2
    }

    fn stencil_radius(&self) -> usize {
        2
    }

    fn rhs_cells(
        &self,
        _t: f64,
        view: StateView,
        cells: Option<&[usize]>,
        out: &mut [f64],
    ) -> Result<(), SolveError> {
        let c = self.n_vars();
        let n = cells.map_or(self.mesh.n_cells(), |s| s.len());
        assert_eq!(out.len(), n * c);

        let run_seq = |out: &mut [f64]| -> Result<(), SolveError> {
            match cells {
                None => {
                    for (cell, row) in out.chunks_exact_mut(c).enumerate() {
                        self.rhs_one_cell(&view, cell, row)?;
                    }
                }
                Some(list) => {
                    for (&cell, row) in list.iter().zip(out.chunks_exact_mut(c)) {
                        self.rhs_one_cell(&view, cell, row)?;
                    }
                }
            }
            Ok(())
        };

        if n < self.parallel_threshold {
            return run_seq(out);
        }

        // Parallel rows; errors reduced to the lowest failing cell so the
        // reported failure is deterministic.
        let failures: Vec<(usize, SolveError)> = match cells {
            None => out
                .par_chunks_exact_mut(c)
                .enumerate()
                .filter_map(|(cell, row)| {
                    self.rhs_one_cell(&view, cell, row)
                        .err()
                        .map(|e| (cell, e))
                })
                .collect(),
            Some(list) => out
                .par_chunks_exact_mut(c)
                .zip(list.par_iter())
                .filter_map(|(row, &cell)| {
                    self.rhs_one_cell(&view, cell, row)
                        .err()
                        .map(|e| (cell, e))
                })
                .collect(),
        };
        match failures.into_iter().min_by_key(|(cell, _)| *cell) {
            Some((_, e)) => Err(e),
            None => Ok(()),
        }
    }

    fn row_admissible(&self, row: &[f64]) -> bool {
        row_admissible(row, self.mesh.dim())
    }
}
