//! Dynamic sampling: pointwise reconstruction error, relative-reconstruction-
//! error point selection, and assembly of the sampled / neighbor /
//! reconstructed cell sets with stencil closure.

use nalgebra::DVector;

use crate::basis::{OdeimPoints, ReducedModel};
use crate::euler::StencilSpec;
use crate::mesh::Mesh;

/// The three (plus two constituent) cell-index sets of one hybrid step.
///
/// Invariants: `s_hat = g ∪ p` as sets; `s_breve` is the complement of
/// `s_hat` (so `s_tilde ⊂ s_breve`); `s_tilde` is exactly the stencil
/// closure of `s_hat` minus `s_hat` itself. All lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingSets {
    pub s_hat: Vec<usize>,
    pub s_tilde: Vec<usize>,
    pub s_breve: Vec<usize>,
    pub g: Vec<usize>,
    pub p: Vec<usize>,
}

impl SamplingSets {
    pub fn n_sampled(&self) -> usize {
        self.s_hat.len()
    }

    /// Per-cell mask for dumps: 0 = reconstructed, 1 = sampled, 2 = neighbor.
    pub fn mask(&self, n_cells: usize) -> Vec<u8> {
        let mut mask = vec![0u8; n_cells];
        for &c in &self.s_hat {
            mask[c] = 1;
        }
        for &c in &self.s_tilde {
            mask[c] = 2;
        }
        mask
    }
}

/// RRE threshold in `(0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct RreSettings {
    pub delta: f64,
}

/// Squared deviation of a snapshot from its reduced reconstruction,
/// aggregated per cell (sum over the cell's variables).
pub fn pointwise_error(
    flat: &[f64],
    model: &ReducedModel,
    y: &DVector<f64>,
    n_vars: usize,
) -> Vec<f64> {
    let recon = model.reconstruct(y);
    debug_assert_eq!(recon.len(), flat.len());
    let n_cells = flat.len() / n_vars;
    let mut errs = vec![0.0; n_cells];
    for cell in 0..n_cells {
        let mut s = 0.0;
        for v in 0..n_vars {
            let d = flat[cell * n_vars + v] - recon[cell * n_vars + v];
            s += d * d;
        }
        errs[cell] = s;
    }
    errs
}

/// Cells that concentrate at least a `delta` fraction of the total error:
/// sorts errors descending (ties by ascending index) and keeps the smallest
/// prefix whose cumulative relative error reaches `delta`. All-zero errors
/// select nothing.
pub fn select_rre_points(cell_errors: &[f64], settings: RreSettings) -> Vec<usize> {
    let total: f64 = cell_errors.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..cell_errors.len()).collect();
    order.sort_by(|&a, &b| {
        cell_errors[b]
            .partial_cmp(&cell_errors[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut acc = 0.0;
    let mut n_g = 0;
    for &idx in &order {
        acc += cell_errors[idx];
        n_g += 1;
        if acc / total >= settings.delta {
            break;
        }
    }
    let mut g: Vec<usize> = order[..n_g].to_vec();
    g.sort_unstable();
    g
}

/// Builds the sampled/neighbor/reconstructed sets from the RRE cells and the
/// ODEIM cells: `s_hat = g ∪ p`, `s_breve` its complement, `s_tilde` the
/// in-domain axis-aligned stencil neighbors of `s_hat` not already sampled.
pub fn assemble_sampling(
    g: &[usize],
    points: &OdeimPoints,
    mesh: &Mesh,
    stencil: StencilSpec,
) -> SamplingSets {
    let n = mesh.n_cells();
    let mut in_hat = vec![false; n];
    for &c in g.iter().chain(points.cells.iter()) {
        in_hat[c] = true;
    }
    let s_hat: Vec<usize> = (0..n).filter(|&c| in_hat[c]).collect();

    let mut in_tilde = vec![false; n];
    for &c in &s_hat {
        for axis in 0..mesh.dim() {
            for off in 1..=stencil.radius as isize {
                for dir in [-off, off] {
                    if let Some(nb) = mesh.neighbor(c, axis, dir) {
                        if !in_hat[nb] {
                            in_tilde[nb] = true;
                        }
                    }
                }
            }
        }
    }
    let s_tilde: Vec<usize> = (0..n).filter(|&c| in_tilde[c]).collect();
    let s_breve: Vec<usize> = (0..n).filter(|&c| !in_hat[c]).collect();

    let mut g_sorted = g.to_vec();
    g_sorted.sort_unstable();
    g_sorted.dedup();
    let mut p_sorted = points.cells.clone();
    p_sorted.sort_unstable();

    SamplingSets {
        s_hat,
        s_tilde,
        s_breve,
        g: g_sorted,
        p: p_sorted,
    }
}
