//! Explicit Shapiro low-pass filters with a residual gate: filtered values
//! are kept only on cells where the step residual strictly decreases, so
//! filtering can remove spurious oscillations without touching resolved
//! features.

use crate::error::ParamError;
use crate::mesh::Mesh;

/// Supported symmetric filter orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterOrder {
    Two,
    Four,
    Six,
}

impl FilterOrder {
    pub fn from_u8(v: u8) -> Result<Self, ParamError> {
        match v {
            2 => Ok(FilterOrder::Two),
            4 => Ok(FilterOrder::Four),
            6 => Ok(FilterOrder::Six),
            other => Err(ParamError::new(format!(
                "filter order must be 2, 4 or 6, got {other}"
            ))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            FilterOrder::Two => 2,
            FilterOrder::Four => 4,
            FilterOrder::Six => 6,
        }
    }

    fn stencil(self) -> (&'static [f64], usize) {
        match self {
            FilterOrder::Two => (&[0.25, 0.5, 0.25], 1),
            FilterOrder::Four => (
                &[-1.0 / 16.0, 4.0 / 16.0, 10.0 / 16.0, 4.0 / 16.0, -1.0 / 16.0],
                2,
            ),
            FilterOrder::Six => (
                &[
                    1.0 / 64.0,
                    -6.0 / 64.0,
                    15.0 / 64.0,
                    44.0 / 64.0,
                    15.0 / 64.0,
                    -6.0 / 64.0,
                    1.0 / 64.0,
                ],
                3,
            ),
        }
    }

    pub fn radius(self) -> usize {
        self.stencil().1
    }
}

#[derive(Debug, Clone)]
pub struct FilterSettings {
    /// Orders applied in sequence; lower orders first.
    pub cascade: Vec<FilterOrder>,
    /// Minimum relative per-cell residual improvement to keep sweeping.
    pub eps_f: f64,
    /// Maximum sweeps per order.
    pub j_max_f: usize,
    /// Interpret `eps_f` relative to the pre-sweep residual (default) or as
    /// an absolute decrease.
    pub relative_threshold: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            cascade: vec![FilterOrder::Two, FilterOrder::Four, FilterOrder::Six],
            eps_f: 1e-2,
            j_max_f: 10,
            relative_threshold: true,
        }
    }
}

impl FilterSettings {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.eps_f > 0.0) {
            return Err(ParamError::new("filter.eps_f must be positive"));
        }
        if self.j_max_f < 1 {
            return Err(ParamError::new("filter.j_max_f must be at least 1"));
        }
        Ok(())
    }
}

/// One-dimensional Shapiro filter of a line of values; line ends are closed
/// by zeroth-order extrapolation (end values repeated past the boundary).
pub fn shapiro_filter_line(values: &[f64], order: FilterOrder, out: &mut [f64]) {
    let (coeffs, radius) = order.stencil();
    let n = values.len();
    assert_eq!(out.len(), n);
    if n == 0 {
        return;
    }
    for i in 0..n {
        let mut s = 0.0;
        for (k, &w) in coeffs.iter().enumerate() {
            let j = i as isize + k as isize - radius as isize;
            let j = j.clamp(0, n as isize - 1) as usize;
            s += w * values[j];
        }
        out[i] = s;
    }
}

/// Filters every conserved variable along every axis (axes applied
/// sequentially) over the whole mesh.
pub fn filter_flat(mesh: &Mesh, c: usize, flat: &[f64], order: FilterOrder) -> Vec<f64> {
    let mut current = flat.to_vec();
    let mut next = vec![0.0; flat.len()];
    for axis in 0..mesh.dim() {
        filter_axis(mesh, c, &current, axis, order, &mut next);
        std::mem::swap(&mut current, &mut next);
    }
    current
}

fn filter_axis(mesh: &Mesh, c: usize, flat: &[f64], axis: usize, order: FilterOrder, out: &mut [f64]) {
    let (coeffs, radius) = order.stencil();
    let n_a = mesh.cells_along(axis) as isize;
    let nx = mesh.cells_along(0);
    let stride = (if axis == 0 { 1 } else { nx }) as isize;
    for cell in 0..mesh.n_cells() {
        let pos = mesh.coords(cell)[axis] as isize;
        for v in 0..c {
            let mut s = 0.0;
            for (k, &w) in coeffs.iter().enumerate() {
                let off = k as isize - radius as isize;
                let q = (pos + off).clamp(0, n_a - 1);
                let nb = (cell as isize + (q - pos) * stride) as usize;
                s += w * flat[nb * c + v];
            }
            out[cell * c + v] = s;
        }
    }
}

/// Recomputes the filtered values only at `cells` (values elsewhere in `vf`
/// stay as they are). Matches `filter_flat` bit-for-bit on those cells.
fn filter_cells_into(
    mesh: &Mesh,
    c: usize,
    flat: &[f64],
    order: FilterOrder,
    cells: &[usize],
    vf: &mut [f64],
) {
    if mesh.dim() == 1 {
        let (coeffs, radius) = order.stencil();
        let n_a = mesh.cells_along(0) as isize;
        for &cell in cells {
            for v in 0..c {
                let mut s = 0.0;
                for (k, &w) in coeffs.iter().enumerate() {
                    let q = (cell as isize + k as isize - radius as isize).clamp(0, n_a - 1);
                    s += w * flat[q as usize * c + v];
                }
                vf[cell * c + v] = s;
            }
        }
        return;
    }
    // 2D: x-pass values are needed on the y-stencil of each requested cell;
    // compute them on the fly (duplicated work is fine, the sets are small).
    let (coeffs, radius) = order.stencil();
    let nx = mesh.cells_along(0) as isize;
    let ny = mesh.cells_along(1) as isize;
    let xpass = |i: isize, j: isize, v: usize| -> f64 {
        let mut s = 0.0;
        for (k, &w) in coeffs.iter().enumerate() {
            let q = (i + k as isize - radius as isize).clamp(0, nx - 1);
            s += w * flat[(q + nx * j) as usize * c + v];
        }
        s
    };
    for &cell in cells {
        let ij = mesh.coords(cell);
        let (i, j) = (ij[0] as isize, ij[1] as isize);
        for v in 0..c {
            let mut s = 0.0;
            for (k, &w) in coeffs.iter().enumerate() {
                let q = (j + k as isize - radius as isize).clamp(0, ny - 1);
                s += w * xpass(i, q, v);
            }
            vf[cell * c + v] = s;
        }
    }
}

/// Per-cell residual magnitudes of a candidate state. Implementations write
/// `f64::INFINITY` for cells whose residual cannot be evaluated (e.g. a
/// non-physical stencil) instead of failing.
pub trait CellResidual {
    fn n_cells(&self) -> usize;
    fn residual_cells(&mut self, flat: &[f64], cells: &[usize], out: &mut [f64]);
    fn row_admissible(&self, row: &[f64]) -> bool;
    /// Spatial coupling radius of the residual (how far a value change can
    /// move a residual).
    fn stencil_radius(&self) -> usize;
}

#[derive(Debug, Clone, Default)]
pub struct OrderReport {
    pub order: u8,
    pub sweeps: usize,
    pub kept_per_sweep: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct FilterReport {
    pub orders: Vec<OrderReport>,
}

impl FilterReport {
    pub fn cells_touched(&self) -> usize {
        self.orders
            .iter()
            .map(|o| o.kept_per_sweep.iter().sum::<usize>())
            .sum()
    }
}

/// Residual-gated filtering of `flat` in place.
///
/// Per order of the cascade, up to `j_max_f` sweeps: filter everywhere,
/// compare per-cell residuals, keep strictly improving admissible cells, and
/// verify the mixed state afterwards, reverting kept cells near any cell
/// whose residual rose. The per-cell residual of the output therefore never
/// exceeds the input's.
pub fn residual_gated_filter(
    mesh: &Mesh,
    c: usize,
    flat: &mut [f64],
    residual: &mut dyn CellResidual,
    settings: &FilterSettings,
) -> FilterReport {
    let n = mesh.n_cells();
    let mut report = FilterReport::default();
    if settings.cascade.is_empty() {
        return report;
    }
    let reach = residual.stencil_radius();

    let all_cells: Vec<usize> = (0..n).collect();
    let mut r_base = vec![0.0; n];
    residual.residual_cells(flat, &all_cells, &mut r_base);

    let mut vf = vec![0.0; flat.len()];
    let mut r_new = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for &order in &settings.cascade {
        let mut order_report = OrderReport {
            order: order.as_u8(),
            ..Default::default()
        };
        // Cells whose filtered value / residual is out of date; everything on
        // the first sweep of an order.
        let mut stale_filter: Option<Vec<usize>> = None;

        for _sweep in 0..settings.j_max_f {
            match &stale_filter {
                None => {
                    vf.copy_from_slice(&filter_flat(mesh, c, flat, order));
                    residual.residual_cells(&vf, &all_cells, &mut r_new);
                }
                Some(changed) => {
                    // The filter footprint is a square (axes are applied in
                    // sequence), the residual adds its cross stencil on top.
                    let refilter = expand_square(mesh, changed, order.radius());
                    filter_cells_into(mesh, c, flat, order, &refilter, &mut vf);
                    let recheck = expand_cross(mesh, &refilter, reach);
                    residual.residual_cells(&vf, &recheck, &mut scratch[..recheck.len()]);
                    for (slot, &cell) in recheck.iter().enumerate() {
                        r_new[cell] = scratch[slot];
                    }
                }
            }

            // Gate: strict decrease and an admissible filtered row.
            let mut kept: Vec<usize> = Vec::new();
            for cell in 0..n {
                if r_new[cell] < r_base[cell]
                    && residual.row_admissible(&vf[cell * c..(cell + 1) * c])
                {
                    kept.push(cell);
                }
            }
            if kept.is_empty() {
                order_report.sweeps += 1;
                order_report.kept_per_sweep.push(0);
                break;
            }

            // Mix, remembering the original rows for possible reverts.
            let pre_rows: Vec<f64> = kept
                .iter()
                .flat_map(|&cell| flat[cell * c..(cell + 1) * c].to_vec())
                .collect();
            let pre_base: Vec<f64> = kept.iter().map(|&cell| r_base[cell]).collect();
            for &cell in &kept {
                flat[cell * c..(cell + 1) * c].copy_from_slice(&vf[cell * c..(cell + 1) * c]);
            }

            // Verify the mixed state against the (un-mutated) pre-sweep
            // baseline; revert kept cells adjacent to any cell whose true
            // residual exceeds it. The kept set shrinks every pass, so this
            // terminates. A cell's residual changes only when a value inside
            // its stencil changes, and every change queues a re-evaluation,
            // so each touched cell's latest reading reflects the final state.
            let mut in_kept = vec![false; n];
            for &cell in &kept {
                in_kept[cell] = true;
            }
            let mut touched: Vec<usize> = Vec::new();
            let mut is_touched = vec![false; n];
            let mut r_latest = vec![0.0; n];
            let mut changed = kept.clone();
            loop {
                let affected = expand_cross(mesh, &changed, reach);
                residual.residual_cells(flat, &affected, &mut scratch[..affected.len()]);
                let mut violations: Vec<usize> = Vec::new();
                for (slot, &cell) in affected.iter().enumerate() {
                    r_latest[cell] = scratch[slot];
                    if !is_touched[cell] {
                        is_touched[cell] = true;
                        touched.push(cell);
                    }
                    if scratch[slot] > r_base[cell] {
                        violations.push(cell);
                    }
                }
                if violations.is_empty() {
                    break;
                }
                let near = expand_cross(mesh, &violations, reach);
                let mut reverted: Vec<usize> = Vec::new();
                for &cell in &near {
                    if in_kept[cell] {
                        in_kept[cell] = false;
                        reverted.push(cell);
                    }
                }
                if reverted.is_empty() {
                    // Violations can only come from changed cells in range;
                    // revert everything still kept as a safety net.
                    for &cell in &kept {
                        if in_kept[cell] {
                            in_kept[cell] = false;
                            reverted.push(cell);
                        }
                    }
                }
                for &cell in &reverted {
                    let at = kept.iter().position(|&k| k == cell).unwrap();
                    flat[cell * c..(cell + 1) * c]
                        .copy_from_slice(&pre_rows[at * c..(at + 1) * c]);
                }
                changed = reverted;
            }
            for &cell in &touched {
                r_base[cell] = r_latest[cell];
            }

            let final_kept: Vec<usize> = kept.iter().copied().filter(|&cl| in_kept[cl]).collect();
            order_report.sweeps += 1;
            order_report.kept_per_sweep.push(final_kept.len());
            if final_kept.is_empty() {
                break;
            }

            // Stop when the best per-cell improvement falls under eps_f.
            let mut best = 0.0f64;
            for &cell in &final_kept {
                let at = kept.iter().position(|&k| k == cell).unwrap();
                let pre = pre_base[at];
                let post = r_base[cell];
                let impr = if pre.is_infinite() {
                    if post.is_finite() {
                        1.0
                    } else {
                        0.0
                    }
                } else if settings.relative_threshold {
                    if pre > 0.0 {
                        (pre - post) / pre
                    } else {
                        0.0
                    }
                } else {
                    pre - post
                };
                best = best.max(impr);
            }
            if best < settings.eps_f {
                break;
            }
            stale_filter = Some(final_kept);
        }
        report.orders.push(order_report);
    }
    report
}

/// Cells within an axis-aligned square of `radius` around any cell of `set`
/// (the set itself included), sorted.
fn expand_square(mesh: &Mesh, set: &[usize], radius: usize) -> Vec<usize> {
    let first = expand_axis(mesh, set, 0, radius);
    if mesh.dim() == 1 {
        return first;
    }
    expand_axis(mesh, &first, 1, radius)
}

/// Cells within the axis-aligned cross of `radius` around any cell of `set`
/// (the set itself included), sorted.
fn expand_cross(mesh: &Mesh, set: &[usize], radius: usize) -> Vec<usize> {
    let mut mark = vec![false; mesh.n_cells()];
    for &cell in set {
        mark[cell] = true;
        for axis in 0..mesh.dim() {
            for off in 1..=radius as isize {
                for dir in [-off, off] {
                    if let Some(nb) = mesh.neighbor(cell, axis, dir) {
                        mark[nb] = true;
                    }
                }
            }
        }
    }
    mark.iter()
        .enumerate()
        .filter_map(|(cell, &m)| m.then_some(cell))
        .collect()
}

fn expand_axis(mesh: &Mesh, set: &[usize], axis: usize, radius: usize) -> Vec<usize> {
    let mut mark = vec![false; mesh.n_cells()];
    for &cell in set {
        mark[cell] = true;
        for off in 1..=radius as isize {
            for dir in [-off, off] {
                if let Some(nb) = mesh.neighbor(cell, axis, dir) {
                    mark[nb] = true;
                }
            }
        }
    }
    mark.iter()
        .enumerate()
        .filter_map(|(cell, &m)| m.then_some(cell))
        .collect()
}
