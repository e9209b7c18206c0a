//! Time-integration checks: BDF2 convergence order, Newton behavior on
//! linear systems, steady-state preservation, and the equivalences between
//! full and restricted solves.

use std::sync::Arc;

use arom_core::bdf::BdfScheme;
use arom_core::error::SolveError;
use arom_core::euler::{BoundarySpec, EulerFv, EulerOptions, GasModel, StencilSpec};
use arom_core::mesh::Mesh;
use arom_core::sampling::assemble_sampling;
use arom_core::solve::{
    full_solve, newton_solve, partial_solve, LinearSolverKind, NewtonSettings, NewtonWorkspace,
    SubiterationSettings, SystemShape,
};
use arom_core::state::primitive_to_conservative_row;
use arom_core::system::{SemiDiscrete, StateView, ABSENT};
use arom_core::{BdfResidual, OdeimPoints, ReducedModel};
use nalgebra::{DMatrix, DVector};

const GAMMA: f64 = 1.4;

/// Scalar linear ODE du/dt = lambda * u on a single cell.
struct LinearOde {
    mesh: Mesh,
    lambda: f64,
}

impl SemiDiscrete for LinearOde {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn n_vars(&self) -> usize {
        1
    }
    fn stencil_radius(&self) -> usize {
        1
    }
    fn rhs_cells(
        &self,
        _t: f64,
        view: StateView,
        cells: Option<&[usize]>,
        out: &mut [f64],
    ) -> Result<(), SolveError> {
        match cells {
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.lambda * view.cell(i)[0];
                }
            }
            Some(list) => {
                for (&cell, o) in list.iter().zip(out.iter_mut()) {
                    *o = self.lambda * view.cell(cell)[0];
                }
            }
        }
        Ok(())
    }
}

fn newton_1d() -> NewtonSettings {
    NewtonSettings::for_dim(1)
}

/// Integrates the linear ODE over [0, 1] with BDF2 (BDF1 startup) and
/// returns the final value.
fn integrate_linear(lambda: f64, n_steps: usize) -> f64 {
    let sys = LinearOde {
        mesh: Mesh::line(1, 0.0, 1.0).unwrap(),
        lambda,
    };
    let dt = 1.0 / n_steps as f64;
    let bdf1 = BdfScheme::new(1, dt).unwrap();
    let bdf2 = BdfScheme::new(2, dt).unwrap();
    let shape = SystemShape::full(&sys, LinearSolverKind::BandedDirect);
    let mut ws = NewtonWorkspace::new();
    let settings = newton_1d();

    let mut hist: Vec<Vec<f64>> = vec![vec![1.0]];
    for k in 1..=n_steps {
        let t_k = k as f64 * dt;
        let (scheme, history): (&BdfScheme, Vec<&[f64]>) = if k == 1 {
            (&bdf1, vec![hist[0].as_slice()])
        } else {
            (
                &bdf2,
                vec![hist[k - 2].as_slice(), hist[k - 1].as_slice()],
            )
        };
        let guess = hist[k - 1].clone();
        let (v, _) = full_solve(&sys, scheme, t_k, &history, &guess, &settings, &shape, &mut ws)
            .unwrap();
        hist.push(v);
    }
    hist[n_steps][0]
}

#[test]
fn bdf2_convergence_order_is_two() {
    let lambda = -1.0;
    let exact = (-1.0f64).exp();
    let errors: Vec<f64> = [40usize, 80, 160]
        .iter()
        .map(|&n| (integrate_linear(lambda, n) - exact).abs())
        .collect();
    let order1 = (errors[0] / errors[1]).log2();
    let order2 = (errors[1] / errors[2]).log2();
    assert!(
        (1.9..=2.1).contains(&order1) && (1.9..=2.1).contains(&order2),
        "measured orders {order1:.3}, {order2:.3}"
    );
}

/// Upwind advection with a fixed inflow value; the system is linear in the
/// state, so Newton lands in one iteration.
struct UpwindAdvection {
    mesh: Mesh,
    speed: f64,
}

impl SemiDiscrete for UpwindAdvection {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }
    fn n_vars(&self) -> usize {
        1
    }
    fn stencil_radius(&self) -> usize {
        1
    }
    fn rhs_cells(
        &self,
        _t: f64,
        view: StateView,
        cells: Option<&[usize]>,
        out: &mut [f64],
    ) -> Result<(), SolveError> {
        let dx = self.mesh.width(0);
        let eval = |cell: usize| -> f64 {
            let here = view.cell(cell)[0];
            let upwind = if cell == 0 { 1.0 } else { view.cell(cell - 1)[0] };
            -self.speed * (here - upwind) / dx
        };
        match cells {
            None => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = eval(i);
                }
            }
            Some(list) => {
                for (&cell, o) in list.iter().zip(out.iter_mut()) {
                    *o = eval(cell);
                }
            }
        }
        Ok(())
    }
}

#[test]
fn newton_converges_in_one_iteration_on_linear_system() {
    let sys = UpwindAdvection {
        mesh: Mesh::line(24, 0.0, 1.0).unwrap(),
        speed: 1.0,
    };
    let scheme = BdfScheme::new(1, 0.01).unwrap();
    let shape = SystemShape::full(&sys, LinearSolverKind::BandedDirect);
    let mut ws = NewtonWorkspace::new();
    let prev: Vec<f64> = (0..24).map(|i| (i as f64 / 24.0).sin() + 1.5).collect();
    let (_, report) = full_solve(
        &sys,
        &scheme,
        0.01,
        &[&prev],
        &prev,
        &newton_1d(),
        &shape,
        &mut ws,
    )
    .unwrap();
    assert_eq!(report.iterations, 1, "linear problem needs one Newton step");
}

fn quiescent_problem_2d() -> (Arc<Mesh>, EulerFv, Vec<f64>) {
    let mesh = Arc::new(Mesh::rect(10, 10, [0.0, 0.0], [0.3, 0.3]).unwrap());
    let quiet = [1.0, 0.0, 0.0, 1.0];
    let sys = EulerFv::new(
        mesh.clone(),
        GasModel { gamma: GAMMA },
        BoundarySpec::walls(),
        &move |_| quiet,
        EulerOptions::default(),
    );
    let c = 4;
    let mut flat = vec![0.0; mesh.n_cells() * c];
    for cell in 0..mesh.n_cells() {
        primitive_to_conservative_row(&quiet, 2, GAMMA, &mut flat[cell * c..(cell + 1) * c]);
    }
    (mesh, sys, flat)
}

#[test]
fn steady_state_is_preserved_by_full_solve() {
    let (_mesh, sys, flat) = quiescent_problem_2d();
    let scheme = BdfScheme::new(2, 1e-3).unwrap();
    let shape = SystemShape::full(&sys, LinearSolverKind::GmresBlockJacobi);
    let mut ws = NewtonWorkspace::new();
    let (v, report) = full_solve(
        &sys,
        &scheme,
        1e-3,
        &[&flat, &flat],
        &flat,
        &NewtonSettings::for_dim(2),
        &shape,
        &mut ws,
    )
    .unwrap();
    assert_eq!(report.iterations, 0, "steady state already satisfies R = 0");
    assert_eq!(v, flat);
}

fn sod_1d_system(n: usize) -> (Arc<Mesh>, EulerFv, Vec<f64>) {
    let mesh = Arc::new(Mesh::line(n, 0.0, 1.0).unwrap());
    let ic = |x: [f64; 2]| -> [f64; 4] {
        if x[0] < 0.5 {
            [1.0, 0.0, 1.0, 0.0]
        } else {
            [0.125, 0.0, 0.1, 0.0]
        }
    };
    let sys = EulerFv::new(
        mesh.clone(),
        GasModel { gamma: GAMMA },
        BoundarySpec::dirichlet_from_ic(),
        &ic,
        EulerOptions::default(),
    );
    let c = 3;
    let mut flat = vec![0.0; mesh.n_cells() * c];
    for cell in 0..mesh.n_cells() {
        let p = ic(mesh.center(cell));
        primitive_to_conservative_row(&p[..3], 1, GAMMA, &mut flat[cell * c..(cell + 1) * c]);
    }
    (mesh, sys, flat)
}

/// A zero-mode reduced model: reconstruction falls back to psi.
fn empty_model(n_dof: usize) -> ReducedModel {
    ReducedModel {
        phi: DMatrix::zeros(n_dof, 0),
        psi: DVector::zeros(n_dof),
        singular_values: vec![],
        rank_deficient: false,
        window: 2,
        }
}

#[test]
fn partial_solve_with_all_cells_matches_full_solve_bitwise() {
    let (mesh, sys, ic) = sod_1d_system(60);
    let c = 3;
    let scheme = BdfScheme::new(1, 2e-4).unwrap();
    let settings = newton_1d();

    // One startup step to get off the discontinuous IC.
    let shape = SystemShape::full(&sys, LinearSolverKind::BandedDirect);
    let mut ws = NewtonWorkspace::new();
    let (q1, _) = full_solve(&sys, &scheme, 2e-4, &[&ic], &ic, &settings, &shape, &mut ws).unwrap();

    // Reference full solve of step 2 with a fresh workspace.
    let scheme2 = BdfScheme::new(2, 2e-4).unwrap();
    let mut ws2 = NewtonWorkspace::new();
    let (q2_full, _) = full_solve(
        &sys,
        &scheme2,
        4e-4,
        &[&ic, &q1],
        &q1,
        &settings,
        &shape,
        &mut ws2,
    )
    .unwrap();

    // Partial solve with every cell sampled (empty neighbor set).
    let all: Vec<usize> = (0..mesh.n_cells()).collect();
    let points = OdeimPoints { cells: vec![0] };
    let sets = assemble_sampling(&all, &points, &mesh, StencilSpec { radius: 2 });
    assert!(sets.s_tilde.is_empty());
    let model = empty_model(mesh.n_cells() * c);
    let gappy = arom_core::basis::GappySolver::new(&model, &points, c).unwrap();
    let out = partial_solve(
        &sys,
        &scheme2,
        4e-4,
        &[&ic, &q1],
        &q1,
        &sets,
        &model,
        &gappy,
        &SubiterationSettings::default(),
        &settings,
    )
    .unwrap();

    assert_eq!(out.subiterations, 1, "no neighbors to refresh");
    assert_eq!(out.v_hat.len(), q2_full.len());
    for (a, b) in out.v_hat.iter().zip(q2_full.iter()) {
        assert_eq!(a.to_bits(), b.to_bits(), "degenerate sampling must be exact");
    }
}

#[test]
fn frozen_exact_neighbors_reproduce_full_solve_rows() {
    let (mesh, sys, ic) = sod_1d_system(80);
    let c = 3;
    let dt = 2e-4;
    let scheme = BdfScheme::new(1, dt).unwrap();
    let settings = newton_1d();
    let shape = SystemShape::full(&sys, LinearSolverKind::BandedDirect);
    let mut ws = NewtonWorkspace::new();
    let (q1, _) = full_solve(&sys, &scheme, dt, &[&ic], &ic, &settings, &shape, &mut ws).unwrap();

    // Sample a window around the waves; freeze neighbors at the exact
    // full-solve values and solve the restricted system.
    let sampled: Vec<usize> = (30..50).collect();
    let points = OdeimPoints { cells: vec![40] };
    let sets = assemble_sampling(&sampled, &points, &mesh, StencilSpec { radius: 2 });
    let shift = scheme.history_shift(&[&ic], Some(&sets.s_hat), c);
    let frozen: Vec<f64> = sets
        .s_tilde
        .iter()
        .flat_map(|&cell| q1[cell * c..(cell + 1) * c].to_vec())
        .collect();
    let mut res = BdfResidual::restricted(&sys, dt, scheme.dt_beta(), shift, &sets, frozen);
    let sub_shape = SystemShape::subset(&sys, &sets.s_hat, LinearSolverKind::BandedDirect);
    let mut sub_ws = NewtonWorkspace::new();
    let mut v_hat: Vec<f64> = sets
        .s_hat
        .iter()
        .flat_map(|&cell| ic[cell * c..(cell + 1) * c].to_vec())
        .collect();
    newton_solve(&mut res, &sub_shape, &settings, &mut sub_ws, &mut v_hat).unwrap();

    for (slot, &cell) in sets.s_hat.iter().enumerate() {
        for v in 0..c {
            let got = v_hat[slot * c + v];
            let want = q1[cell * c + v];
            assert!(
                (got - want).abs() < 5e-9,
                "cell {cell} var {v}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn restricted_solve_gmres_path_works_in_2d() {
    // Small 2D problem, scattered sampled set, GMRES-based restricted solve
    // with exact frozen neighbors.
    let mesh = Arc::new(Mesh::rect(12, 12, [0.0, 0.0], [0.3, 0.3]).unwrap());
    let ic = |x: [f64; 2]| -> [f64; 4] {
        if x[0] + x[1] <= 0.15 {
            [0.125, 0.0, 0.0, 0.14]
        } else {
            [1.0, 0.0, 0.0, 1.0]
        }
    };
    let sys = EulerFv::new(
        mesh.clone(),
        GasModel { gamma: GAMMA },
        BoundarySpec::walls(),
        &ic,
        EulerOptions::default(),
    );
    let c = 4;
    let mut flat = vec![0.0; mesh.n_cells() * c];
    for cell in 0..mesh.n_cells() {
        let p = ic(mesh.center(cell));
        primitive_to_conservative_row(&p, 2, GAMMA, &mut flat[cell * c..(cell + 1) * c]);
    }
    let dt = 3e-4;
    let scheme = BdfScheme::new(1, dt).unwrap();
    let settings = NewtonSettings::for_dim(2);
    let shape = SystemShape::full(&sys, LinearSolverKind::GmresBlockJacobi);
    let mut ws = NewtonWorkspace::new();
    let (q1, _) =
        full_solve(&sys, &scheme, dt, &[&flat], &flat, &settings, &shape, &mut ws).unwrap();

    let sampled: Vec<usize> = (0..mesh.n_cells())
        .filter(|&cell| {
            let x = mesh.center(cell);
            (x[0] + x[1] - 0.15).abs() < 0.06
        })
        .collect();
    assert!(!sampled.is_empty());
    let points = OdeimPoints {
        cells: vec![sampled[0]],
    };
    let sets = assemble_sampling(&sampled, &points, &mesh, StencilSpec { radius: 2 });
    let shift = scheme.history_shift(&[&flat], Some(&sets.s_hat), c);
    let frozen: Vec<f64> = sets
        .s_tilde
        .iter()
        .flat_map(|&cell| q1[cell * c..(cell + 1) * c].to_vec())
        .collect();
    let mut res = BdfResidual::restricted(&sys, dt, scheme.dt_beta(), shift, &sets, frozen);
    let sub_shape = SystemShape::subset(&sys, &sets.s_hat, LinearSolverKind::GmresBlockJacobi);
    let mut sub_ws = NewtonWorkspace::new();
    let mut v_hat: Vec<f64> = sets
        .s_hat
        .iter()
        .flat_map(|&cell| flat[cell * c..(cell + 1) * c].to_vec())
        .collect();
    newton_solve(&mut res, &sub_shape, &settings, &mut sub_ws, &mut v_hat).unwrap();

    for (slot, &cell) in sets.s_hat.iter().enumerate() {
        for v in 0..c {
            let got = v_hat[slot * c + v];
            let want = q1[cell * c + v];
            assert!(
                (got - want).abs() < 5e-7,
                "cell {cell} var {v}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn jacobian_shape_rejects_mismatched_sets() {
    let (mesh, sys, _) = sod_1d_system(20);
    let shape = SystemShape::full(&sys, LinearSolverKind::BandedDirect);
    assert!(shape.matches_cells(None));
    let subset: Vec<usize> = (3..9).collect();
    let sub = SystemShape::subset(&sys, &subset, LinearSolverKind::BandedDirect);
    assert!(sub.matches_cells(Some(&subset)));
    assert!(!sub.matches_cells(None));
    assert_eq!(sub.n_dof(), 6 * 3);
    let _ = mesh;
}

#[test]
fn scatter_view_reads_compact_buffer() {
    let loc = [ABSENT, 0, ABSENT, 1];
    let buf = [1.0, 2.0, 3.0, 4.0];
    let view = StateView::Scatter {
        loc: &loc,
        buf: &buf,
        c: 2,
    };
    assert_eq!(view.cell(1), &[1.0, 2.0]);
    assert_eq!(view.cell(3), &[3.0, 4.0]);
}
