//! Bundled experiments and their reference parameters.

use std::sync::Arc;

use anyhow::{bail, Result};
use arom_core::{
    AromConfig, BoundarySpec, EulerOptions, FilterSettings, FullSolvePeriod, GasModel, Mesh,
    NewtonSettings, Problem, SubiterationSettings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetKind {
    Sod,
    Implosion,
    Custom,
}

impl PresetKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sod" => Ok(PresetKind::Sod),
            "implosion" => Ok(PresetKind::Implosion),
            "custom" => Ok(PresetKind::Custom),
            other => bail!("unknown preset '{other}' (expected sod, implosion or custom)"),
        }
    }
}

/// Sod shock tube: 1D, Dirichlet-from-IC boundaries, diaphragm at 0.5.
pub struct SodSpec {
    pub nx: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub diaphragm: f64,
    pub left: [f64; 3],
    pub right: [f64; 3],
    pub gamma: f64,
}

impl Default for SodSpec {
    fn default() -> Self {
        SodSpec {
            nx: 499,
            x_lo: 0.0,
            x_hi: 1.0,
            diaphragm: 0.5,
            left: [1.0, 0.0, 1.0],
            right: [0.125, 0.0, 0.1],
            gamma: 1.4,
        }
    }
}

impl SodSpec {
    pub fn problem(&self) -> Result<Problem> {
        let mesh = Arc::new(Mesh::line(self.nx, self.x_lo, self.x_hi)?);
        let (d, l, r) = (self.diaphragm, self.left, self.right);
        Ok(Problem {
            name: "sod".into(),
            mesh,
            gas: GasModel::new(self.gamma)?,
            boundary: BoundarySpec::dirichlet_from_ic(),
            euler: EulerOptions::default(),
            ic: Box::new(move |x| {
                if x[0] < d {
                    [l[0], l[1], l[2], 0.0]
                } else {
                    [r[0], r[1], r[2], 0.0]
                }
            }),
        })
    }

    pub fn config(&self) -> AromConfig {
        AromConfig {
            window: 5,
            modes: 4,
            full_period: FullSolvePeriod::Every(5),
            delta: 0.80,
            odeim_points: 8,
            sub: SubiterationSettings::default(),
            filter: FilterSettings::default(),
            newton: NewtonSettings::for_dim(1),
            bdf_order: 2,
            n_steps: 999,
            t_final: 0.2,
        }
    }
}

/// Box implosion: 2D, reflective walls, low-pressure corner triangle.
pub struct ImplosionSpec {
    pub nx: usize,
    pub ny: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Cells with `x + y <= threshold` start in the low state.
    pub threshold: f64,
    pub inside: [f64; 2],  // rho, p
    pub outside: [f64; 2], // rho, p
    pub gamma: f64,
}

impl Default for ImplosionSpec {
    fn default() -> Self {
        ImplosionSpec {
            nx: 100,
            ny: 100,
            lo: [0.0, 0.0],
            hi: [0.3, 0.3],
            threshold: 0.15,
            inside: [0.125, 0.14],
            outside: [1.0, 1.0],
            gamma: 1.4,
        }
    }
}

impl ImplosionSpec {
    pub fn problem(&self) -> Result<Problem> {
        let mesh = Arc::new(Mesh::rect(self.nx, self.ny, self.lo, self.hi)?);
        let (t, li, lo) = (self.threshold, self.inside, self.outside);
        Ok(Problem {
            name: "implosion".into(),
            mesh,
            gas: GasModel::new(self.gamma)?,
            boundary: BoundarySpec::walls(),
            euler: EulerOptions::default(),
            ic: Box::new(move |x| {
                if x[0] + x[1] <= t {
                    [li[0], 0.0, 0.0, li[1]]
                } else {
                    [lo[0], 0.0, 0.0, lo[1]]
                }
            }),
        })
    }

    pub fn config(&self) -> AromConfig {
        AromConfig {
            window: 6,
            modes: 4,
            full_period: FullSolvePeriod::Every(7),
            delta: 0.90,
            odeim_points: 23,
            sub: SubiterationSettings::default(),
            filter: FilterSettings::default(),
            newton: NewtonSettings::for_dim(2),
            bdf_order: 2,
            n_steps: 1650,
            t_final: 0.5,
        }
    }
}
