//! Layered run configuration: preset defaults, overridden by an optional
//! TOML file, overridden by command-line flags. The effective configuration
//! can be dumped back out and reloaded to the same state.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use arom_core::{
    AromConfig, FilterOrder, FilterSettings, FullSolvePeriod, GmresOpts, LinearSolverKind,
    NewtonSettings, Problem, SubiterationSettings,
};
use serde::{Deserialize, Serialize};

use crate::presets::{ImplosionSpec, PresetKind, SodSpec};

/// `z` accepts an integer or the string "inf".
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ZValue {
    Period(usize),
    Text(String),
}

impl ZValue {
    pub fn to_period(&self) -> Result<FullSolvePeriod> {
        match self {
            ZValue::Period(z) => Ok(FullSolvePeriod::Every(*z)),
            ZValue::Text(s) if s == "inf" => Ok(FullSolvePeriod::WarmupOnly),
            ZValue::Text(s) => bail!("arom.z must be a positive integer or \"inf\", got '{s}'"),
        }
    }

    pub fn from_period(p: FullSolvePeriod) -> Self {
        match p {
            FullSolvePeriod::Every(z) => ZValue::Period(z),
            FullSolvePeriod::WarmupOnly => ZValue::Text("inf".into()),
        }
    }
}

pub fn parse_period(text: &str) -> Result<FullSolvePeriod> {
    if text == "inf" {
        return Ok(FullSolvePeriod::WarmupOnly);
    }
    let z: usize = text
        .parse()
        .map_err(|_| anyhow!("z must be a positive integer or 'inf', got '{text}'"))?;
    Ok(FullSolvePeriod::Every(z))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub arom: AromSection,
    #[serde(default)]
    pub filter: FilterSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AromSection {
    pub w: Option<usize>,
    pub m: Option<usize>,
    pub z: Option<ZValue>,
    pub delta: Option<f64>,
    pub np: Option<usize>,
    pub eps_y: Option<f64>,
    pub j_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub cascade: Option<Vec<u8>>,
    pub eps_f: Option<f64>,
    pub j_max: Option<usize>,
    pub relative: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// "banded" or "gmres".
    pub linear: Option<String>,
    pub gmres_tol: Option<f64>,
    pub gmres_restart: Option<usize>,
    pub gmres_max_iter: Option<usize>,
    pub max_backtracks: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub nt: Option<usize>,
    pub t_final: Option<f64>,
    pub bdf_order: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub preset: Option<String>,
    /// "riemann1d" or "implosion2d" (custom presets).
    pub kind: Option<String>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub gamma: Option<f64>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
    pub diaphragm: Option<f64>,
    /// rho, u, p.
    pub left: Option<[f64; 3]>,
    pub right: Option<[f64; 3]>,
    pub lo: Option<[f64; 2]>,
    pub hi: Option<[f64; 2]>,
    pub threshold: Option<f64>,
    /// rho, p.
    pub inside: Option<[f64; 2]>,
    pub outside: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub dump_stride: Option<usize>,
    pub dump_masks: Option<bool>,
    pub dump_svals: Option<bool>,
    pub density_only_error: Option<bool>,
}

pub fn load_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let parsed: ConfigFile = toml::from_str(&text)
        .map_err(|e| anyhow!("{}: {}", path.display(), e))?;
    Ok(parsed)
}

/// Fully resolved run setup.
pub struct Effective {
    pub preset: PresetKind,
    pub problem: Problem,
    pub config: AromConfig,
    pub density_only_error: bool,
}

/// Applies a config file over preset defaults and returns the problem plus
/// solver configuration. CLI flags are layered on top by the caller (they
/// are written into `file` before this call).
pub fn resolve(preset: PresetKind, file: &ConfigFile) -> Result<Effective> {
    let p = &file.problem;
    let (problem, mut config) = match preset {
        PresetKind::Sod => {
            let mut spec = SodSpec::default();
            apply_sod(&mut spec, p);
            (spec.problem()?, spec.config())
        }
        PresetKind::Implosion => {
            let mut spec = ImplosionSpec::default();
            apply_implosion(&mut spec, p);
            (spec.problem()?, spec.config())
        }
        PresetKind::Custom => match p.kind.as_deref() {
            Some("riemann1d") => {
                let mut spec = SodSpec::default();
                apply_sod(&mut spec, p);
                (spec.problem()?, spec.config())
            }
            Some("implosion2d") => {
                let mut spec = ImplosionSpec::default();
                apply_implosion(&mut spec, p);
                (spec.problem()?, spec.config())
            }
            Some(other) => bail!(
                "problem.kind '{other}' not supported (riemann1d, implosion2d)"
            ),
            None => bail!("preset 'custom' requires problem.kind in the config file"),
        },
    };

    let a = &file.arom;
    if let Some(w) = a.w {
        config.window = w;
    }
    if let Some(m) = a.m {
        config.modes = m;
    }
    if let Some(z) = &a.z {
        config.full_period = z.to_period()?;
    }
    if let Some(d) = a.delta {
        config.delta = d;
    }
    if let Some(np) = a.np {
        config.odeim_points = np;
    }
    if let Some(e) = a.eps_y {
        config.sub.eps_y = e;
    }
    if let Some(j) = a.j_max {
        config.sub.j_max = j;
    }

    let f = &file.filter;
    if let Some(cascade) = &f.cascade {
        let mut orders = Vec::with_capacity(cascade.len());
        for &o in cascade {
            orders.push(FilterOrder::from_u8(o).map_err(|e| anyhow!("filter.cascade: {e}"))?);
        }
        config.filter.cascade = orders;
    }
    if let Some(e) = f.eps_f {
        config.filter.eps_f = e;
    }
    if let Some(j) = f.j_max {
        config.filter.j_max_f = j;
    }
    if let Some(r) = f.relative {
        config.filter.relative_threshold = r;
    }

    let n = &file.newton;
    if let Some(tol) = n.tol {
        config.newton.tol_abs = tol;
    }
    if let Some(mi) = n.max_iter {
        config.newton.max_iter = mi;
    }
    if let Some(lin) = &n.linear {
        config.newton.linear = match lin.as_str() {
            "banded" => LinearSolverKind::BandedDirect,
            "gmres" => LinearSolverKind::GmresBlockJacobi,
            other => bail!("newton.linear must be 'banded' or 'gmres', got '{other}'"),
        };
    }
    if let Some(t) = n.gmres_tol {
        config.newton.gmres.tol_rel = t;
    }
    if let Some(r) = n.gmres_restart {
        config.newton.gmres.restart = r;
    }
    if let Some(mi) = n.gmres_max_iter {
        config.newton.gmres.max_iter = mi;
    }
    if let Some(b) = n.max_backtracks {
        config.newton.max_backtracks = b;
    }

    let t = &file.time;
    if let Some(nt) = t.nt {
        config.n_steps = nt;
    }
    if let Some(tf) = t.t_final {
        config.t_final = tf;
    }
    if let Some(s) = t.bdf_order {
        config.bdf_order = s;
    }

    if problem.mesh.dim() == 1 && config.newton.linear == LinearSolverKind::GmresBlockJacobi {
        // Allowed, but unusual; nothing to do.
    }
    if problem.mesh.dim() == 2 && config.newton.linear == LinearSolverKind::BandedDirect {
        bail!("newton.linear = 'banded' is only valid for 1D problems");
    }

    config
        .validate()
        .map_err(|e| anyhow!("invalid configuration: {e}"))?;

    Ok(Effective {
        preset,
        problem,
        config,
        density_only_error: file.output.density_only_error.unwrap_or(false),
    })
}

fn apply_sod(spec: &mut SodSpec, p: &ProblemSection) {
    if let Some(nx) = p.nx {
        spec.nx = nx;
    }
    if let Some(g) = p.gamma {
        spec.gamma = g;
    }
    if let Some(v) = p.x_lo {
        spec.x_lo = v;
    }
    if let Some(v) = p.x_hi {
        spec.x_hi = v;
    }
    if let Some(v) = p.diaphragm {
        spec.diaphragm = v;
    }
    if let Some(v) = p.left {
        spec.left = v;
    }
    if let Some(v) = p.right {
        spec.right = v;
    }
}

fn apply_implosion(spec: &mut ImplosionSpec, p: &ProblemSection) {
    if let Some(nx) = p.nx {
        spec.nx = nx;
    }
    if let Some(ny) = p.ny {
        spec.ny = ny;
    }
    if let Some(g) = p.gamma {
        spec.gamma = g;
    }
    if let Some(v) = p.lo {
        spec.lo = v;
    }
    if let Some(v) = p.hi {
        spec.hi = v;
    }
    if let Some(v) = p.threshold {
        spec.threshold = v;
    }
    if let Some(v) = p.inside {
        spec.inside = v;
    }
    if let Some(v) = p.outside {
        spec.outside = v;
    }
}

/// Serializes the effective solver configuration back into the file schema.
pub fn effective_to_file(preset: PresetKind, config: &AromConfig, density_only: bool) -> ConfigFile {
    ConfigFile {
        arom: AromSection {
            w: Some(config.window),
            m: Some(config.modes),
            z: Some(ZValue::from_period(config.full_period)),
            delta: Some(config.delta),
            np: Some(config.odeim_points),
            eps_y: Some(config.sub.eps_y),
            j_max: Some(config.sub.j_max),
        },
        filter: FilterSection {
            cascade: Some(config.filter.cascade.iter().map(|o| o.as_u8()).collect()),
            eps_f: Some(config.filter.eps_f),
            j_max: Some(config.filter.j_max_f),
            relative: Some(config.filter.relative_threshold),
        },
        newton: NewtonSection {
            tol: Some(config.newton.tol_abs),
            max_iter: Some(config.newton.max_iter),
            linear: Some(
                match config.newton.linear {
                    LinearSolverKind::BandedDirect => "banded",
                    LinearSolverKind::GmresBlockJacobi => "gmres",
                }
                .into(),
            ),
            gmres_tol: Some(config.newton.gmres.tol_rel),
            gmres_restart: Some(config.newton.gmres.restart),
            gmres_max_iter: Some(config.newton.gmres.max_iter),
            max_backtracks: Some(config.newton.max_backtracks),
        },
        time: TimeSection {
            nt: Some(config.n_steps),
            t_final: Some(config.t_final),
            bdf_order: Some(config.bdf_order),
        },
        problem: ProblemSection {
            preset: Some(
                match preset {
                    PresetKind::Sod => "sod",
                    PresetKind::Implosion => "implosion",
                    PresetKind::Custom => "custom",
                }
                .into(),
            ),
            ..Default::default()
        },
        output: OutputSection {
            density_only_error: Some(density_only),
            ..Default::default()
        },
    }
}

pub fn default_settings() -> (SubiterationSettings, FilterSettings, GmresOpts, NewtonSettings) {
    (
        SubiterationSettings::default(),
        FilterSettings::default(),
        GmresOpts::default(),
        NewtonSettings::for_dim(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_preset_defaults() {
        let file = ConfigFile::default();
        let eff = resolve(PresetKind::Sod, &file).unwrap();
        assert_eq!(eff.config.n_steps, 999);
        assert_eq!(eff.config.window, 5);
        assert_eq!(eff.problem.mesh.n_cells(), 499);
    }

    #[test]
    fn invariant_violation_names_the_key() {
        let mut file = ConfigFile::default();
        file.arom.m = Some(10);
        file.arom.w = Some(5);
        let err = resolve(PresetKind::Sod, &file).unwrap_err();
        assert!(err.to_string().contains("m <= w"), "got: {err}");
    }

    #[test]
    fn z_parses_integers_and_inf() {
        assert_eq!(
            parse_period("15").unwrap(),
            FullSolvePeriod::Every(15)
        );
        assert_eq!(parse_period("inf").unwrap(), FullSolvePeriod::WarmupOnly);
        assert!(parse_period("soon").is_err());
        assert_eq!(
            ZValue::Text("inf".into()).to_period().unwrap(),
            FullSolvePeriod::WarmupOnly
        );
    }

    #[test]
    fn effective_round_trip() {
        let mut file = ConfigFile::default();
        file.arom.z = Some(ZValue::Text("inf".into()));
        file.arom.delta = Some(0.92);
        file.filter.cascade = Some(vec![2, 4]);
        let eff = resolve(PresetKind::Sod, &file).unwrap();

        let dumped = effective_to_file(eff.preset, &eff.config, eff.density_only_error);
        let text = toml::to_string_pretty(&dumped).unwrap();
        let reparsed: ConfigFile = toml::from_str(&text).unwrap();
        let eff2 = resolve(PresetKind::Sod, &reparsed).unwrap();

        assert_eq!(eff.config.full_period, eff2.config.full_period);
        assert_eq!(eff.config.delta, eff2.config.delta);
        assert_eq!(
            eff.config
                .filter
                .cascade
                .iter()
                .map(|o| o.as_u8())
                .collect::<Vec<_>>(),
            eff2.config
                .filter
                .cascade
                .iter()
                .map(|o| o.as_u8())
                .collect::<Vec<_>>()
        );
        assert_eq!(eff.config.n_steps, eff2.config.n_steps);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ConfigFile>("[arom]\nwz = 3\n").unwrap_err();
        assert!(err.to_string().contains("wz"));
    }

    #[test]
    fn custom_requires_kind() {
        let file = ConfigFile::default();
        assert!(resolve(PresetKind::Custom, &file).is_err());
    }
}
