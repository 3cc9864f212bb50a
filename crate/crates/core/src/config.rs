//! TOML run configuration for the command line driver.
//!
//! ```toml
//! [problem]
//! d = 3
//! beta = -1.0
//! gamma = -2.0
//! m = 0.8            # or p
//!
//! [grid]
//! r_max = 20.0
//! cells = 512
//! spacing = "uniform"
//! ```
//!
//! Every section is optional and falls back to the defaults below. Unknown keys are
//! rejected with the offending line.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discretization::{build_grid, RadialField, RadialGrid, Spacing};
use crate::error::{Error, Result};
use crate::flow::{barenblatt_alpha_field, squeezed_datum, StepperSettings, Variables};
use crate::functionals::renormalize_mass;
use crate::params::{Mode, ParamSet};
use crate::profiles::{Profile, ProfileKind};
use crate::region::Axis;
use crate::spectral::QGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub spectral: SpectralConfig,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub d: u32,
    pub beta: f64,
    pub gamma: f64,
    pub p: Option<f64>,
    /// Used as 0.75 when neither p nor m is given.
    pub m: Option<f64>,
    /// Checked against (β, γ) when given.
    pub mode: Option<Mode>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { d: 3, beta: 0.0, gamma: 0.0, p: None, m: None, mode: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingKind {
    Uniform,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub r_max: f64,
    pub cells: usize,
    pub spacing: SpacingKind,
    /// Width of the first cell for geometric spacing.
    pub first_cell: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { r_max: 20.0, cells: 512, spacing: SpacingKind::Uniform, first_cell: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumKind {
    Barenblatt,
    Squeezed,
    Dilated,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub horizon: f64,
    pub samples: usize,
    pub variables: Variables,
    pub datum: DatumKind,
    /// Squeezed amplitude, dilation factor or bump amplitude.
    pub datum_param: f64,
    pub dt0: f64,
    pub dt_max: f64,
    pub grow: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub max_retries: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        let s = StepperSettings::default();
        TimeConfig {
            horizon: 5.0,
            samples: 50,
            variables: Variables::SelfSimilar,
            datum: DatumKind::Squeezed,
            datum_param: 0.5,
            dt0: s.dt0,
            dt_max: s.dt_max,
            grow: s.grow,
            newton_tol: s.newton_tol,
            max_newton: s.max_newton,
            max_retries: s.max_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub ell_max: u32,
    pub count: usize,
    pub tol: f64,
    pub alpha_lo: Option<f64>,
    pub alpha_hi: Option<f64>,
    pub q_r_max: f64,
    pub q_cells: usize,
    pub q_first_cell: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        let q = QGrid::default();
        SpectralConfig {
            ell_max: 4,
            count: 4,
            tol: 1e-5,
            alpha_lo: None,
            alpha_hi: None,
            q_r_max: q.r_max,
            q_cells: q.cells,
            q_first_cell: q.first_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_steps: usize,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_steps: usize,
    /// Attach the smallest eigenvalue of Q to each admissible cell.
    pub confirm: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            gamma_lo: -3.0,
            gamma_hi: -0.1,
            gamma_steps: 50,
            beta_lo: -3.0,
            beta_hi: 0.0,
            beta_steps: 50,
            confirm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub criteria: Vec<String>,
    pub resolution: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { criteria: vec![], resolution: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    /// Parse a configuration, then apply `section.key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if overrides.is_empty() {
            return Ok(cfg);
        }
        // the file itself is valid; override errors are addressed by field path
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`RunConfig::canonical`] with the output location cleared, hex encoded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn params(&self) -> Result<ParamSet> {
        let pr = &self.problem;
        let ps = match (pr.p, pr.m) {
            (Some(p), None) => ParamSet::new(pr.d, pr.beta, pr.gamma, p),
            (None, Some(m)) => ParamSet::from_m(pr.d, pr.beta, pr.gamma, m),
            (Some(_), Some(_)) => return Err(Error::Config("[problem]: give exactly one of p and m".into())),
            (None, None) => ParamSet::from_m(pr.d, pr.beta, pr.gamma, 0.75),
        }
        .map_err(|e| match e {
            Error::Inadmissible(msg) => Error::Inadmissible(format!("[problem] {msg}")),
            other => other,
        })?;
        if let Some(mode) = pr.mode {
            if mode != ps.mode {
                return Err(Error::Config(format!(
                    "[problem].mode = {} but (beta, gamma) = ({}, {}) is {}",
                    mode.as_str(),
                    pr.beta,
                    pr.gamma,
                    ps.mode.as_str()
                )));
            }
        }
        Ok(ps)
    }

    pub fn grid(&self, ps: &ParamSet) -> Result<Arc<RadialGrid>> {
        let g = &self.grid;
        let spacing = match (g.spacing, g.first_cell) {
            (SpacingKind::Uniform, None) => Spacing::Uniform,
            (SpacingKind::Uniform, Some(_)) => {
                return Err(Error::Config("[grid].first_cell only applies to geometric spacing".into()))
            }
            (SpacingKind::Geometric, Some(first)) => Spacing::geometric_with_first_cell(g.r_max, g.cells, first)
                .map_err(|e| Error::Config(format!("[grid].first_cell: {e}")))?,
            (SpacingKind::Geometric, None) => {
                return Err(Error::Config("[grid].first_cell is required for geometric spacing".into()))
            }
        };
        build_grid(ps, g.r_max, g.cells, spacing).map_err(|e| Error::Config(format!("[grid]: {e}")))
    }

    pub fn stepper(&self) -> StepperSettings {
        let t = &self.time;
        StepperSettings {
            newton_tol: t.newton_tol,
            max_newton: t.max_newton,
            max_retries: t.max_retries,
            dt0: t.dt0,
            dt_max: t.dt_max,
            grow: t.grow,
        }
    }

    /// Initial datum on `grid`; all data carry the discrete mass of ℬ_α.
    pub fn datum(&self, ps: &ParamSet, grid: &Arc<RadialGrid>) -> Result<RadialField> {
        let b = barenblatt_alpha_field(grid, ps);
        let a = self.time.datum_param;
        match self.time.datum {
            DatumKind::Barenblatt => Ok(b),
            DatumKind::Squeezed => squeezed_datum(grid, ps, a),
            DatumKind::Dilated => {
                if !(a > 0.0) {
                    return Err(Error::Config(format!("[time].datum_param = {a}: dilation must be positive")));
                }
                let pr = Profile::with_scale(ProfileKind::BarenblattAlpha, *ps, a);
                Ok(renormalize_mass(&grid.sample(|r| pr.eval(r)), b.mass()))
            }
            DatumKind::Bump => {
                if !(a > -1.0) {
                    return Err(Error::Config(format!("[time].datum_param = {a}: bump amplitude must exceed -1")));
                }
                let pr = Profile::new(ProfileKind::BarenblattAlpha, *ps);
                Ok(renormalize_mass(&grid.sample(|r| pr.eval(r) * (1.0 + a * (-r * r).exp())), b.mass()))
            }
        }
    }

    pub fn qgrid(&self) -> QGrid {
        let s = &self.spectral;
        QGrid { r_max: s.q_r_max, cells: s.q_cells, first_cell: s.q_first_cell }
    }

    pub fn bracket(&self) -> Result<Option<(f64, f64)>> {
        match (self.spectral.alpha_lo, self.spectral.alpha_hi) {
            (Some(lo), Some(hi)) if hi > lo => Ok(Some((lo, hi))),
            (None, None) => Ok(None),
            _ => Err(Error::Config("[spectral]: alpha_lo and alpha_hi must be given together with alpha_lo < alpha_hi".into())),
        }
    }

    pub fn axes(&self) -> Result<(Axis, Axis)> {
        let s = &self.sweep;
        let g = Axis::new(s.gamma_lo, s.gamma_hi, s.gamma_steps).map_err(|e| Error::Config(format!("[sweep] gamma: {e}")))?;
        let b = Axis::new(s.beta_lo, s.beta_hi, s.beta_steps).map_err(|e| Error::Config(format!("[sweep] beta: {e}")))?;
        Ok((g, b))
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not KEY=VALUE")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.len() != 2 || path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} must be section.field")));
    }
    // bare words are taken as strings
    let value: toml::Value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let section = table
        .entry(path[0].to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("override {key}: [{}] is not a section", path[0])))?;
    section.insert(path[1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let cfg = RunConfig::parse(
            "[problem]\nd = 3\nbeta = -1.0\ngamma = -2.0\nm = 0.8\n",
            &["grid.cells=128".into(), "time.variables=original".into(), "output.dir=res".into()],
        )
        .unwrap();
        assert_eq!(cfg.grid.cells, 128);
        assert_eq!(cfg.time.variables, Variables::Original);
        assert_eq!(cfg.output.dir, PathBuf::from("res"));
        assert!((cfg.params().unwrap().alpha - 1.5).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::parse("[grid]\ncells = \"many\"\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("cells") && m.contains("line 2")), "{e}");
        let e = RunConfig::parse("[grid]\nsize = 3\n", &[]).unwrap_err();
        assert!(matches!(&e, Error::Config(m) if m.contains("size")), "{e}");
        let e = RunConfig::parse("", &["cells=3".into()]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let cfg = RunConfig::parse("[problem]\np = 2.0\nm = 0.75\n", &[]).unwrap();
        assert!(matches!(cfg.params(), Err(Error::Config(_))));
        let cfg = RunConfig::parse("[problem]\nm = 0.3\n", &[]).unwrap();
        assert!(matches!(cfg.params(), Err(Error::Inadmissible(m)) if m.starts_with("[problem]")));
        let cfg = RunConfig::parse("[problem]\nmode = \"weighted\"\n", &[]).unwrap();
        assert!(matches!(cfg.params(), Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::parse("", &[]).unwrap();
        let b = RunConfig::parse("", &["grid.cells=513".into()]).unwrap();
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = RunConfig::parse("", &["output.dir=\"elsewhere\"".into()]).unwrap();
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn data_share_the_reference_mass() {
        let cfg = RunConfig::default();
        let ps = cfg.params().unwrap();
        let g = cfg.grid(&ps).unwrap();
        let target = barenblatt_alpha_field(&g, &ps).mass();
        for (kind, a) in [(DatumKind::Squeezed, 0.5), (DatumKind::Dilated, 0.7), (DatumKind::Bump, 0.3)] {
            let mut c = cfg.clone();
            c.time.datum = kind;
            c.time.datum_param = a;
            let f = c.datum(&ps, &g).unwrap();
            assert!((f.mass() - target).abs() < 1e-12 * target);
        }
    }
}
