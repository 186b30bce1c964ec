//! Experiment configuration: one TOML file, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use zenolab::model::{basis_state, build_gue, build_ring, normalized, uniform_state, QuantumModel};
use zenolab::zeno::perturbed_initial_state;
use zenolab::C64;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelSpec,
    #[serde(default)]
    pub detection_site: usize,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default = "default_curves")]
    pub curves: Vec<Curve>,
    /// Stroboscopic attempts kept in a pdf; 0 means `t_max/τ`.
    #[serde(default)]
    pub n_max: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Samples of each dense curve.
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub grid: Option<GridSpec>,
    /// Criteria run by `validate`; empty means all.
    #[serde(default)]
    pub criteria: Vec<u32>,
    pub output: Option<PathBuf>,
    /// Output scaling: times are written in units of `1/gamma`.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Ring { sites: usize },
    Gue { dim: usize, seed: u64 },
    /// Infinite tight-binding line, detection at the origin.
    Line,
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// The detection state itself.
    #[default]
    Return,
    Site { site: usize },
    Uniform,
    /// `[re, im]` pairs, normalized on load.
    Custom { vector: Vec<[f64; 2]> },
    /// `√(1 − ε²)|ψd⟩ + ε|perp_site⟩`.
    Perturbed { epsilon: f64, perp_site: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curve {
    Strobo,
    Nhh,
    Zeno,
    Corrected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    #[serde(default = "default_n_cap")]
    pub n_cap: usize,
    #[serde(default = "default_drop_tol")]
    pub drop_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tail_tol: default_tail_tol(), n_cap: default_n_cap(), drop_tol: default_drop_tol() }
    }
}

fn default_curves() -> Vec<Curve> {
    vec![Curve::Strobo, Curve::Nhh, Curve::Zeno, Curve::Corrected]
}
fn default_m_max() -> usize {
    2
}
fn default_t_max() -> f64 {
    20.0
}
fn default_points() -> usize {
    400
}
fn default_gamma() -> f64 {
    1.0
}
fn default_tail_tol() -> f64 {
    1e-10
}
fn default_n_cap() -> usize {
    1_000_000
}
fn default_drop_tol() -> f64 {
    zenolab::model::DEFAULT_DROP_TOL
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    /// Parses and validates; TOML errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError(m));
        if self.schema_version != SCHEMA_VERSION {
            return fail(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return fail(format!("taus: every value must be positive, got {t}"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return fail(format!("epsilons: every value must lie in [0, 1], got {e}"));
        }
        if !(self.t_max > 0.0) || self.points < 2 {
            return fail("t_max must be positive and points at least 2".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.m_max == 0 {
            return fail("m_max must be at least 1".into());
        }
        if let Some(dim) = self.declared_dim() {
            let check = |field: &str, site: usize| {
                if site >= dim {
                    Err(ConfigError(format!("{field}: site {site} outside dimension {dim}")))
                } else {
                    Ok(())
                }
            };
            check("detection_site", self.detection_site)?;
            match &self.initial {
                InitialSpec::Site { site } => check("initial.site", *site)?,
                InitialSpec::Perturbed { perp_site, .. } => check("initial.perp_site", *perp_site)?,
                InitialSpec::Custom { vector } if vector.len() != dim => {
                    return fail(format!("initial.vector has {} entries, expected {dim}", vector.len()))
                }
                _ => {}
            }
        }
        if let InitialSpec::Perturbed { epsilon, perp_site } = &self.initial {
            if !(0.0..=1.0).contains(epsilon) {
                return fail(format!("initial.epsilon must lie in [0, 1], got {epsilon}"));
            }
            if *perp_site == self.detection_site {
                return fail("initial.perp_site must differ from detection_site".into());
            }
        }
        if matches!(self.model, ModelSpec::Line) {
            if self.detection_site != 0 {
                return fail("line model detects at the origin; detection_site must be 0".into());
            }
            if !matches!(self.initial, InitialSpec::Return | InitialSpec::Site { .. }) {
                return fail("line model supports only return or site initial states".into());
            }
        }
        if let Some(g) = &self.grid {
            if g.nx < 2 || g.ny < 2 || !(g.x[1] > g.x[0]) || !(g.y[1] > g.y[0]) {
                return fail("grid needs ascending ranges and at least 2 points per axis".into());
            }
        }
        Ok(())
    }

    fn declared_dim(&self) -> Option<usize> {
        match &self.model {
            ModelSpec::Ring { sites } => Some(*sites),
            ModelSpec::Gue { dim, .. } => Some(*dim),
            _ => None,
        }
    }

    pub fn require_taus(&self) -> Result<(), ConfigError> {
        if self.taus.is_empty() {
            return Err(ConfigError("taus: at least one value is required".into()));
        }
        Ok(())
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let ModelSpec::Gue { seed: s, .. } = &mut self.model {
            *s = seed;
        }
    }

    /// Distance of the initial site from the origin on the line.
    pub fn line_site(&self) -> Option<usize> {
        match (&self.model, &self.initial) {
            (ModelSpec::Line, InitialSpec::Return) => Some(0),
            (ModelSpec::Line, InitialSpec::Site { site }) => Some(*site),
            _ => None,
        }
    }

    /// The finite model with detection and initial states applied.
    pub fn build_model(&self, base: &Path) -> Result<QuantumModel, BuildError> {
        let mut model = match &self.model {
            ModelSpec::Ring { sites } => build_ring(*sites, 1.0)?,
            ModelSpec::Gue { dim, seed } => build_gue(*dim, *seed, 1.0)?,
            ModelSpec::File { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                return Ok(QuantumModel::load(&full)?);
            }
            ModelSpec::Line => return Err(BuildError::Config(ConfigError("the line model has no finite Hamiltonian".into()))),
        };
        let n = model.dim();
        let psi_d = basis_state(n, self.detection_site)?;
        model = model.with_psi_d(psi_d.clone())?;
        let psi_in = match &self.initial {
            InitialSpec::Return => psi_d,
            InitialSpec::Site { site } => basis_state(n, *site)?,
            InitialSpec::Uniform => uniform_state(n),
            InitialSpec::Custom { vector } => {
                normalized(DVector::from_iterator(n, vector.iter().map(|p| C64::new(p[0], p[1]))))?
            }
            InitialSpec::Perturbed { epsilon, perp_site } => {
                perturbed_initial_state(&psi_d, &basis_state(n, *perp_site)?, *epsilon)?
            }
        };
        Ok(model.with_psi_in(psi_in)?)
    }
}

/// Either a bad configuration or a model that fails its own invariants.
#[derive(Debug)]
pub enum BuildError {
    Config(ConfigError),
    Model(zenolab::Error),
}

impl From<zenolab::Error> for BuildError {
    fn from(e: zenolab::Error) -> Self {
        BuildError::Model(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
taus = [0.5]
[model]
kind = "ring"
sites = 6
"#;

    #[test]
    fn minimal_config_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert!(matches!(c.initial, InitialSpec::Return));
        assert_eq!(c.curves.len(), 4);
        assert_eq!(c.m_max, 2);
        let m = c.build_model(Path::new(".")).unwrap();
        assert!((m.overlap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}colour = 3\n")).unwrap_err();
        assert!(err.0.contains("colour"), "{}", err.0);
        let err = ExperimentConfig::parse(&MINIMAL.replace("sites = 6", "sites = 6\nspin = 1")).unwrap_err();
        assert!(err.0.contains("spin"), "{}", err.0);
    }

    #[test]
    fn field_diagnostics() {
        let bad = MINIMAL.replace("taus = [0.5]", "taus = [0.5, -1.0]");
        assert!(ExperimentConfig::parse(&bad).unwrap_err().0.contains("taus"));
        let bad = MINIMAL.replace("[model]", "detection_site = 9\n[model]");
        assert!(ExperimentConfig::parse(&bad).unwrap_err().0.contains("detection_site"));
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::parse(&bad).unwrap_err().0.contains("schema_version"));
        let err = ExperimentConfig::parse("schema_version = 1\ntaus = [0.5\n").unwrap_err();
        assert!(err.0.contains("line"), "{}", err.0);
    }

    #[test]
    fn perturbed_state_and_seed_override() {
        let text = r#"
schema_version = 1
taus = [0.1]
[model]
kind = "gue"
dim = 4
seed = 1
[initial]
kind = "perturbed"
epsilon = 0.6
perp_site = 2
"#;
        let mut c = ExperimentConfig::parse(text).unwrap();
        c.override_seed(9);
        assert!(matches!(c.model, ModelSpec::Gue { seed: 9, .. }));
        let m = c.build_model(Path::new(".")).unwrap();
        assert!((m.overlap().norm() - 0.8).abs() < 1e-12);
    }
}
