//! Human-editable TOML model configuration.
//!
//! ```toml
//! model = "heat"
//! nx = 32
//! ny = 32
//! dt = 0.1
//! steps = 200
//! seed = 1
//!
//! [theta]
//! k = 0.5
//! rho_cp = 2.0
//!
//! [laser]
//! gamma = 5.0
//! omega = 3.0
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::field::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Heat,
    Sintering,
    /// Sintering with the free-energy coefficients held fixed.
    SinteringLite,
    Nanovoid,
}

impl ModelKind {
    pub fn id(&self) -> &'static str {
        match self {
            ModelKind::Heat => "heat",
            ModelKind::Sintering => "sintering",
            ModelKind::SinteringLite => "sintering-lite",
            ModelKind::Nanovoid => "nanovoid",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heat" => Ok(ModelKind::Heat),
            "sintering" => Ok(ModelKind::Sintering),
            "sintering-lite" => Ok(ModelKind::SinteringLite),
            "nanovoid" => Ok(ModelKind::Nanovoid),
            other => Err(ModelError::Config(format!("unknown model '{other}'"))),
        }
    }
}

/// Mobility interpolation polynomial for the volume/vapor carriers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// `phi^3 (15 - 10 phi + 6 phi^2)`, equal to 11 at `phi = 1`.
    #[default]
    Paper,
    /// `phi^3 (10 - 15 phi + 6 phi^2)`, equal to 1 at `phi = 1`.
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserConfig {
    pub gamma: f64,
    pub omega: f64,
    /// Beam center in cell coordinates; grid center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
}

impl Default for LaserConfig {
    fn default() -> Self {
        Self {
            gamma: 5.0,
            omega: 3.0,
            center: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatConfig {
    pub ambient: f64,
    /// Amplitude of the random smooth perturbation added to the ambient field.
    pub perturbation: f64,
    pub modes: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            ambient: 1.0,
            perturbation: 0.2,
            modes: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinteringConfig {
    pub grains: usize,
    pub interpolation: Interpolation,
    pub kb: f64,
    pub vm: f64,
    /// Particle radius as a fraction of `nx`.
    pub radius: f64,
    /// Interface width in cells.
    pub interface_width: f64,
    /// Free-energy coefficients used when they are not learned.
    pub a: f64,
    pub b: f64,
    pub eps_phi: f64,
    pub eps_eta: f64,
    pub ambient: f64,
}

impl Default for SinteringConfig {
    fn default() -> Self {
        Self {
            grains: 2,
            interpolation: Interpolation::Paper,
            kb: 1.0,
            vm: 1.0,
            radius: 0.2,
            interface_width: 3.0,
            a: 2.0,
            b: 0.5,
            eps_phi: 1.0,
            eps_eta: 0.5,
            ambient: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NanovoidConfig {
    pub cv_eq: f64,
    pub ci_eq: f64,
    /// Void radius as a fraction of `nx`.
    pub radius: f64,
    pub interface_width: f64,
    /// Standard deviation of the per-step thermal noise fields.
    pub noise: f64,
    /// Background production rate of vacancies and interstitials.
    pub production: f64,
    pub eta_production: f64,
    /// Number of cascade spots in the production fields.
    pub cascades: usize,
    /// Switches every source and sink term (noise, production, recombination) off.
    pub sources: bool,
}

impl Default for NanovoidConfig {
    fn default() -> Self {
        Self {
            cv_eq: 0.1,
            ci_eq: 0.05,
            radius: 0.2,
            interface_width: 3.0,
            noise: 0.002,
            production: 0.0005,
            eta_production: 0.0002,
            cascades: 4,
            sources: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelKind,
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_dx")]
    pub dx: f64,
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_order")]
    pub taylor_order: usize,
    #[serde(default = "default_c_stab")]
    pub c_stab: f64,
    /// Overrides of the default true parameters, by name.
    #[serde(default)]
    pub theta: BTreeMap<String, f64>,
    #[serde(default)]
    pub laser: LaserConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub sintering: SinteringConfig,
    #[serde(default)]
    pub nanovoid: NanovoidConfig,
}

fn default_dx() -> f64 {
    1.0
}
fn default_steps() -> usize {
    200
}
fn default_order() -> usize {
    4
}
fn default_c_stab() -> f64 {
    0.2
}

impl SimConfig {
    /// Defaults for a model on an `n x n` grid.
    pub fn preset(model: ModelKind, n: usize) -> Self {
        let dt = match model {
            ModelKind::Heat => 0.1,
            ModelKind::Sintering | ModelKind::SinteringLite => 0.04,
            ModelKind::Nanovoid => 0.05,
        };
        Self {
            model,
            nx: n,
            ny: n,
            dx: 1.0,
            dt,
            steps: 200,
            seed: 1,
            taylor_order: 4,
            c_stab: 0.2,
            theta: BTreeMap::new(),
            laser: LaserConfig {
                gamma: if model == ModelKind::Heat { 5.0 } else { 20.0 },
                omega: (n as f64 / 10.0).max(2.0),
                center: None,
            },
            heat: HeatConfig::default(),
            sintering: SinteringConfig::default(),
            nanovoid: NanovoidConfig::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec, ModelError> {
        Ok(GridSpec::new(self.nx, self.ny, self.dx, self.dt)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.grid()?;
        if self.steps == 0 {
            return Err(ModelError::Config("steps must be >= 1".into()));
        }
        if !(self.c_stab > 0.0) {
            return Err(ModelError::Config("c_stab must be positive".into()));
        }
        if !(self.laser.omega > 0.0) || self.laser.gamma < 0.0 {
            return Err(ModelError::Config(format!(
                "laser needs omega > 0 and gamma >= 0 (got {}, {})",
                self.laser.omega, self.laser.gamma
            )));
        }
        if matches!(self.model, ModelKind::Sintering | ModelKind::SinteringLite) {
            let s = &self.sintering;
            if s.grains == 0 {
                return Err(ModelError::Config("sintering needs at least one grain".into()));
            }
            if !(s.kb > 0.0 && s.vm > 0.0 && s.ambient > 0.0) {
                return Err(ModelError::Config("kb, vm and ambient temperature must be positive".into()));
            }
        }
        Ok(())
    }

    /// True parameter vector: defaults with `[theta]` overrides applied.
    pub fn resolve_theta(&self, names: &[String], defaults: &[f64]) -> Result<Vec<f64>, ModelError> {
        let mut theta = defaults.to_vec();
        for (key, &value) in &self.theta {
            let idx = names
                .iter()
                .position(|n| n == key)
                .ok_or_else(|| ModelError::UnknownParam(key.clone()))?;
            theta[idx] = value;
        }
        Ok(theta)
    }
}
