//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! [model]
//! kind = "ring"              # "cavity" | "ring" | "waveguide"
//! n_atoms = 128
//! kd = 2.0943951023931953    # lattice spacing in radians (k·d)
//! gamma_1d = 1.0
//! gamma_prime = 2.0
//! pump = 32.0
//! # positions = [1.0, 2.2]   # optional override, units of 1/k
//!
//! [run]
//! trajectories = 256
//! dt = 0.0                   # 0 → stability guard 0.01/(N·Γ₁D)
//! t_end = 3.0
//! seed = 7
//! workers = 0                # 0 → all cores
//! spectrum = false
//! tau_max = 3.0
//! tau_samples = 128
//! observation_z = 1.0e6
//! direction = "right"        # "right" | "left" | "cavity"
//!
//! [scan]
//! pumps = [4.0, 8.0, 16.0, 32.0, 48.0]
//!
//! [meanfield]
//! runs = 1
//! sample_stride = 200
//!
//! [superspin]
//! m = 2
//! p = 3
//! ```

use anyhow::{bail, Context, Result};
use bath1d::models::{build_model, FieldDirection, ModelKind, ReservoirModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub meanfield: MeanFieldSection,
    #[serde(default)]
    pub superspin: SuperspinSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub kind: String,
    pub n_atoms: usize,
    pub kd: f64,
    #[serde(default = "one")]
    pub gamma_1d: f64,
    #[serde(default)]
    pub gamma_prime: f64,
    #[serde(default)]
    pub pump: f64,
    #[serde(default)]
    pub positions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSection {
    #[serde(default = "default_traj")]
    pub trajectories: usize,
    /// 0 selects the stability guard `0.01/(N·Γ₁D)`.
    #[serde(default)]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub spectrum: bool,
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_tau_samples")]
    pub tau_samples: usize,
    #[serde(default = "default_observation_z")]
    pub observation_z: f64,
    #[serde(default = "default_direction")]
    pub direction: String,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScanSection {
    #[serde(default)]
    pub pumps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanFieldSection {
    #[serde(default = "one_usize")]
    pub runs: usize,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
}

impl Default for MeanFieldSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuperspinSection {
    #[serde(default = "one_usize")]
    pub m: usize,
    #[serde(default = "one_usize")]
    pub p: usize,
}

impl Default for SuperspinSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn default_traj() -> usize {
    256
}
fn default_t_end() -> f64 {
    3.0
}
fn default_tau_max() -> f64 {
    3.0
}
fn default_tau_samples() -> usize {
    128
}
fn default_observation_z() -> f64 {
    1.0e6
}
fn default_direction() -> String {
    "right".into()
}
fn default_stride() -> usize {
    200
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: Config = toml::from_str(&text).context("parsing config")?;
        config.validate()?;
        Ok(config)
    }

    /// Collects every invalid key before failing.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if parse_kind(&self.model.kind).is_none() {
            issues.push(format!(
                "model.kind: expected cavity|ring|waveguide, got {:?}",
                self.model.kind
            ));
        }
        if self.model.n_atoms == 0 {
            issues.push("model.n_atoms: must be at least 1".into());
        }
        for (key, value) in [
            ("model.gamma_1d", self.model.gamma_1d),
            ("model.gamma_prime", self.model.gamma_prime),
            ("model.pump", self.model.pump),
        ] {
            if !(value >= 0.0) {
                issues.push(format!("{key}: must be non-negative, got {value}"));
            }
        }
        if let Some(z) = &self.model.positions {
            if z.len() != self.model.n_atoms {
                issues.push(format!(
                    "model.positions: {} entries for {} atoms",
                    z.len(),
                    self.model.n_atoms
                ));
            }
        }
        if self.run.trajectories == 0 {
            issues.push("run.trajectories: must be at least 1".into());
        }
        if self.run.dt < 0.0 {
            issues.push(format!("run.dt: must be non-negative, got {}", self.run.dt));
        }
        let guard = 0.01 / (self.model.n_atoms as f64 * self.model.gamma_1d);
        if self.run.dt > guard {
            issues.push(format!(
                "run.dt: {} exceeds the stability guard {guard}",
                self.run.dt
            ));
        }
        if self.run.t_end <= 0.0 {
            issues.push(format!("run.t_end: must be positive, got {}", self.run.t_end));
        }
        if self.run.tau_samples < 2 {
            issues.push("run.tau_samples: need at least 2".into());
        }
        if parse_direction(&self.run.direction).is_none() {
            issues.push(format!(
                "run.direction: expected right|left|cavity, got {:?}",
                self.run.direction
            ));
        }
        if self.superspin.p == 0 {
            issues.push("superspin.p: must be at least 1".into());
        }
        if !issues.is_empty() {
            bail!("invalid configuration:\n  {}", issues.join("\n  "));
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        parse_kind(&self.model.kind).expect("validated")
    }

    pub fn direction(&self) -> FieldDirection {
        parse_direction(&self.run.direction).expect("validated")
    }

    pub fn build_model(&self) -> Result<ReservoirModel> {
        Ok(build_model(
            self.kind(),
            self.model.n_atoms,
            self.model.kd,
            self.model.gamma_1d,
            self.model.gamma_prime,
            self.model.pump,
            self.model.positions.clone(),
        )?)
    }

    /// Effective integration step: the configured one or the stability guard.
    pub fn dt(&self) -> f64 {
        if self.run.dt > 0.0 {
            self.run.dt
        } else {
            0.01 / (self.model.n_atoms as f64 * self.model.gamma_1d)
        }
    }

    pub fn tau_grid(&self) -> Vec<f64> {
        let k = self.run.tau_samples;
        (0..k)
            .map(|i| self.run.tau_max * i as f64 / (k - 1) as f64)
            .collect()
    }
}

fn parse_kind(s: &str) -> Option<ModelKind> {
    match s.to_ascii_lowercase().as_str() {
        "cavity" | "single_mode_cavity" => Some(ModelKind::SingleModeCavity),
        "ring" | "ring_cavity" => Some(ModelKind::RingCavity),
        "waveguide" => Some(ModelKind::Waveguide),
        _ => None,
    }
}

fn parse_direction(s: &str) -> Option<FieldDirection> {
    match s.to_ascii_lowercase().as_str() {
        "right" => Some(FieldDirection::Right),
        "left" => Some(FieldDirection::Left),
        "cavity" => Some(FieldDirection::Cavity),
        _ => None,
    }
}
