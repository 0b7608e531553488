use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::single::PatchType;
use crate::error::{Error, Result};
use crate::fem::PressureSpace;
use crate::gmg::GmgConfig;
use crate::plocal::LocalSolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SinglePatch,
    GlobalMg,
}

/// Sweep parameter laid out across the report columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColumnAxis {
    #[default]
    Delta,
    Mu,
}

impl ColumnAxis {
    pub fn name(self) -> &'static str {
        match self {
            ColumnAxis::Delta => "delta",
            ColumnAxis::Mu => "mu",
        }
    }

    pub fn other(self) -> ColumnAxis {
        match self {
            ColumnAxis::Delta => ColumnAxis::Mu,
            ColumnAxis::Mu => ColumnAxis::Delta,
        }
    }
}

/// One solver configuration; every series becomes a block of report rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub name: String,
    #[serde(default)]
    pub local: LocalSolverConfig,
    /// Global V-cycle settings; `local` above overrides `gmg.local`.
    #[serde(default)]
    pub gmg: Option<GmgConfig>,
}

impl Series {
    pub fn gmg_config(&self) -> GmgConfig {
        GmgConfig { local: self.local, ..self.gmg.unwrap_or_default() }
    }
}

fn default_dim() -> usize {
    2
}
fn default_realizations() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_it() -> usize {
    150
}
fn default_levels() -> usize {
    4
}
fn default_mu() -> Vec<f64> {
    vec![1.0]
}
fn default_delta() -> Vec<f64> {
    vec![0.0]
}

/// A parameter sweep read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Experiment id; part of every realization seed.
    pub id: String,
    pub kind: ExperimentKind,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub p: Vec<usize>,
    #[serde(default)]
    pub patch_type: PatchType,
    #[serde(default = "default_delta")]
    pub delta: Vec<f64>,
    #[serde(default = "default_mu")]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub pressure_space: PressureSpace,
    #[serde(default)]
    pub columns: ColumnAxis,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_it")]
    pub max_it: usize,
    #[serde(default)]
    pub seed: u64,
    /// Mesh levels of the global hierarchy.
    #[serde(default = "default_levels")]
    pub levels: usize,
    pub series: Vec<Series>,
}

/// Largest distortion admitted per dimension.
pub fn max_delta(dim: usize) -> f64 {
    if dim == 3 {
        0.30
    } else {
        0.35
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment specs always serialize")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.id.is_empty() {
            return bad("id must not be empty".into());
        }
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.kind == ExperimentKind::GlobalMg && self.dim != 2 {
            return bad("global experiments are two-dimensional".into());
        }
        if self.p.is_empty() || self.p.iter().any(|&p| p < 2) {
            return bad("p needs at least one degree, each >= 2".into());
        }
        if self.delta.is_empty() || self.mu.is_empty() || self.series.is_empty() {
            return bad("delta, mu and series must be non-empty".into());
        }
        let dmax = max_delta(self.dim);
        if let Some(d) = self.delta.iter().find(|&&d| !(0.0..=dmax + 1e-12).contains(&d)) {
            return bad(format!("delta {d} outside [0, {dmax}] for dim {}", self.dim));
        }
        if self.mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return bad("mu values must be positive".into());
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad("rho must be nonnegative".into());
        }
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if !(self.tol > 0.0) || self.max_it == 0 {
            return bad("tol and max_it must be positive".into());
        }
        if self.kind == ExperimentKind::GlobalMg && self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        for s in &self.series {
            if s.name.is_empty() || s.name.contains(',') {
                return bad(format!("series name {:?} must be non-empty and free of commas", s.name));
            }
            s.local.validate()?;
        }
        let mut names: Vec<&str> = self.series.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("series names must be unique".into());
        }
        Ok(())
    }

    pub fn column_values(&self) -> &[f64] {
        match self.columns {
            ColumnAxis::Delta => &self.delta,
            ColumnAxis::Mu => &self.mu,
        }
    }

    pub fn row_values(&self) -> &[f64] {
        match self.columns {
            ColumnAxis::Delta => &self.mu,
            ColumnAxis::Mu => &self.delta,
        }
    }
}
