//! Scenario files: TOML documents describing an environment, a policy
//! roster and the replication protocol.

use std::path::{Path, PathBuf};

use banditq_core::{EnvironmentSpec, PolicyDescriptor, PolicyKind, Process};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid scenario field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub horizon: usize,
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Output directory, relative to the working directory.
    pub output_dir: String,
    /// Keep every `stride`-th slot in the CSV series.
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Share arrival and service draws across policies of a replication.
    #[serde(default)]
    pub common_random_numbers: bool,
    /// Write a per-slot record file for every run (small horizons only).
    #[serde(default)]
    pub save_records: bool,
    /// File name, inside the output directory, for the service noise path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_file: Option<String>,
    pub environment: EnvironmentEntry,
    pub policies: Vec<PolicyEntry>,
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentEntry {
    #[serde(rename = "K")]
    pub queues: usize,
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(default)]
    pub noise_seed: u64,
    pub arrivals: ProcessEntry,
    pub services: ProcessEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProcessEntry {
    Bernoulli { rates: Vec<f64> },
    Ar1Bernoulli { rates: Vec<f64>, phi: f64, sd: f64 },
    HeavyTailed { rates: Vec<f64>, alpha: f64 },
    Trace { rows: Vec<Vec<f64>> },
}

impl From<&ProcessEntry> for Process {
    fn from(p: &ProcessEntry) -> Self {
        match p.clone() {
            ProcessEntry::Bernoulli { rates } => Process::Bernoulli { rates },
            ProcessEntry::Ar1Bernoulli { rates, phi, sd } => Process::Ar1Bernoulli { rates, phi, sd },
            ProcessEntry::HeavyTailed { rates, alpha } => Process::HeavyTailed { rates, alpha },
            ProcessEntry::Trace { rows } => Process::Trace { rows },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl PolicyEntry {
    pub fn descriptor(&self) -> Result<PolicyDescriptor, ScenarioError> {
        let kind = PolicyKind::from_name(&self.name)
            .ok_or_else(|| invalid("policies.name", format!("unknown policy `{}`", self.name)))?;
        let mut d = if kind.is_bandit() { PolicyDescriptor::bandit(kind, self.delta) } else { PolicyDescriptor::new(kind) };
        d.delta = self.delta;
        d.bound = self.bound;
        d.alpha = self.alpha;
        if let Some(label) = &self.label {
            d.label = label.clone();
        }
        Ok(d)
    }
}

impl Scenario {
    pub fn environment_spec(&self) -> EnvironmentSpec {
        let e = &self.environment;
        EnvironmentSpec {
            queues: e.queues,
            bound: e.bound,
            horizon: self.horizon,
            arrivals: (&e.arrivals).into(),
            services: (&e.services).into(),
            noise_seed: e.noise_seed,
        }
    }

    pub fn descriptors(&self) -> Result<Vec<PolicyDescriptor>, ScenarioError> {
        self.policies.iter().map(PolicyEntry::descriptor).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.reps < 1 {
            return Err(invalid("reps", "must be at least 1"));
        }
        if self.stride < 1 {
            return Err(invalid("stride", "must be at least 1"));
        }
        // TOML integers are signed 64-bit
        if self.base_seed > i64::MAX as u64 {
            return Err(invalid("base_seed", "must fit in a signed 64-bit integer"));
        }
        if self.environment.noise_seed > i64::MAX as u64 {
            return Err(invalid("environment.noise_seed", "must fit in a signed 64-bit integer"));
        }
        if self.policies.is_empty() {
            return Err(invalid("policies", "at least one policy is required"));
        }
        self.environment_spec().validate().map_err(|e| invalid("environment", e.to_string()))?;
        let descriptors = self.descriptors()?;
        let mut slugs = Vec::new();
        for d in &descriptors {
            d.validate().map_err(|e| invalid("policies", e.to_string()))?;
            let slug = crate::output::slug(&d.label);
            if slugs.contains(&slug) {
                return Err(invalid("policies.label", format!("duplicate label `{}`", d.label)));
            }
            slugs.push(slug);
        }
        Ok(())
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse { path: origin.to_path_buf(), message: e.to_string() })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| invalid("scenario", e.to_string()))
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Scenario::from_toml(&text, path)
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<(), ScenarioError> {
    std::fs::write(path, scenario.to_toml()?).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

/// Scenario files shipped with the crate, by name.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "appendix-a-noiseless" => Some(include_str!("../scenarios/appendix-a-noiseless.toml")),
        "appendix-a-ar1" => Some(include_str!("../scenarios/appendix-a-ar1.toml")),
        _ => None,
    }
}

pub fn load_bundled(name: &str) -> Result<Scenario, ScenarioError> {
    let text = bundled(name).ok_or_else(|| invalid("name", format!("no bundled scenario `{name}`")))?;
    Scenario::from_toml(text, Path::new(name))
}
