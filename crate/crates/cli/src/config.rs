use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use blin_core::engine::ArmPolicy;
use blin_core::environments::{
    constant_instance, EnvironmentDocument, InstanceDescriptor, RewardInstance,
};
use blin_core::sequences::{AceParams, EdgeLengthSchedule};
use clap::ValueEnum;
use serde::Deserialize;

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Dblin,
    Ablin,
    Zooming,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dblin => "dblin",
            Self::Ablin => "ablin",
            Self::Zooming => "zooming",
        }
    }
}

/// An environment named on the command line or in a config file: either a
/// built-in name or a full instance descriptor.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EnvSpec {
    Descriptor(InstanceDescriptor),
    Name(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub algorithms: Vec<Algorithm>,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(default)]
    pub d: Option<u32>,
    #[serde(default)]
    pub dz: f64,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default = "unit")]
    pub noise_scale: f64,
    #[serde(default)]
    pub arm_policy: ArmPolicy,
}

fn unit() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return usage(format!("--T must be at least 2 (got {})", self.horizon));
        }
        if self.seeds.is_empty() {
            return usage("at least one seed is required");
        }
        if self.algorithms.is_empty() {
            return usage("at least one algorithm is required");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return usage(format!(
                "noise scale must be finite and >= 0 (got {})",
                self.noise_scale
            ));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<RewardInstance> {
        let desc = resolve_env(&self.env, self.d)?;
        let inst = desc.build().map_err(|e| UsageError(e.to_string()))?;
        if let Some(d) = self.d {
            if d as usize != inst.dim() {
                return usage(format!(
                    "--d {d} does not match the {}-dimensional {} instance",
                    inst.dim(),
                    inst.name()
                ));
            }
        }
        Ok(inst)
    }

    pub fn schedule(&self, alg: Algorithm, dim: usize) -> Result<Option<EdgeLengthSchedule>> {
        Ok(match alg {
            Algorithm::Dblin => Some(EdgeLengthSchedule::Doubling),
            Algorithm::Ablin => {
                let p = AceParams::new(dim as u32, self.dz, self.horizon)
                    .map_err(|e| UsageError(e.to_string()))?;
                Some(EdgeLengthSchedule::RoundedAce(p))
            }
            Algorithm::Zooming => None,
        })
    }
}

/// Built-in names, or a path to a JSON descriptor (bare or wrapped with a seed).
pub fn resolve_env(spec: &EnvSpec, d: Option<u32>) -> Result<InstanceDescriptor> {
    let name = match spec {
        EnvSpec::Descriptor(desc) => return Ok(desc.clone()),
        EnvSpec::Name(n) => n,
    };
    match name.as_str() {
        "two-peak" => Ok(InstanceDescriptor::TwoPeak),
        "linear" => Ok(InstanceDescriptor::Linear),
        "constant" => {
            let d = d.unwrap_or(1);
            constant_instance(d, 0.0).map_err(|e| UsageError(e.to_string()))?;
            Ok(InstanceDescriptor::Constant { d, value: 0.0 })
        }
        "static-lower-bound" | "adaptive-lower-bound" => usage(format!(
            "{name} needs parameters: materialise it with `lower-bound-env` and pass the JSON file to --env"
        )),
        path if Path::new(path).is_file() => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading instance file {path}"))?;
            if let Ok(doc) = serde_json::from_str::<EnvironmentDocument>(&text) {
                return Ok(doc.instance);
            }
            serde_json::from_str::<InstanceDescriptor>(&text)
                .map_err(|e| UsageError(format!("instance file {path}: {e}")).into())
        }
        other => usage(format!(
            "unknown env '{other}' (expected two-peak, linear, constant or a descriptor JSON file)"
        )),
    }
}
