use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use specshape::experiment::{Protocol, Variant};

use crate::error::CliError;

/// Which network pair `train` builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ours,
    /// Without the latent-to-spectrum coupling term.
    NoRho,
    /// Point-set encoder on surface samples.
    Pointcloud,
}

impl ModelKind {
    pub fn variant(self, k: usize) -> Variant {
        match self {
            ModelKind::Ours => Variant::Ours { k },
            ModelKind::NoRho => Variant::NoRho { k },
            ModelKind::Pointcloud => Variant::Pointcloud { k },
        }
    }
}

/// Training run description, read from TOML or JSON. Missing keys take
/// the desk-scale defaults, unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Directory for cached spectra.
    pub cache_dir: Option<PathBuf>,
    /// Dataset directory written by `gen-data`; the family is regenerated
    /// from `protocol` when absent.
    pub data_dir: Option<PathBuf>,
    pub protocol: Protocol,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| e.to_string()),
            _ => toml::from_str(&text).map_err(|e| e.to_string()),
        };
        parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Current commit of the working directory, or "unknown".
pub fn git_revision() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// Written next to every output: enough to replay the run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub git_revision: String,
    pub config_sha256: String,
    pub config: Value,
    pub seeds: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seeds: Value) -> RunManifest {
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_revision: git_revision(),
            config_sha256: sha256_hex(&config.to_string()),
            config,
            seeds,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Data(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    /// `out.manifest.json` beside a file output.
    pub fn write_beside(&self, out: &Path) -> Result<(), CliError> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        self.write(&out.with_file_name(name))
    }
}

/// Eigenvalues from a JSON file holding a bare array or an object with a
/// `values` array (a saved spectrum or an estimate).
pub fn read_eigenvalues(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::io(path, e))?;
    let values = match &v {
        Value::Array(_) => &v,
        Value::Object(m) => m
            .get("values")
            .ok_or_else(|| CliError::Data(format!("{}: no 'values' array", path.display())))?,
        _ => return Err(CliError::Data(format!("{}: expected an array or a spectrum object", path.display()))),
    };
    serde_json::from_value(values.clone()).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn seeds(protocol: &Protocol) -> Value {
    json!({ "data": protocol.seed, "train": protocol.train.seed })
}
