//! Run configuration: a TOML file describing backends, sampling, alignment
//! hyperparameters, and limits, resolved and validated into one effective
//! config per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::sha256_hex;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("config field '{field}' is invalid: {reason}")]
    Invalid { field: String, reason: String },
    #[error("config field '{field}' references a missing path: {path}")]
    MissingPath { field: String, path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
    Toy,
}

/// One backend slot. Which optional fields are required depends on `kind`:
/// scripted needs `fixture`, http needs `base_url` and `model`, toy needs
/// `universe` (with `policy` defaulting to uniform).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub universe: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    pub judge: BackendConfig,
    pub strong: BackendConfig,
    pub weak: BackendConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub k: u32,
    pub max_new_tokens: Option<u32>,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { k: 5, max_new_tokens: Some(1028), temperature: 1.0, top_p: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub lr: f64,
    pub sft_lr: f64,
    pub sft_steps: u32,
    pub steps: u32,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self { alpha: 0.1, epsilon: 1e-3, lr: 0.5, sft_lr: 0.5, sft_steps: 500, steps: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub max_in_flight: usize,
    pub max_requests: Option<u64>,
    pub retries: u32,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { max_in_flight: 8, max_requests: None, retries: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub alignment: AlignmentConfig,
    pub backends: BackendsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    /// Reads, resolves, and validates a config file. Relative paths inside
    /// the file are taken relative to the file's own directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|err| ConfigError::Parse { path: path.to_path_buf(), detail: err.to_string() })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Input paths resolve against the config file's directory so a config
    /// can ship next to its data. Output paths (`output_dir`, `cache_dir`)
    /// are left alone: relative ones follow the invocation directory.
    fn resolve_paths(&mut self, base: &Path) {
        for opt in [&mut self.dataset, &mut self.templates_dir] {
            if let Some(path) = opt.as_mut() {
                resolve(base, path);
            }
        }
        for backend in [
            &mut self.backends.judge,
            &mut self.backends.strong,
            &mut self.backends.weak,
        ] {
            for opt in [&mut backend.fixture, &mut backend.policy, &mut backend.universe] {
                if let Some(path) = opt.as_mut() {
                    resolve(base, path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, reason: &str| {
            Err(ConfigError::Invalid { field: field.into(), reason: reason.into() })
        };
        if self.sampling.k < 1 {
            return invalid("sampling.k", "must be at least 1");
        }
        if !(self.sampling.temperature >= 0.0) || !self.sampling.temperature.is_finite() {
            return invalid("sampling.temperature", "must be finite and non-negative");
        }
        if !(self.sampling.top_p > 0.0 && self.sampling.top_p <= 1.0) {
            return invalid("sampling.top_p", "must be in (0, 1]");
        }
        if !(self.alignment.alpha > 0.0) {
            return invalid("alignment.alpha", "must be positive");
        }
        if !(self.alignment.epsilon > 0.0) {
            return invalid("alignment.epsilon", "must be positive");
        }
        if !(self.alignment.lr > 0.0) {
            return invalid("alignment.lr", "must be positive");
        }
        if !(self.alignment.sft_lr > 0.0) {
            return invalid("alignment.sft_lr", "must be positive");
        }
        if self.limits.max_in_flight < 1 {
            return invalid("limits.max_in_flight", "must be at least 1");
        }
        if self.limits.retries < 1 {
            return invalid("limits.retries", "must be at least 1");
        }

        if let Some(dataset) = &self.dataset {
            require_exists("dataset", dataset)?;
        }
        if let Some(dir) = &self.templates_dir {
            require_exists("templates_dir", dir)?;
        }
        for (name, backend) in [
            ("backends.judge", &self.backends.judge),
            ("backends.strong", &self.backends.strong),
            ("backends.weak", &self.backends.weak),
        ] {
            validate_backend(name, backend)?;
        }
        Ok(())
    }

    /// Stable identifier for this run: a digest of the effective config
    /// plus the seed, so distinct setups never share an output directory.
    pub fn run_id(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = sha256_hex(canonical.as_bytes());
        format!("{}-s{}", &digest[..12], self.seed)
    }
}

fn require_exists(field: &str, path: &Path) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath { field: field.into(), path: path.to_path_buf() })
    }
}

fn validate_backend(name: &str, backend: &BackendConfig) -> Result<(), ConfigError> {
    let missing = |field: &str| {
        Err(ConfigError::Invalid {
            field: format!("{name}.{field}"),
            reason: format!("required for kind = {:?}", backend.kind).to_lowercase(),
        })
    };
    match backend.kind {
        BackendKind::Http => {
            if backend.base_url.is_none() {
                return missing("base_url");
            }
            if backend.model.is_none() {
                return missing("model");
            }
        }
        BackendKind::Scripted => match &backend.fixture {
            None => return missing("fixture"),
            Some(path) => require_exists(&format!("{name}.fixture"), path)?,
        },
        BackendKind::Toy => match &backend.universe {
            None => return missing("universe"),
            Some(path) => {
                require_exists(&format!("{name}.universe"), path)?;
                if let Some(policy) = &backend.policy {
                    require_exists(&format!("{name}.policy"), policy)?;
                }
            }
        },
    }
    Ok(())
}

/// Output directory layout for one run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub logs: PathBuf,
    pub outputs: PathBuf,
    pub prefs: PathBuf,
    pub reports: PathBuf,
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(output_dir: &Path, run_id: &str) -> Self {
        let root = output_dir.join(run_id);
        Self {
            logs: root.join("logs"),
            outputs: root.join("outputs"),
            prefs: root.join("prefs"),
            reports: root.join("reports"),
            root,
        }
    }

    pub fn create(&self) -> std::io::Result<()> {
        for dir in [&self.root, &self.logs, &self.outputs, &self.prefs, &self.reports] {
            std::fs::create_dir_all(dir)?;
        }
        Ok(())
    }

    /// Echo of the effective config, for provenance.
    pub fn write_effective_config(&self, config: &RunConfig) -> std::io::Result<()> {
        let text = toml::to_string(config).expect("config serializes to TOML");
        std::fs::write(self.root.join("config.toml"), text)
    }
}
