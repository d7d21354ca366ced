//! Experiment configuration files.
//!
//! ```json
//! {
//!   "scenario": "cil",
//!   "stream": { "num_tasks": 5, "classes_per_task": 4, "d_latent": 16, "n_feature": 32 },
//!   "train": { "lr": 0.01, "epochs": 20, "masked_loss": true },
//!   "heads": [ { "kind": "kac" }, { "kind": "linear" } ],
//!   "seeds": [0, 1, 2],
//!   "output_dir": "out/cil"
//! }
//! ```
//!
//! Every omitted field takes its default; the fully resolved config is
//! written next to the results as `resolved_config.json`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use kac::continual::TrainConfig;
use kac::datagen::{PeaksConfig, RegressorKind, StreamParams};
use kac::heads::HeadSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Cil,
    Dil,
    Peaks,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Cil => "cil",
            Scenario::Dil => "dil",
            Scenario::Peaks => "peaks",
        }
    }
}

fn d_tasks() -> usize {
    5
}
fn d_cpt() -> usize {
    4
}
fn d_classes() -> usize {
    10
}
fn d_latent() -> usize {
    16
}
fn d_feature() -> usize {
    32
}

/// Synthetic stream shape. `num_tasks` counts domains in the DIL
/// scenario, where `num_classes` is the shared class count; CIL uses
/// `classes_per_task`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    #[serde(default = "d_tasks")]
    pub num_tasks: usize,
    #[serde(default = "d_cpt")]
    pub classes_per_task: usize,
    #[serde(default = "d_classes")]
    pub num_classes: usize,
    #[serde(default = "d_latent")]
    pub d_latent: usize,
    #[serde(default = "d_feature")]
    pub n_feature: usize,
    /// Fixed stream seed; when absent each run seed also seeds its stream.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: StreamParams,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            num_tasks: d_tasks(),
            classes_per_task: d_cpt(),
            num_classes: d_classes(),
            d_latent: d_latent(),
            n_feature: d_feature(),
            seed: None,
            params: StreamParams::default(),
        }
    }
}

fn default_models() -> Vec<RegressorKind> {
    vec![RegressorKind::RbfUnit, RegressorKind::MlpUnit]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub stream: StreamConfig,
    /// Shared training settings; `head` and `seed` are replaced per cell.
    #[serde(default)]
    pub train: TrainConfig,
    /// Head sweep for the `cil` and `dil` scenarios.
    #[serde(default)]
    pub heads: Vec<HeadSpec>,
    /// Settings for the `peaks` scenario; `seed` is replaced per cell.
    #[serde(default)]
    pub peaks: PeaksConfig,
    #[serde(default = "default_models")]
    pub models: Vec<RegressorKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Adds elapsed seconds to every report, which makes reruns differ.
    #[serde(default)]
    pub record_wall_clock: bool,
}

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "{}: {e}", p.display()),
            ConfigError::Syntax {
                path,
                line,
                column,
                message,
            } => write!(f, "{}:{line}:{column}: {message}", path.display()),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return invalid("seeds must be unique".into());
        }
        match self.scenario {
            Scenario::Cil | Scenario::Dil => {
                if self.heads.is_empty() {
                    return invalid("heads must not be empty".into());
                }
                let labels: BTreeSet<String> = self.heads.iter().map(HeadSpec::label).collect();
                if labels.len() != self.heads.len() {
                    return invalid("two heads share the same label; vary num_basis, degree or kind".into());
                }
                let s = &self.stream;
                let classes = if self.scenario == Scenario::Cil {
                    s.classes_per_task
                } else {
                    s.num_classes
                };
                if s.num_tasks == 0 || classes == 0 || s.d_latent == 0 || s.n_feature == 0 {
                    return invalid("stream counts must be at least 1".into());
                }
                s.params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            Scenario::Peaks => {
                if self.models.is_empty() {
                    return invalid("models must not be empty".into());
                }
                if self.models.iter().enumerate().any(|(i, m)| self.models[..i].contains(m)) {
                    return invalid("models must be unique".into());
                }
                self.peaks.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let text = "{\n  \"scenario\": \"cil\",\n  \"seeds\": [0,\n}";
        match ExperimentConfig::parse(text, Path::new("c.json")) {
            Err(ConfigError::Syntax { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"scenario": "cil", "seeds": [0], "output_dir": "x", "headz": []}"#;
        assert!(matches!(
            ExperimentConfig::parse(text, Path::new("c.json")),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn semantic_checks() {
        let base = r#"{"scenario": "cil", "seeds": [0], "output_dir": "x", "heads": [{"kind": "kac"}]}"#;
        assert!(ExperimentConfig::parse(base, Path::new("c.json")).is_ok());
        let no_heads = r#"{"scenario": "cil", "seeds": [0], "output_dir": "x"}"#;
        assert!(matches!(
            ExperimentConfig::parse(no_heads, Path::new("c.json")),
            Err(ConfigError::Invalid(_))
        ));
        let dup = r#"{"scenario": "cil", "seeds": [0], "output_dir": "x", "heads": [{"kind": "linear"}, {"kind": "linear"}]}"#;
        assert!(ExperimentConfig::parse(dup, Path::new("c.json")).is_err());
        let peaks = r#"{"scenario": "peaks", "seeds": [0, 1], "output_dir": "x"}"#;
        let cfg = ExperimentConfig::parse(peaks, Path::new("c.json")).unwrap();
        assert_eq!(cfg.models.len(), 2);
    }
}
