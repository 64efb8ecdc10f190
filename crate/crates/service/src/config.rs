//! Service configuration: a TOML file plus `DENTKG_*` environment overrides.
//!
//! | variable | field |
//! |---|---|
//! | `DENTKG_KG_PATH` | `kg_path` |
//! | `DENTKG_CLASSIFIER_PATH` | `classifier_path` |
//! | `DENTKG_WEIGHTS` | `weights`, as `w_dose,w_allergy,w_interaction` |
//! | `DENTKG_TAU` | `tau` |
//! | `DENTKG_TOP_K` | `top_k` |
//! | `DENTKG_GUIDELINES_M` | `guidelines_m` |
//! | `DENTKG_ALPHA` | `alpha` |
//! | `DENTKG_BIND` | `bind` |
//! | `DENTKG_BODY_LIMIT` | `body_limit_bytes` |
//! | `DENTKG_REQUEST_LOG` | `request_log` (`true`/`false`) |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dentkg::parser::record::FieldViolation;
use dentkg::{EngineConfig, FusionGate, RetrievalConfig, SafetyWeights};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{var}: {msg}")]
    Env { var: String, msg: String },
    #[error("invalid config: {}", join(.0))]
    Invalid(Vec<FieldViolation>),
}

fn join(v: &[FieldViolation]) -> String {
    v.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub w_dose: f64,
    pub w_allergy: f64,
    pub w_interaction: f64,
}

impl Default for Weights {
    fn default() -> Self {
        let d = SafetyWeights::default();
        Weights {
            w_dose: d.w_dose,
            w_allergy: d.w_allergy,
            w_interaction: d.w_interaction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Graph file. The bundled dental graph when unset.
    pub kg_path: Option<PathBuf>,
    /// Serialized classifier. Trained from the graph at startup when unset.
    pub classifier_path: Option<PathBuf>,
    pub weights: Weights,
    pub tau: f64,
    pub top_k: usize,
    pub guidelines_m: usize,
    pub alpha: f64,
    pub bind: String,
    pub body_limit_bytes: usize,
    pub request_log: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let r = RetrievalConfig::default();
        ServiceConfig {
            kg_path: None,
            classifier_path: None,
            weights: Weights::default(),
            tau: SafetyWeights::default().tau,
            top_k: r.k,
            guidelines_m: r.m,
            alpha: r.gate.alpha(),
            bind: "127.0.0.1:8080".into(),
            body_limit_bytes: 1 << 20,
            request_log: true,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Reads `path` (when given), applies the process environment and checks
    /// the result.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_owned(),
                    source,
                })?;
                Self::from_toml_str(&text).map_err(|source| ConfigError::Toml {
                    path: p.to_owned(),
                    source,
                })?
            }
            None => ServiceConfig::default(),
        };
        config.apply_env(std::env::vars())?;
        config.engine_config()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (var, value) in vars {
            let err = |msg: String| ConfigError::Env { var: var.clone(), msg };
            match var.as_str() {
                "DENTKG_KG_PATH" => self.kg_path = Some(value.into()),
                "DENTKG_CLASSIFIER_PATH" => self.classifier_path = Some(value.into()),
                "DENTKG_WEIGHTS" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| err(e.to_string()))?;
                    let [w_dose, w_allergy, w_interaction] = parts[..] else {
                        return Err(err("expected three comma-separated numbers".into()));
                    };
                    self.weights = Weights {
                        w_dose,
                        w_allergy,
                        w_interaction,
                    };
                }
                "DENTKG_TAU" => self.tau = value.parse().map_err(|e| err(format!("{e}")))?,
                "DENTKG_TOP_K" => self.top_k = value.parse().map_err(|e| err(format!("{e}")))?,
                "DENTKG_GUIDELINES_M" => self.guidelines_m = value.parse().map_err(|e| err(format!("{e}")))?,
                "DENTKG_ALPHA" => self.alpha = value.parse().map_err(|e| err(format!("{e}")))?,
                "DENTKG_BIND" => self.bind = value,
                "DENTKG_BODY_LIMIT" => self.body_limit_bytes = value.parse().map_err(|e| err(format!("{e}")))?,
                "DENTKG_REQUEST_LOG" => self.request_log = value.parse().map_err(|e| err(format!("{e}")))?,
                _ => {}
            }
        }
        Ok(())
    }

    /// The engine configuration these settings describe.
    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let mut v = Vec::new();
        let gate = FusionGate::new(self.alpha).unwrap_or_else(|e| {
            v.push(FieldViolation::new("alpha", e.to_string()));
            FusionGate::default()
        });
        if self.body_limit_bytes == 0 {
            v.push(FieldViolation::new("body_limit_bytes", "must be positive"));
        }
        let config = EngineConfig {
            retrieval: RetrievalConfig {
                k: self.top_k,
                m: self.guidelines_m,
                gate,
                ..RetrievalConfig::default()
            },
            safety: SafetyWeights {
                w_dose: self.weights.w_dose,
                w_allergy: self.weights.w_allergy,
                w_interaction: self.weights.w_interaction,
                tau: self.tau,
            },
            ..EngineConfig::default()
        };
        for f in config.violations() {
            let field = match f.field.as_str() {
                "retrieval.k" => "top_k".to_owned(),
                "retrieval.m" => "guidelines_m".to_owned(),
                "safety.tau" => "tau".to_owned(),
                "safety.weights" => "weights".to_owned(),
                other => other.replace("safety.", "weights."),
            };
            v.push(FieldViolation::new(field, f.message));
        }
        if v.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}
