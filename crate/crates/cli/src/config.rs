//! Layered run configuration: flags over the TOML file over built-in
//! defaults.

use std::path::Path;

use anyhow::Context;
use mobility_core::align::AlignConfig;
use mobility_core::metrics::{BleuMode, BleuOptions, EvalOptions, Pooling, Smoothing};
use mobility_core::refine::RefineConfig;
use mobility_core::rq::RqConfig;
use mobility_core::stats::Partition;
use mobility_core::traj::{CityConfig, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Seed used when neither a flag nor the file sets one.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub pooling: Pooling,
    pub bleu_mode: BleuMode,
    pub max_n: usize,
    /// Epsilon for zero n-gram counts; unset means no smoothing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing_epsilon: Option<f64>,
    pub log_base: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalOptions::default();
        EvalSection {
            pooling: d.pooling,
            bleu_mode: d.bleu_mode,
            max_n: d.bleu.max_n,
            smoothing_epsilon: None,
            log_base: d.log_base,
        }
    }
}

impl EvalSection {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            pooling: self.pooling,
            bleu_mode: self.bleu_mode,
            bleu: BleuOptions {
                max_n: self.max_n,
                smoothing: self.smoothing_epsilon.map_or(Smoothing::None, Smoothing::Epsilon),
            },
            log_base: self.log_base,
        }
    }
}

/// Settings shared by the commands that turn profiles into vectors and
/// tokens into embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TokenSection {
    /// Width of the hashed base-vocabulary embedder.
    pub embed_dim: usize,
}

impl Default for TokenSection {
    fn default() -> Self {
        TokenSection { embed_dim: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city: Option<CityConfig>,
    pub preprocess: PipelineConfig,
    pub codebook: RqConfig,
    pub tokens: TokenSection,
    pub align: AlignConfig,
    pub refine: RefineConfig,
    pub evaluate: EvalSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<Partition>,
}

impl RunConfig {
    /// Reads the file when given and applies the global seed on top.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed.or(cfg.seed) {
            cfg.codebook.seed = s;
            cfg.align.seed = s;
        }
        cfg.seed = Some(seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn partition(&self) -> Partition {
        self.partition.clone().unwrap_or_default()
    }

    /// City from `--city` when given, else from the config file.
    pub fn city(&self, path: Option<&Path>) -> anyhow::Result<CityConfig> {
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading city file {}", p.display()))?;
            return toml::from_str(&text).map_err(|e| UsageError(format!("city file {}: {e}", p.display())).into());
        }
        self.city
            .clone()
            .ok_or_else(|| UsageError("no city given: pass --city or add a [city] table to the config".into()).into())
    }
}
