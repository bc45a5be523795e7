//! Engine configuration, read from TOML.
//!
//! Every section is optional; missing keys take their defaults. The global
//! `seed` replaces the per-stage seeds when the configuration is resolved.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::synth::SynthParams;
use crate::align::AlignConfig;
use crate::retriever::model::DEFAULT_MODEL_DIM;
use crate::retriever::query::DEFAULT_QUERY_DIM;
use crate::retriever::DistillConfig;
use crate::seed::subseed;
use crate::space::{ParadigmEntry, DEFAULT_PARADIGMS};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dimensions {
    /// `d_c`, width of the per-instance content vector.
    pub content_dim: usize,
    /// `D_s`, width of the unified memory space.
    pub unified_dim: usize,
    /// `D_h`, hidden width of every alignment module.
    pub align_hidden_dim: usize,
    /// `d_q`, width of the query embedding.
    pub query_dim: usize,
    /// `d_m`, width of the retriever's recurrent state.
    pub model_dim: usize,
}

impl Default for Dimensions {
    fn default() -> Self {
        Self { content_dim: 64, unified_dim: 64, align_hidden_dim: 1536, query_dim: DEFAULT_QUERY_DIM, model_dim: DEFAULT_MODEL_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParadigmSpec {
    pub name: String,
    pub dim: usize,
    /// Encoder seed; derived from the global seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Paradigms that share the context; segment `s` goes to
    /// `paradigms[s % paradigms.len()]`.
    pub paradigms: Vec<String>,
    pub coverage_levels: Vec<f64>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { paradigms: vec!["explicit-sim".into(), "parametric-sim".into()], coverage_levels: vec![0.1, 0.5, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub seed: u64,
    pub anchor_paradigm: String,
    pub dimensions: Dimensions,
    pub paradigms: Vec<ParadigmSpec>,
    pub align: AlignConfig,
    pub distill: DistillConfig,
    pub synth: SynthParams,
    pub fusion: FusionConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            anchor_paradigm: DEFAULT_PARADIGMS[0].0.to_string(),
            dimensions: Dimensions::default(),
            paradigms: DEFAULT_PARADIGMS.iter().map(|(n, d)| ParadigmSpec { name: n.to_string(), dim: *d, seed: None }).collect(),
            align: AlignConfig::default(),
            distill: DistillConfig::default(),
            synth: SynthParams::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl EngineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copies the global seed and shared dimensions into the stage configs
    /// and checks consistency.
    pub fn resolved(mut self) -> Result<Self, ConfigError> {
        self.align.seed = self.seed;
        self.distill.seed = self.seed;
        self.synth.content_dim = self.dimensions.content_dim;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        let d = &self.dimensions;
        if [d.content_dim, d.unified_dim, d.align_hidden_dim, d.query_dim, d.model_dim].contains(&0) {
            return fail("all dimensions must be positive".into());
        }
        for (i, p) in self.paradigms.iter().enumerate() {
            if p.dim == 0 {
                return fail(format!("paradigm {:?} has dimension 0", p.name));
            }
            if self.paradigms[..i].iter().any(|q| q.name == p.name) {
                return fail(format!("paradigm {:?} is listed twice", p.name));
            }
        }
        let known = |n: &str| self.paradigms.iter().any(|p| p.name == n);
        if !known(&self.anchor_paradigm) {
            return fail(format!("anchor paradigm {:?} is not listed", self.anchor_paradigm));
        }
        if let Some(p) = self.fusion.paradigms.iter().find(|p| !known(p)) {
            return fail(format!("fusion paradigm {p:?} is not listed"));
        }
        if self.fusion.paradigms.is_empty() {
            return fail("fusion needs at least one paradigm".into());
        }
        if self.fusion.coverage_levels.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return fail("coverage levels must be in [0, 1]".into());
        }
        self.align.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.distill.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// Registry entries with every encoder seed filled in.
    pub fn paradigm_entries(&self) -> Vec<ParadigmEntry> {
        self.paradigms
            .iter()
            .map(|p| ParadigmEntry {
                name: p.name.clone(),
                dim: p.dim,
                seed: p.seed.unwrap_or_else(|| subseed(self.seed, &format!("encoder:{}", p.name))),
            })
            .collect()
    }
}
