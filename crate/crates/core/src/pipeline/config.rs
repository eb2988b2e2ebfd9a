//! Pipeline configuration: typed defaults for every stage, TOML loading
//! with unknown-key rejection, and per-field validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cea::CeaConfig;
use crate::gateway::ModelEndpoint;
use crate::rea::ReaConfig;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Source frames per segment.
    pub segment_len: u64,
    /// Frames sampled per segment for scoring.
    pub kappa: usize,
    /// History buffer capacity.
    pub history_capacity: usize,
    /// Diverse key frames selected per summary.
    pub key_frames: usize,
    /// Summary refresh stride, in segments.
    pub summary_stride: usize,
    /// Minimum history entries before the first refresh.
    pub min_history: usize,
    /// Softmax temperature for the grounding entropy.
    pub tau: f64,
    /// K for the top-K mean similarity.
    pub top_k_mean: usize,
    /// Gate similarity threshold.
    pub delta_sim: f64,
    /// Gate entropy threshold.
    pub delta_ent: f64,
    /// Evidence weight of the binary flag.
    pub alpha: f64,
    /// Evidence weight per distinct cue keyword.
    pub gamma: f64,
    /// Evidence penalty per distinct negation pattern.
    pub delta: f64,
    /// Window peak threshold.
    pub theta_peak: f64,
    /// Window mean threshold.
    pub theta_mean: f64,
    /// Minimum window length for recursion.
    pub min_window: usize,
    /// Maximum recursion depth.
    pub max_depth: usize,
    /// Merge gap for interval continuity.
    pub merge_gap: usize,
    /// Maximum retained intervals.
    pub k_max: usize,
    /// Gaussian smoothing width, in frames.
    pub sigma_smooth: f64,
    /// Binarization threshold for mIoU and event counting.
    pub binarize: f64,
    pub backend: BackendKind,
    pub cache_dir: Option<PathBuf>,
    pub seed: u64,
    pub endpoints: Vec<ModelEndpoint>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segment_len: 16,
            kappa: 8,
            history_capacity: 8,
            key_frames: 4,
            summary_stride: 5,
            min_history: 3,
            tau: 0.1,
            top_k_mean: 4,
            delta_sim: 0.30,
            delta_ent: 0.80,
            alpha: 0.90,
            gamma: 0.05,
            delta: 0.25,
            theta_peak: 0.8,
            theta_mean: 0.5,
            min_window: 2,
            max_depth: 8,
            merge_gap: 1,
            k_max: 6,
            sigma_smooth: 16.0,
            binarize: 0.5,
            backend: BackendKind::Scripted,
            cache_dir: None,
            seed: 0,
            endpoints: Vec::new(),
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    /// Loads a TOML config, applying defaults for absent fields. Unknown
    /// keys are hard errors. `None` yields the full defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, PipelineError> {
        let config = match path {
            None => Self::default(),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
                    context: format!("config {}", path.display()),
                    source: e,
                })?;
                toml::from_str(&text)
                    .map_err(|e| PipelineError::ConfigParse(e.to_string()))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.segment_len == 0 {
            return Err(invalid("segment_len", "must be at least 1"));
        }
        if self.kappa == 0 {
            return Err(invalid("kappa", "must be at least 1"));
        }
        if self.history_capacity == 0 {
            return Err(invalid("history_capacity", "must be at least 1"));
        }
        if self.key_frames == 0 {
            return Err(invalid("key_frames", "must be at least 1"));
        }
        if self.summary_stride == 0 {
            return Err(invalid("summary_stride", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(invalid("tau", "must be positive and finite"));
        }
        if self.top_k_mean == 0 {
            return Err(invalid("top_k_mean", "must be at least 1"));
        }
        for (name, value) in [
            ("delta_sim", self.delta_sim),
            ("delta_ent", self.delta_ent),
            ("binarize", self.binarize),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(invalid(name, format!("{value} outside [0, 1]")));
            }
        }
        for (name, value) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("theta_peak", self.theta_peak),
            ("theta_mean", self.theta_mean),
            ("sigma_smooth", self.sigma_smooth),
        ] {
            if !value.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.min_window == 0 {
            return Err(invalid("min_window", "must be at least 1"));
        }
        if self.k_max == 0 {
            return Err(invalid("k_max", "must be at least 1"));
        }
        for endpoint in &self.endpoints {
            endpoint
                .validate()
                .map_err(|e| invalid("endpoints", e.to_string()))?;
        }
        Ok(())
    }

    /// Canonical serialized form, embedded in every run artifact.
    pub fn to_toml(&self) -> Result<String, PipelineError> {
        toml::to_string_pretty(self).map_err(|e| PipelineError::ConfigParse(e.to_string()))
    }

    pub fn cea(&self) -> CeaConfig {
        CeaConfig {
            kappa: self.kappa,
            history_capacity: self.history_capacity,
            key_frames: self.key_frames,
            summary_stride: self.summary_stride,
            min_history: self.min_history,
            tau: self.tau,
            top_k_mean: self.top_k_mean,
            delta_sim: self.delta_sim,
            delta_ent: self.delta_ent,
        }
    }

    pub fn rea(&self) -> ReaConfig {
        ReaConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            delta: self.delta,
            theta_peak: self.theta_peak,
            theta_mean: self.theta_mean,
            min_window: self.min_window,
            max_depth: self.max_depth,
            merge_gap: self.merge_gap,
            k_max: self.k_max,
        }
    }
}
