use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{GraphKind, DEFAULT_MAX_LEN};
use crate::span::{DEFAULT_MAX_SPAN_LEN, DEFAULT_NULL_THRESHOLD};

/// Hyperparameters of a run. Stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub graph_kind: GraphKind,
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stops after this many optimizer steps when set.
    #[serde(default)]
    pub max_steps: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_span_len: usize,
    pub null_threshold: f64,
    pub max_len: usize,
}

impl RunConfig {
    /// Full-scale settings: lr 2e-5, batch 32, 7 epochs, 2 layers of 4
    /// heads over 768-wide encoder states.
    pub fn full_scale() -> Self {
        RunConfig {
            graph_kind: GraphKind::Dependency,
            layers: 2,
            heads: 4,
            dim: 768,
            batch_size: 32,
            epochs: 7,
            max_steps: None,
            lr: 2e-5,
            weight_decay: 0.01,
            seed: 0,
            max_span_len: DEFAULT_MAX_SPAN_LEN,
            null_threshold: DEFAULT_NULL_THRESHOLD,
            max_len: DEFAULT_MAX_LEN,
        }
    }

    /// Small-corpus settings for frozen stub embeddings: lr 1e-3, batch 4,
    /// width 32.
    pub fn desk() -> Self {
        RunConfig {
            dim: 32,
            batch_size: 4,
            lr: 1e-3,
            ..RunConfig::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::hgt::check_dims(self.dim, self.heads)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} is not a non-negative number",
                self.lr
            )));
        }
        if self.max_span_len == 0 {
            return Err(Error::Config(
                "maximum span length must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
