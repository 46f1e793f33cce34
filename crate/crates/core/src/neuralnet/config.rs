use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_MAX_LEN;
use crate::embedding::DEFAULT_EMBED_DIM;
use crate::error::{Error, Result};

/// Architecture and optimizer settings of the convolutional text classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextCnnConfig {
    pub max_len: usize,
    pub embed_dim: usize,
    pub kernel_sizes: Vec<usize>,
    pub channels_block1: usize,
    pub channels_block2: usize,
    pub num_classes: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub fine_tune_embeddings: bool,
    pub seed: u64,
}

impl Default for TextCnnConfig {
    fn default() -> Self {
        TextCnnConfig {
            max_len: DEFAULT_MAX_LEN,
            embed_dim: DEFAULT_EMBED_DIM,
            kernel_sizes: vec![2, 3, 4, 5],
            channels_block1: 32,
            channels_block2: 16,
            num_classes: 2,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            patience_epochs: 5,
            fine_tune_embeddings: true,
            seed: 0,
        }
    }
}

impl TextCnnConfig {
    /// Positions left after the first block's pooling, aligned across kernel
    /// sizes by truncating to the shortest map.
    pub fn block1_positions(&self) -> usize {
        let widest = self.kernel_sizes.iter().copied().max().unwrap_or(1);
        (self.max_len + 1).saturating_sub(widest) / 2
    }

    pub fn block1_width(&self) -> usize {
        self.channels_block1 * self.kernel_sizes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.channels_block2 * self.kernel_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("embed_dim", self.embed_dim),
            ("channels_block1", self.channels_block1),
            ("channels_block2", self.channels_block2),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience_epochs", self.patience_epochs),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return Err(Error::Config(
                "kernel_sizes must be non-empty and positive".into(),
            ));
        }
        let widest = *self.kernel_sizes.iter().max().unwrap();
        if widest > self.max_len {
            return Err(Error::Config(format!(
                "kernel size {widest} exceeds max_len {}",
                self.max_len
            )));
        }
        if self.block1_positions() < widest {
            return Err(Error::Config(format!(
                "max_len {} too short: second block sees {} positions, needs {widest}",
                self.max_len,
                self.block1_positions()
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return Err(Error::Config("adam_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = TextCnnConfig::default();
        c.validate().unwrap();
        assert_eq!(c.feature_dim(), 64);
        assert_eq!(c.block1_width(), 128);
        assert_eq!(c.block1_positions(), 48);
    }

    #[test]
    fn rejects_sequences_too_short_for_second_block() {
        let c = TextCnnConfig {
            max_len: 12,
            ..TextCnnConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TextCnnConfig {
            max_len: 14,
            ..TextCnnConfig::default()
        };
        c.validate().unwrap();
    }
}
