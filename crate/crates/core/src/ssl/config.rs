use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralnet::TextCnnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framework {
    Delta,
    #[serde(rename = "selftrain", alias = "self_training")]
    SelfTraining,
    #[serde(rename = "cotrain", alias = "co_training")]
    CoTraining,
}

impl Framework {
    pub const ALL: [Framework; 3] = [
        Framework::Delta,
        Framework::SelfTraining,
        Framework::CoTraining,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Framework::Delta => "delta",
            Framework::SelfTraining => "selftrain",
            Framework::CoTraining => "cotrain",
        }
    }
}

impl std::fmt::Display for Framework {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Framework::Delta),
            "selftrain" | "self_training" => Ok(Framework::SelfTraining),
            "cotrain" | "co_training" => Ok(Framework::CoTraining),
            other => Err(Error::Config(format!("unknown framework `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslConfig {
    pub framework: Framework,
    pub max_meta_epochs: usize,
    pub meta_patience: usize,
    /// Confidence threshold of the self-training and co-training baselines.
    pub selftrain_threshold: f64,
    /// After meta-level early stopping, pseudo-label the whole remaining
    /// pool and retrain once. Delta-training only.
    pub flood_after_stop: bool,
    pub n_emb_members: usize,
    pub n_rand_members: usize,
    pub min_freq: usize,
    /// Base seed. Meta-epoch `t` draws its member seeds from
    /// `seed + t * meta_seed_stride`.
    pub seed: u64,
    pub meta_seed_stride: u64,
    pub classifier: TextCnnConfig,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            framework: Framework::Delta,
            max_meta_epochs: 10,
            meta_patience: 2,
            selftrain_threshold: 0.9,
            flood_after_stop: true,
            n_emb_members: 3,
            n_rand_members: 1,
            min_freq: 1,
            seed: 0,
            meta_seed_stride: 1_000,
            classifier: TextCnnConfig::default(),
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_meta_epochs == 0 {
            return Err(Error::Config("max_meta_epochs must be at least 1".into()));
        }
        if !(self.selftrain_threshold > 0.0 && self.selftrain_threshold < 1.0) {
            return Err(Error::Config(
                "selftrain_threshold must lie in (0, 1)".into(),
            ));
        }
        if self.n_emb_members == 0 || self.n_rand_members == 0 {
            return Err(Error::Config("ensembles need at least one member".into()));
        }
        let per_meta = (self.n_emb_members + self.n_rand_members) as u64 + 1;
        if self.meta_seed_stride < per_meta {
            return Err(Error::Config(format!(
                "meta_seed_stride {} too small for {per_meta} seeds per meta-epoch",
                self.meta_seed_stride
            )));
        }
        self.classifier.validate()
    }

    /// Applies a flat TOML key/value document on top of `self`. Unknown keys
    /// are errors.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.apply(self)?;
        Ok(())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    framework: Option<String>,
    max_meta_epochs: Option<usize>,
    meta_patience: Option<usize>,
    selftrain_threshold: Option<f64>,
    flood_after_stop: Option<bool>,
    n_emb_members: Option<usize>,
    n_rand_members: Option<usize>,
    min_freq: Option<usize>,
    seed: Option<u64>,
    meta_seed_stride: Option<u64>,
    max_len: Option<usize>,
    embed_dim: Option<usize>,
    kernel_sizes: Option<Vec<usize>>,
    channels_block1: Option<usize>,
    channels_block2: Option<usize>,
    learning_rate: Option<f64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_epsilon: Option<f64>,
    batch_size: Option<usize>,
    max_epochs: Option<usize>,
    patience_epochs: Option<usize>,
    fine_tune_embeddings: Option<bool>,
}

macro_rules! set {
    ($src:expr, $dst:expr, $($field:ident),*) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )*
    };
}

impl ConfigFile {
    fn apply(self, config: &mut SslConfig) -> Result<()> {
        if let Some(f) = &self.framework {
            config.framework = f.parse()?;
        }
        set!(
            self,
            config,
            max_meta_epochs,
            meta_patience,
            selftrain_threshold,
            flood_after_stop,
            n_emb_members,
            n_rand_members,
            min_freq,
            seed,
            meta_seed_stride
        );
        let c = &mut config.classifier;
        set!(
            self,
            c,
            max_len,
            embed_dim,
            kernel_sizes,
            channels_block1,
            channels_block2,
            learning_rate,
            adam_beta1,
            adam_beta2,
            adam_epsilon,
            batch_size,
            max_epochs,
            patience_epochs,
            fine_tune_embeddings
        );
        Ok(())
    }
}
