use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Framework, SslConfig};
use crate::error::{Error, Result};
use crate::metrics::{Quadrant, QuadrantRatios};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub tt: usize,
    pub tf: usize,
    pub ft: usize,
    pub ff: usize,
}

impl QuadrantCounts {
    pub fn add(&mut self, q: Quadrant) {
        match q {
            Quadrant::TT => self.tt += 1,
            Quadrant::TF => self.tf += 1,
            Quadrant::FT => self.ft += 1,
            Quadrant::FF => self.ff += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tt + self.tf + self.ft + self.ff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaEpochRecord {
    pub meta_epoch: usize,
    /// Training-set size of the pretrained side for this meta-epoch.
    pub train_size: usize,
    pub rand_train_size: usize,
    pub dev_accuracy_emb: f64,
    pub dev_accuracy_rand: f64,
    pub test_accuracy_emb: f64,
    pub test_accuracy_rand: f64,
    /// Pool size before selection.
    pub pool_size: usize,
    pub n_selected: usize,
    pub pool_remaining: usize,
    /// Over the pool before selection; absent when the pool is empty.
    pub quadrant_ratios: Option<QuadrantRatios>,
    pub unlabeled_accuracy_emb: Option<f64>,
    pub unlabeled_accuracy_rand: Option<f64>,
    pub selected_quadrants: QuadrantCounts,
    pub emb_best_epochs: Vec<usize>,
    pub rand_best_epochs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    DeltaSelection,
    Flood,
    ConfidenceThreshold,
    /// Co-training: labeled by the random side for the pretrained side.
    CotrainFromRand,
    /// Co-training: labeled by the pretrained side for the random side.
    CotrainFromEmb,
}

/// One pseudo-labeled example, with the diagnostics recorded when it was
/// added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub meta_epoch: usize,
    pub document_id: String,
    pub pseudo_label: usize,
    pub source: SelectionSource,
    pub hidden_gold_label: usize,
    pub quadrant: Quadrant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConflict {
    pub meta_epoch: usize,
    pub document_id: String,
    pub label_from_emb: usize,
    pub label_from_rand: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloodRecord {
    /// Position in the seed schedule used for the final retraining.
    pub meta_epoch: usize,
    /// Meta-epoch whose pretrained ensemble labeled the pool.
    pub labeled_by_meta_epoch: usize,
    pub n_flooded: usize,
    pub retrained: bool,
    pub train_size: usize,
    pub pseudo_label_accuracy: Option<f64>,
    pub dev_accuracy_emb: f64,
    pub dev_accuracy_rand: f64,
    pub test_accuracy_emb: f64,
    pub test_accuracy_rand: f64,
}

/// What a framework run produces before manifest metadata is attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOutput {
    pub framework: Framework,
    pub records: Vec<MetaEpochRecord>,
    pub best_meta_epoch: usize,
    pub final_test_accuracy: f64,
    pub flood: Option<FloodRecord>,
    pub selections: Vec<SelectionRecord>,
    pub conflicts: Vec<LabelConflict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split_seed: u64,
    pub labeled_fraction: f64,
    pub dev_fraction: f64,
    pub num_classes: usize,
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub unlabeled_size: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    pub vectors_file: String,
    pub dim: usize,
    pub vocab_size: usize,
    pub coverage: f64,
    pub random_init_scale: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub environment_digest: String,
    pub config: SslConfig,
    pub split: SplitSummary,
    pub embedding: EmbeddingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub manifest: RunManifest,
    #[serde(flatten)]
    pub output: EngineOutput,
    /// SHA-256 over the serialized result with this field empty.
    pub digest: String,
}

pub fn environment_digest() -> String {
    let env = format!(
        "{} {} {} {}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        std::env::consts::OS,
        std::env::consts::ARCH
    );
    hex::encode(Sha256::digest(env.as_bytes()))
}

impl RunResult {
    pub fn new(manifest: RunManifest, output: EngineOutput) -> Self {
        let mut result = RunResult {
            manifest,
            output,
            digest: String::new(),
        };
        result.digest = result.compute_digest();
        result
    }

    pub fn compute_digest(&self) -> String {
        let mut copy = self.clone();
        copy.digest.clear();
        let bytes = serde_json::to_vec(&copy).expect("run result serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn framework(&self) -> Framework {
        self.output.framework
    }

    pub fn seed(&self) -> u64 {
        self.manifest.config.seed
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Reads a manifest; errors name the file and the offending field.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest_error = |field: String| Error::Manifest {
            file: path.to_path_buf(),
            field,
        };
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| manifest_error(format!("<json: {e}>")))?;
        let result: RunResult = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let field = msg.split('`').nth(1).map(str::to_string).unwrap_or(msg);
            manifest_error(field)
        })?;
        if result.compute_digest() != result.digest {
            return Err(manifest_error("digest".into()));
        }
        Ok(result)
    }

    /// Selection ledger as CSV:
    /// `meta_epoch,document_id,pseudo_label,hidden_gold_label,quadrant`.
    pub fn ledger_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record([
            "meta_epoch",
            "document_id",
            "pseudo_label",
            "hidden_gold_label",
            "quadrant",
        ])?;
        for s in &self.output.selections {
            writer.write_record([
                s.meta_epoch.to_string(),
                s.document_id.clone(),
                s.pseudo_label.to_string(),
                s.hidden_gold_label.to_string(),
                s.quadrant.as_str().to_string(),
            ])?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}
