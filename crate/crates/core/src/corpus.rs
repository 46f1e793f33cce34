//! Dataset ingestion, tokenization, vocabulary construction and the
//! labeled/dev/unlabeled split protocol.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DiagnosticsAccess;

pub const PAD_ID: u32 = 0;
pub const OOV_ID: u32 = 1;
const FIRST_TOKEN_ID: usize = 2;

pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub gold_label: Option<usize>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        raw_text: impl Into<String>,
        gold_label: Option<usize>,
    ) -> Self {
        let raw_text = raw_text.into();
        let tokens = tokenize(&raw_text);
        Document {
            id: id.into(),
            raw_text,
            tokens,
            gold_label,
        }
    }
}

static HIDDEN_LABEL_READS: AtomicUsize = AtomicUsize::new(0);

/// Gold label of an unlabeled-pool document.
///
/// The value can only be read through [`DiagnosticsAccess`], which only the
/// metrics module can construct. Every read is counted process-wide so tests
/// can assert that the training path never looks at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenLabel(usize);

impl HiddenLabel {
    pub fn new(label: usize) -> Self {
        HiddenLabel(label)
    }

    pub fn reveal(&self, _access: &DiagnosticsAccess) -> usize {
        HIDDEN_LABEL_READS.fetch_add(1, Ordering::Relaxed);
        self.0
    }
}

/// Number of hidden-label reads performed so far in this process.
pub fn hidden_label_reads() -> usize {
    HIDDEN_LABEL_READS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDocument {
    pub id: String,
    pub raw_text: String,
    pub tokens: Vec<String>,
    pub hidden_gold: HiddenLabel,
}

impl UnlabeledDocument {
    fn hide(doc: Document) -> Self {
        UnlabeledDocument {
            id: doc.id,
            raw_text: doc.raw_text,
            tokens: doc.tokens,
            hidden_gold: HiddenLabel::new(doc.gold_label.expect("labeled source document")),
        }
    }

    fn unhide(&self) -> Document {
        Document {
            id: self.id.clone(),
            raw_text: self.raw_text.clone(),
            tokens: self.tokens.clone(),
            gold_label: Some(self.hidden_gold.0),
        }
    }
}

/// Lowercase, split on whitespace, and isolate every punctuation or symbol
/// character as its own token.
pub fn tokenize(raw_text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in raw_text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_lowercase().collect());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `class,title,body...` rows with a 1-based class index.
    CsvClassTitleBody,
    /// `<root>/<class_name>/*.txt`
    FolderPerClass,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "csv_class_title_body" => Ok(DatasetFormat::CsvClassTitleBody),
            "folder" | "folder_per_class" => Ok(DatasetFormat::FolderPerClass),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub format: DatasetFormat,
    /// Declared class count; inferred from the data when absent.
    pub num_classes: Option<usize>,
    /// Prefix of the generated document ids, e.g. `train` or `test`.
    pub id_prefix: String,
}

impl LoadOptions {
    pub fn new(format: DatasetFormat, id_prefix: impl Into<String>) -> Self {
        LoadOptions {
            format,
            num_classes: None,
            id_prefix: id_prefix.into(),
        }
    }

    pub fn with_num_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = Some(num_classes);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub documents: Vec<Document>,
    pub num_classes: usize,
}

pub fn document_id(prefix: &str, ordinal: usize) -> String {
    format!("{prefix}-{ordinal:08}")
}

pub fn load_dataset(path: &Path, options: &LoadOptions) -> Result<Dataset> {
    let dataset = match options.format {
        DatasetFormat::CsvClassTitleBody => load_csv(path, options)?,
        DatasetFormat::FolderPerClass => load_folder(path, options)?,
    };
    if dataset.documents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(dataset)
}

fn load_csv(path: &Path, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Ingestion {
                path: path.to_path_buf(),
                row: 0,
                message: format!("{other:?}"),
            },
        })?;

    let mut raw: Vec<(i64, String)> = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        if record.len() == 1 && record.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() < 2 || record.len() != expected {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                row,
                message: format!(
                    "expected {} columns, found {}",
                    expected.max(2),
                    record.len()
                ),
            });
        }
        let class: i64 = record[0].trim().parse().map_err(|_| Error::Ingestion {
            path: path.to_path_buf(),
            row,
            message: format!("class index `{}` is not an integer", &record[0]),
        })?;
        let text = record.iter().skip(1).collect::<Vec<_>>().join(" ");
        raw.push((class, text));
    }

    let num_classes = match options.num_classes {
        Some(n) => n,
        None => raw.iter().map(|(c, _)| *c).max().unwrap_or(0).max(0) as usize,
    };
    let documents = raw
        .into_iter()
        .enumerate()
        .map(|(ordinal, (class, text))| {
            if class < 1 || class as usize > num_classes {
                return Err(Error::ClassOutOfRange {
                    index: class - 1,
                    num_classes,
                });
            }
            let label = (class - 1) as usize;
            Ok(Document::new(
                document_id(&options.id_prefix, ordinal),
                text,
                Some(label),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        documents,
        num_classes,
    })
}

fn load_folder(root: &Path, options: &LoadOptions) -> Result<Dataset> {
    let mut classes: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    classes.sort();
    if let Some(declared) = options.num_classes {
        if declared != classes.len() {
            return Err(Error::ClassOutOfRange {
                index: classes.len() as i64 - 1,
                num_classes: declared,
            });
        }
    }

    let mut documents = Vec::new();
    for (label, class_dir) in classes.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(class_dir)
            .map_err(|e| Error::io(class_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let ordinal = documents.len();
            documents.push(Document::new(
                document_id(&options.id_prefix, ordinal),
                text,
                Some(label),
            ));
        }
    }
    Ok(Dataset {
        documents,
        num_classes: classes.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    pub num_classes: usize,
}

impl Vocabulary {
    /// Index of `token`, or the out-of-vocabulary index.
    pub fn lookup(&self, token: &str) -> u32 {
        self.token_to_index
            .get(token)
            .map(|&i| i as u32)
            .unwrap_or(OOV_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    /// Token at a non-reserved index.
    pub fn token(&self, index: usize) -> Option<&str> {
        if index < FIRST_TOKEN_ID {
            return None;
        }
        self.index_to_token.get(index).map(String::as_str)
    }

    /// Total rows including the two reserved indices.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == FIRST_TOKEN_ID
    }

    /// Non-reserved `(index, token)` pairs in index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &str)> {
        self.index_to_token
            .iter()
            .enumerate()
            .skip(FIRST_TOKEN_ID)
            .map(|(i, t)| (i, t.as_str()))
    }
}

/// Tokens with frequency `>= min_freq` receive indices from 2 upward in
/// descending frequency, ties broken lexicographically.
pub fn build_vocabulary<'a, I>(token_lists: I, min_freq: usize, num_classes: usize) -> Vocabulary
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tokens in token_lists {
        for token in tokens {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_freq.max(1))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut index_to_token = vec!["<pad>".to_string(), "<oov>".to_string()];
    let mut token_to_index = HashMap::with_capacity(ranked.len());
    for (token, _) in ranked {
        token_to_index.insert(token.to_string(), index_to_token.len());
        index_to_token.push(token.to_string());
    }
    Vocabulary {
        token_to_index,
        index_to_token,
        num_classes,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenIdSequence {
    pub ids: Vec<u32>,
}

/// First `max_len` tokens through the vocabulary, right-padded with 0.
pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> TokenIdSequence {
    let mut ids: Vec<u32> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(t))
        .collect();
    ids.resize(max_len, PAD_ID);
    TokenIdSequence { ids }
}

/// Round half up, tolerant of binary representation error in the product.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Sizes `(train, dev)` of the labeled pool for a training set of `n`.
pub fn labeled_split_sizes(n: usize, labeled_fraction: f64, dev_fraction: f64) -> (usize, usize) {
    let pool = round_half_up(labeled_fraction * n as f64).min(n);
    let dev = round_half_up(dev_fraction * pool as f64).min(pool);
    (pool - dev, dev)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitBundle {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
    pub unlabeled: Vec<UnlabeledDocument>,
    pub split_seed: u64,
    pub labeled_fraction: f64,
    pub dev_fraction: f64,
    pub num_classes: usize,
    pub warnings: Vec<String>,
}

pub fn split_semi_supervised(
    dataset: &Dataset,
    test: &[Document],
    labeled_fraction: f64,
    dev_fraction: f64,
    seed: u64,
) -> Result<SplitBundle> {
    if !(labeled_fraction > 0.0 && labeled_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "labeled fraction {labeled_fraction} outside (0, 1]"
        )));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!(
            "dev fraction {dev_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.documents.len();
    let num_classes = dataset.num_classes;
    let (train_n, dev_n) = labeled_split_sizes(n, labeled_fraction, dev_fraction);
    if train_n + dev_n < num_classes {
        return Err(Error::InsufficientLabeledData {
            pool: train_n + dev_n,
            num_classes,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dev_idx = order[..dev_n].to_vec();
    let mut train_idx = order[dev_n..dev_n + train_n].to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();
    let mut in_pool = vec![false; n];
    for &i in dev_idx.iter().chain(&train_idx) {
        in_pool[i] = true;
    }

    let docs = &dataset.documents;
    let train: Vec<Document> = train_idx.iter().map(|&i| docs[i].clone()).collect();
    let dev: Vec<Document> = dev_idx.iter().map(|&i| docs[i].clone()).collect();
    let unlabeled: Vec<UnlabeledDocument> = (0..n)
        .filter(|&i| !in_pool[i])
        .map(|i| UnlabeledDocument::hide(docs[i].clone()))
        .collect();

    let present: BTreeSet<usize> = train
        .iter()
        .chain(&dev)
        .filter_map(|d| d.gold_label)
        .collect();
    let warnings = (0..num_classes)
        .filter(|c| !present.contains(c))
        .map(|c| format!("class {c} absent from labeled pool"))
        .collect::<Vec<_>>();
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(SplitBundle {
        train,
        dev,
        test: test.to_vec(),
        unlabeled,
        split_seed: seed,
        labeled_fraction,
        dev_fraction,
        num_classes,
        warnings,
    })
}

impl SplitBundle {
    /// The original training set (labeled pool plus unlabeled pool) in id
    /// order, gold labels restored. Used to re-split at another fraction.
    pub fn original_training_set(&self) -> Dataset {
        let mut documents: Vec<Document> = self
            .train
            .iter()
            .chain(&self.dev)
            .cloned()
            .chain(self.unlabeled.iter().map(UnlabeledDocument::unhide))
            .collect();
        documents.sort_by(|a, b| a.id.cmp(&b.id));
        Dataset {
            documents,
            num_classes: self.num_classes,
        }
    }

    pub fn manifest(&self) -> SplitManifest {
        let ids = |docs: &[Document]| docs.iter().map(|d| d.id.clone()).collect();
        SplitManifest {
            split_seed: self.split_seed,
            labeled_fraction: self.labeled_fraction,
            dev_fraction: self.dev_fraction,
            num_classes: self.num_classes,
            warnings: self.warnings.clone(),
            train: ids(&self.train),
            dev: ids(&self.dev),
            test: ids(&self.test),
            unlabeled: self.unlabeled.iter().map(|d| d.id.clone()).collect(),
        }
    }

    /// Writes `split.json` plus one `<partition>.csv` per partition.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest_path = dir.join(SPLIT_MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        write_partition(&dir.join("train.csv"), &self.train)?;
        write_partition(&dir.join("dev.csv"), &self.dev)?;
        write_partition(&dir.join("test.csv"), &self.test)?;
        let unlabeled: Vec<Document> = self
            .unlabeled
            .iter()
            .map(UnlabeledDocument::unhide)
            .collect();
        write_partition(&dir.join("unlabeled.csv"), &unlabeled)
    }

    pub fn load(dir: &Path) -> Result<SplitBundle> {
        let manifest_path = dir.join(SPLIT_MANIFEST);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: SplitManifest = serde_json::from_str(&text)?;

        let load = |name: &str, expected: &[String]| -> Result<Vec<Document>> {
            let path = dir.join(format!("{name}.csv"));
            let docs = read_partition(&path, manifest.num_classes)?;
            let ids: Vec<&String> = docs.iter().map(|d| &d.id).collect();
            if ids.len() != expected.len() || ids.iter().zip(expected).any(|(a, b)| *a != b) {
                return Err(Error::Manifest {
                    file: manifest_path.clone(),
                    field: name.to_string(),
                });
            }
            Ok(docs)
        };
        let train = load("train", &manifest.train)?;
        let dev = load("dev", &manifest.dev)?;
        let test = load("test", &manifest.test)?;
        let unlabeled = load("unlabeled", &manifest.unlabeled)?
            .into_iter()
            .map(UnlabeledDocument::hide)
            .collect();
        Ok(SplitBundle {
            train,
            dev,
            test,
            unlabeled,
            split_seed: manifest.split_seed,
            labeled_fraction: manifest.labeled_fraction,
            dev_fraction: manifest.dev_fraction,
            num_classes: manifest.num_classes,
            warnings: manifest.warnings,
        })
    }
}

pub const SPLIT_MANIFEST: &str = "split.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub split_seed: u64,
    pub labeled_fraction: f64,
    pub dev_fraction: f64,
    pub num_classes: usize,
    pub warnings: Vec<String>,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub unlabeled: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PartitionRow {
    id: String,
    label: usize,
    text: String,
}

fn write_partition(path: &Path, docs: &[Document]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Checkpoint(format!("{other:?}")),
    })?;
    for doc in docs {
        writer.serialize(PartitionRow {
            id: doc.id.clone(),
            label: doc.gold_label.unwrap_or_default(),
            text: doc.raw_text.clone(),
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn read_partition(path: &Path, num_classes: usize) -> Result<Vec<Document>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Checkpoint(format!("{other:?}")),
    })?;
    reader
        .deserialize::<PartitionRow>()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| Error::Ingestion {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })?;
            if row.label >= num_classes {
                return Err(Error::ClassOutOfRange {
                    index: row.label as i64,
                    num_classes,
                });
            }
            Ok(Document::new(row.id, row.text, Some(row.label)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn synthetic(n: usize, num_classes: usize) -> Dataset {
        Dataset {
            documents: (0..n)
                .map(|i| {
                    Document::new(
                        document_id("train", i),
                        format!("doc {i}"),
                        Some(i % num_classes),
                    )
                })
                .collect(),
            num_classes,
        }
    }

    #[test]
    fn tokenize_isolates_punctuation() {
        assert_eq!(
            tokenize("Delta-Training works."),
            toks(&["delta", "-", "training", "works", "."])
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A  a"), toks(&["a", "a"]));
    }

    #[test]
    fn vocabulary_orders_by_frequency_then_token() {
        let corpus = [toks(&["a", "b", "a"])];
        let vocab = build_vocabulary(corpus.iter().map(Vec::as_slice), 1, 2);
        assert_eq!(vocab.get("a"), Some(2));
        assert_eq!(vocab.get("b"), Some(3));

        let corpus = [toks(&["z", "y"])];
        let vocab = build_vocabulary(corpus.iter().map(Vec::as_slice), 1, 2);
        assert_eq!(vocab.get("y"), Some(2));
        assert_eq!(vocab.get("z"), Some(3));
    }

    #[test]
    fn min_freq_excludes_rare_tokens() {
        let corpus = [toks(&["a"])];
        let vocab = build_vocabulary(corpus.iter().map(Vec::as_slice), 2, 2);
        assert_eq!(vocab.len(), 2);
        assert_eq!(vocab.lookup("a"), OOV_ID);
        assert_eq!(vocab.token(0), None);
        assert_eq!(vocab.token(1), None);
    }

    #[test]
    fn encode_truncates_and_pads() {
        let corpus = [toks(&["a"])];
        let vocab = build_vocabulary(corpus.iter().map(Vec::as_slice), 1, 2);
        assert_eq!(
            encode(&toks(&["a", "qzx"]), &vocab, 4).ids,
            vec![2, 1, 0, 0]
        );
        assert_eq!(encode(&[], &vocab, 100).ids, vec![0; 100]);

        let long: Vec<String> = (0..150)
            .map(|i| if i < 100 { "a".into() } else { "b".into() })
            .collect();
        let ids = encode(&long, &vocab, 100).ids;
        assert_eq!(ids.len(), 100);
        assert!(ids.iter().all(|&i| i == 2));
    }

    #[test]
    fn csv_labels_are_normalized_to_zero_based() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.csv");
        fs::write(&path, "3,title,body\n1,t,b\n").unwrap();
        let ds = load_dataset(
            &path,
            &LoadOptions::new(DatasetFormat::CsvClassTitleBody, "train").with_num_classes(4),
        )
        .unwrap();
        let labels: Vec<_> = ds.documents.iter().map(|d| d.gold_label.unwrap()).collect();
        assert_eq!(labels, vec![2, 0]);
        assert_eq!(ds.documents[0].tokens, toks(&["title", "body"]));
        assert_eq!(ds.documents[1].id, "train-00000001");
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let opts = LoadOptions::new(DatasetFormat::CsvClassTitleBody, "train").with_num_classes(4);

        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "").unwrap();
        let err = load_dataset(&empty, &opts).unwrap_err();
        assert_eq!(err.to_string(), "empty dataset");

        let ragged = dir.path().join("ragged.csv");
        fs::write(&ragged, "1,a,b\n2,c\n").unwrap();
        match load_dataset(&ragged, &opts).unwrap_err() {
            Error::Ingestion { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }

        let range = dir.path().join("range.csv");
        fs::write(&range, "5,a,b\n").unwrap();
        assert!(matches!(
            load_dataset(&range, &opts).unwrap_err(),
            Error::ClassOutOfRange { .. }
        ));
    }

    #[test]
    fn csv_with_quoted_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "2,\"Hello, world\",\"It's here\"").unwrap();
        let ds = load_dataset(
            &path,
            &LoadOptions::new(DatasetFormat::CsvClassTitleBody, "x"),
        )
        .unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.documents[0].raw_text, "Hello, world It's here");
    }

    #[test]
    fn folder_format_assigns_classes_by_sorted_name() {
        let dir = tempfile::tempdir().unwrap();
        for (class, text) in [("pos", "great film"), ("neg", "awful film")] {
            fs::create_dir_all(dir.path().join(class)).unwrap();
            fs::write(dir.path().join(class).join("a.txt"), text).unwrap();
        }
        let ds = load_dataset(
            dir.path(),
            &LoadOptions::new(DatasetFormat::FolderPerClass, "train"),
        )
        .unwrap();
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.documents[0].raw_text, "awful film");
        assert_eq!(ds.documents[0].gold_label, Some(0));
        assert_eq!(ds.documents[1].gold_label, Some(1));
    }

    #[test]
    fn split_sizes_match_reference_table() {
        assert_eq!(labeled_split_sizes(25_000, 0.01, 0.15), (212, 38));
        assert_eq!(labeled_split_sizes(120_000, 0.01, 0.15), (1_020, 180));
        assert_eq!(labeled_split_sizes(650_000, 0.01, 0.15), (5_525, 975));
        assert_eq!(labeled_split_sizes(133_700, 0.01, 0.15), (1_136, 201));
    }

    #[test]
    fn split_rejects_tiny_pools() {
        let ds = synthetic(100, 4);
        let err = split_semi_supervised(&ds, &[], 0.01, 0.15, 1).unwrap_err();
        assert_eq!(
            err.to_string(),
            "insufficient labeled data: labeled pool of 1 for 4 classes"
        );
    }

    #[test]
    fn split_warns_on_missing_class() {
        let mut ds = synthetic(400, 4);
        for d in ds.documents.iter_mut() {
            d.gold_label = Some(if d.gold_label == Some(3) {
                0
            } else {
                d.gold_label.unwrap()
            });
        }
        let split = split_semi_supervised(&ds, &[], 0.01, 0.15, 3).unwrap();
        assert_eq!(
            split.warnings,
            vec!["class 3 absent from labeled pool".to_string()]
        );
    }

    #[test]
    fn split_round_trips_through_directory() {
        let ds = synthetic(1_000, 4);
        let test = vec![Document::new("test-00000000", "held out", Some(1))];
        let split = split_semi_supervised(&ds, &test, 0.05, 0.15, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        split.save(dir.path()).unwrap();
        let loaded = SplitBundle::load(dir.path()).unwrap();
        assert_eq!(loaded, split);
        assert_eq!(loaded.original_training_set(), ds);
    }
}
