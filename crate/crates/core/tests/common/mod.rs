//! Synthetic topic corpus and matching word vectors for end-to-end tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use deltatrain::corpus::{document_id, Dataset, Document};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};

/// Each class owns a set of topic words drawn Zipf-style; filler words are
/// shared by all classes. Word vectors place a class's topic words around
/// a common centroid, so they carry label information that a tiny labeled
/// set cannot.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub num_classes: usize,
    pub topic_words: usize,
    pub filler_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub p_topic: f64,
    pub p_cross_topic: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for Synthetic {
    fn default() -> Self {
        Synthetic {
            num_classes: 4,
            topic_words: 120,
            filler_words: 400,
            min_len: 10,
            max_len: 16,
            p_topic: 0.3,
            p_cross_topic: 0.06,
            zipf_exponent: 1.2,
            seed: 7,
        }
    }
}

pub fn topic_word(class: usize, rank: usize) -> String {
    format!("t{class}x{rank}")
}

pub fn filler_word(rank: usize) -> String {
    format!("w{rank}")
}

fn zipf(n: usize, exponent: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / (r as f64).powf(exponent))).unwrap()
}

impl Synthetic {
    fn documents(&self, prefix: &str, n: usize, seed: u64) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topic = zipf(self.topic_words, self.zipf_exponent);
        let filler = zipf(self.filler_words, self.zipf_exponent);
        (0..n)
            .map(|i| {
                let label = rng.gen_range(0..self.num_classes);
                let len = rng.gen_range(self.min_len..=self.max_len);
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        let u: f64 = rng.gen();
                        if u < self.p_topic {
                            topic_word(label, topic.sample(&mut rng))
                        } else if u < self.p_topic + self.p_cross_topic {
                            let other =
                                (label + rng.gen_range(1..self.num_classes)) % self.num_classes;
                            topic_word(other, topic.sample(&mut rng))
                        } else {
                            filler_word(filler.sample(&mut rng))
                        }
                    })
                    .collect();
                Document::new(document_id(prefix, i), words.join(" "), Some(label))
            })
            .collect()
    }

    /// Training set of `n` documents and a disjoint test set of `n_test`.
    pub fn corpus(&self, n: usize, n_test: usize) -> (Dataset, Vec<Document>) {
        let train = Dataset {
            documents: self.documents("train", n, self.seed),
            num_classes: self.num_classes,
        };
        let test = self.documents("test", n_test, self.seed ^ 0x7e57);
        (train, test)
    }

    /// Writes a whitespace-separated vector file covering roughly
    /// `coverage` of the words the generator can emit.
    pub fn write_vectors(&self, path: &Path, dim: usize, coverage: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xec70);
        let centroid_dist = Normal::new(0.0, 0.3).unwrap();
        let noise = Normal::new(0.0, 0.15).unwrap();
        let filler_dist = Normal::new(0.0, 0.25).unwrap();
        let centroids: Vec<Vec<f64>> = (0..self.num_classes)
            .map(|_| (0..dim).map(|_| centroid_dist.sample(&mut rng)).collect())
            .collect();
        let mut out = String::new();
        let line = |word: String, values: Vec<f64>, out: &mut String| {
            out.push_str(&word);
            for v in values {
                let _ = write!(out, " {v:.5}");
            }
            out.push('\n');
        };
        for (class, centroid) in centroids.iter().enumerate() {
            for rank in 0..self.topic_words {
                let v: Vec<f64> = centroid
                    .iter()
                    .map(|c| c + noise.sample(&mut rng))
                    .collect();
                if rng.gen::<f64>() < coverage {
                    line(topic_word(class, rank), v, &mut out);
                }
            }
        }
        for rank in 0..self.filler_words {
            let v: Vec<f64> = (0..dim).map(|_| filler_dist.sample(&mut rng)).collect();
            if rng.gen::<f64>() < coverage {
                line(filler_word(rank), v, &mut out);
            }
        }
        std::fs::write(path, out).unwrap();
    }
}
