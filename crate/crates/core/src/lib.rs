//! Semi-supervised text classification by disagreement between classifiers
//! built on random and on pretrained word embeddings.

pub mod corpus;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod neuralnet;
pub mod report;
pub mod ssl;
pub mod stopping;

pub use error::{Error, ErrorClass, Result};
