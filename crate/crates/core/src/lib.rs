//! Entity linking against a Wikidata-style knowledge base.
//!
//! The pipeline is built from a JSON entity dump alone:
//!
//! 1. [`ingest`] streams the dump, keeps humans, organizations and places and
//!    writes compact [`ItemRecord`]s into a [`RecordStore`].
//! 2. [`pagerank`] ranks every item over the statement/qualifier link graph.
//! 3. [`language_model`] estimates phrase commonness from item labels.
//! 4. [`surface`] indexes labels and aliases in a case-sensitive FST and
//!    finds mentions (spots) in text.
//! 5. [`semantics`] links candidates of nearby spots by one-step random-walk
//!    similarity and turns the result into a column-stochastic Markov chain.
//! 6. [`classifier`] propagates local features along that chain, scores
//!    candidates with a linear max-margin model and picks one per spot.
//! 7. [`evaluation`] scores annotations against gold data with weak matching.
//!
//! Data-parallel loops go through [`exec::Exec`]; with the `parallel` feature
//! disabled every loop runs sequentially.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod ingest;
pub mod item;
pub mod language_model;
pub mod pagerank;
mod persist;
pub mod semantics;
pub mod surface;
pub mod synthetic;
pub mod tokenize;

pub use classifier::{Annotation, Linker, LinearModel, TrainConfig};
pub use error::{Error, Result};
pub use exec::Exec;
pub use ingest::{ItemRecord, RecordStore, TypeClosure};
pub use item::ItemId;
pub use language_model::UnigramLm;
pub use pagerank::PageRankVector;
pub use semantics::{MentionGraph, SimilarityParams};
pub use surface::{Spot, SurfaceDictionary};

/// On-disk artifact kinds and the format version this build reads and writes.
pub fn artifact_versions() -> Vec<(&'static str, u32)> {
    [
        ingest::RECORDS_FORMAT,
        ingest::GRAPH_FORMAT,
        ingest::CLOSURE_FORMAT,
        pagerank::FORMAT,
        language_model::FORMAT,
        surface::FORMAT,
        classifier::MODEL_FORMAT,
    ]
    .iter()
    .map(|f| (f.kind, f.version))
    .chain([("tokenizer", tokenize::TOKENIZER_VERSION)])
    .collect()
}
