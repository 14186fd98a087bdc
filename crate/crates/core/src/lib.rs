//! Diversified legal case retrieval.
//!
//! The crate is organised around the retrieval pipeline:
//!
//! - [`corpus`]: data model, JSONL dataset layout, sentence splitting and a
//!   seeded synthetic corpus generator.
//! - [`annotation`]: candidate charge sets, intent distributions from sorted
//!   annotator preferences, label aggregation and agreement statistics.
//! - [`textsim`]: sliding-window passage slicing, passage embeddings and the
//!   fixed-length text similarity vector.
//! - [`chargegraph`]: the reversal graph over charges, random walks on it and
//!   the Kronecker charge feature.
//! - [`ranker`]: the MLP fusion ranker, expected-reward training labels and the
//!   BM25 / MMR / IA-select baselines.
//! - [`metrics`]: graded NDCG, intent-aware NDCG and α-NDCG.
//! - [`experiment`]: end-to-end evaluation of all methods on a dataset.
//!
//! Data-parallel loops go through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and runs sequentially otherwise.

pub mod annotation;
pub mod chargegraph;
pub mod config;
pub mod corpus;
pub mod exec;
pub mod experiment;
pub mod features;
pub mod metrics;
pub mod predictor;
pub mod ranker;
pub mod sidecar;
pub mod textsim;
pub mod tokenize;

mod hash;

pub use corpus::{ChargeId, Dataset, Grade};
pub use exec::Exec;
