//! Hard-negative mining for retrieval and re-ranking training data.
//!
//! The pipeline embeds queries and documents with several models, concatenates
//! the per-model vectors, reduces them with PCA and then keeps, for every
//! `(query, positive)` pair, the documents that are closer to the query than
//! the positive is while being farther from the positive than from the query.
//!
//! - [`corpus`]: document, query and qrels loading; tokenization; length stats
//! - [`embed`]: embedding stores, provider client, ensemble concatenation
//! - [`pca`]: variance-threshold PCA
//! - [`miner`]: dual-criteria hard-negative selection
//! - [`baselines`]: random, BM25 and in-batch negative samplers
//! - [`objective`]: triplet margin loss and its gradient
//! - [`eval`]: MRR@k and short/long document breakdowns
//! - [`fixture`]: synthetic clustered corpus for offline runs

pub mod atomic;
pub mod baselines;
pub mod corpus;
pub mod distance;
pub mod embed;
pub mod eval;
pub mod fixture;
pub mod miner;
pub mod objective;
pub mod pca;
pub mod triplets;
pub mod verify;

pub use corpus::{Document, DocumentSet, QrelPair, QrelSet, Query, QuerySet};
pub use embed::{EmbeddingStore, VectorTable};
pub use miner::{DistanceSpace, MiningConfig};
pub use pca::PcaModel;
pub use triplets::{Negative, TripletRecord};
