//! Multi-hop passage retrieval over token-level embeddings.
//!
//! The crate is organised around the dataflow of one retrieval hop:
//!
//! ```text
//! Q_{t-1} ──encode──▶ EncodedQuery ──candidates──▶ pids ──focused score──▶ top-K
//!                                                                   │
//!            Q_t ◀──append kept facts── stage 2 filter ◀── stage 1 ◀┘
//! ```
//!
//! - [`corpus`]: JSONL passages and query sets.
//! - [`encoder`]: tokenizer, the deterministic lexical reference encoder, matrix files.
//! - [`index`]: flat and inverted-file token indexes, candidate generation, on-disk format.
//! - [`scoring`]: MaxSim kernels, vanilla late interaction and focused (top-N̂/top-L̂) scoring.
//! - [`retriever`]: candidate generation followed by full focused scoring.
//! - [`condenser`]: two-stage sentence extraction.
//! - [`pipeline`]: condensed, rerank and hybrid multi-hop runs and their traces.
//! - [`supervision`]: latent hop ordering, title-overlap heuristic ordering, triples.
//! - [`eval`]: Retrieval@k, passage/sentence EM and F1, answer recall.
//! - [`synth`]: planted multi-hop corpora and fixture generators.
//! - [`config`] and [`cli`]: the `multihop` executable.

pub mod cli;
pub mod condenser;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod pipeline;
pub mod retriever;
pub mod scoring;
pub mod seed;
pub mod supervision;
pub mod synth;

pub use error::{Error, Result};
