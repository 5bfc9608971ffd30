//! Syntax-informed heterogeneous graph transformer for extractive question
//! answering.
//!
//! The pipeline reads SQuAD-style examples plus dependency or constituency
//! parses, tokenizes with WordPiece, builds a typed graph over the encoder
//! sequence, runs a stack of heterogeneous graph transformer layers and
//! predicts an answer span.

pub mod embedding;
pub mod error;
pub mod features;
pub mod graph;
pub mod hgt;
pub mod ingest;
pub mod metrics;
pub mod span;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Matrix, Tape, Var};
