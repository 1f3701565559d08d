//! Table-to-text generation that preserves the writing style of a reference
//! summary.
//!
//! The input is a table of game records plus a summary written for a
//! *different* table; the output is a summary that describes the new table in
//! the reference's style. Training needs no parallel corpus: it combines a
//! content objective (reconstruct the table's own summary), a style objective
//! (reconstruct the reference from its own table), and a back-translation
//! objective over pseudo pairs.
//!
//! The crate is self-contained: it ships its own reverse-mode autodiff engine
//! ([`autodiff`]), a seeded synthetic corpus generator ([`data::synth`]), a
//! rule-based record extractor that backs the retrieval step and the metrics
//! ([`ie`]), the encoder/attention/decoder model ([`model`]), the staged
//! training loop ([`train`]), automatic metrics ([`eval`]), and a slot-filling
//! baseline ([`baseline`]). Everything is driven from one CLI ([`cli`]).

pub mod autodiff;
pub mod baseline;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod ie;
pub mod model;
pub mod train;

pub use error::{Error, Result};
