//! Emotion recognition from short child utterances.
//!
//! The pipeline extracts spectral and prosodic features from canonical
//! 16 kHz audio ([`features`]), scores them against one left-to-right
//! Gaussian HMM per emotion anchor ([`hmm`], [`recognizer`]) and reports
//! the result as a triangular fuzzy number on a five-anchor valence axis
//! ([`fuzzy`]). [`corpus`] holds the multi-label corpus format and a
//! synthetic corpus generator.

// `!(x >= lo)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio_io;
pub mod corpus;
pub mod exec;
pub mod features;
pub mod fuzzy;
pub mod hmm;
pub mod recognizer;

pub use exec::Exec;
