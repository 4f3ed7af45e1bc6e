//! Probabilistic phone transcriptions from mismatched crowdsourcing.
//!
//! The crate turns nonsense-orthography transcripts written by annotators
//! who do not know the spoken language into weighted phone lattices:
//!
//! * [`fst`] is the weighted finite-state machinery everything else runs on.
//! * [`channel`] merges transcripts, trains the phone→letter misperception
//!   model with EM and decodes phone lattices through it.
//! * [`constraints`] compiles grapheme-to-phoneme rules, word lists and
//!   dictionaries into transducers and applies them to lattices.
//! * [`lm`] estimates bigram models over phones, letters or words.
//! * [`seq2seq`] is an LSTM encoder-decoder that translates transcripts to
//!   phones directly, with bigram fusion at decode time.
//! * [`eval`] computes phone error rates.
//! * [`cli`] wires the modules into the `ptforge` executable.

pub mod channel;
pub mod cli;
pub mod constraints;
pub mod error;
pub mod eval;
pub mod exec;
pub mod fst;
pub mod lm;
pub mod seq2seq;
pub mod textfmt;

pub use error::{Error, Result};
pub use exec::Execution;
