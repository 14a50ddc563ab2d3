//! Dense captioning of segmented video and distillation of the noisy caption
//! pool into a short synopsis.
//!
//! The crate is layered bottom-up:
//!
//! - [`diffcore`]: tensors, reverse-mode tape, LSTM cells, Adam, checkpoints.
//! - [`corpus`]: vocabulary, shots and videos, file formats, synthetic data.
//! - [`captioner`]: temporal attention, bidirectional encoder, greedy decoder.
//! - [`vlcmu`]: visual/language matching producing correctness scores.
//! - [`purport`]: video-level significance scores.
//! - [`pipeline`]: staged training, impact series, peak inference, synopses.
//! - [`metrics`]: ROUGE-SU4, ROUGE-L, BLEU-2 and multi-reference averaging.

pub mod captioner;
pub mod corpus;
pub mod diffcore;
pub mod error;
mod io;
pub mod metrics;
pub mod pipeline;
pub mod purport;
pub mod vlcmu;

pub use error::{Error, Result};
