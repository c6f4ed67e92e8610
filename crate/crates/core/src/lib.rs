//! Contrastive text/mel pretraining and non-autoregressive text-to-speech.
//!
//! The crate is organized around a small tape-based autodiff tensor engine
//! (`tensor`), classic spectral DSP (`dsp`), a phoneme frontend (`text`),
//! feed-forward Transformer building blocks (`blocks`), the dual-encoder
//! contrastive model (`clip`), the synthesis model (`tts`), corpus tooling
//! (`data`) and a named-tensor checkpoint container (`checkpoint`).

pub mod blocks;
pub mod checkpoint;
pub mod clip;
pub mod config;
pub mod data;
pub mod dsp;
pub mod error;
pub mod gradsuite;
pub mod tensor;
pub mod text;
pub mod tts;

pub use error::{Error, Result};
