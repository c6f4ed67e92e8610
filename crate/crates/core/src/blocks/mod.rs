//! Reusable network components: multi-head attention with causal/padding
//! masking, the feed-forward Transformer (FFT) block, the duration
//! predictor, and length regulation.

mod attention;
mod duration;
mod fft_block;
mod linear;

pub use attention::{multi_head_attention, multi_head_attention_stack, AttentionMask, MhaParams};
pub use duration::{lr_to_frames, DurationPredictorParams};
pub use fft_block::FftBlockParams;
pub use linear::Linear;

use std::cell::Cell;

use crate::error::Result;
use crate::tensor::{Element, Tape, Tensor};

/// Per-forward context: dropout on/off plus a deterministic seed stream.
/// Every dropout site pulls the next seed, so a forward pass is a pure
/// function of (inputs, parameters, base seed).
pub struct ForwardCtx {
    pub training: bool,
    base_seed: u64,
    counter: Cell<u64>,
}

impl ForwardCtx {
    pub fn inference() -> Self {
        ForwardCtx {
            training: false,
            base_seed: 0,
            counter: Cell::new(0),
        }
    }

    pub fn training(base_seed: u64) -> Self {
        ForwardCtx {
            training: true,
            base_seed,
            counter: Cell::new(0),
        }
    }

    pub fn next_seed(&self) -> u64 {
        let c = self.counter.get();
        self.counter.set(c + 1);
        // splitmix64 over (base, site index)
        let mut z = self.base_seed ^ c.wrapping_mul(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
}

/// Repeat row `i` of `hidden[N, C]` `durations[i]` times, aligning the
/// phoneme-level sequence with the mel frame axis. Gradients of each output
/// row flow back to its source row.
pub fn length_regulator<E: Element>(
    tape: &Tape<E>,
    hidden: &Tensor<E>,
    durations: &[usize],
) -> Result<Tensor<E>> {
    tape.repeat_rows(hidden, durations)
}
