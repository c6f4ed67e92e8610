use crate::blocks::{FftBlockParams, ForwardCtx, Linear};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::tensor::{Element, Parameter, Tape, Tensor};
use crate::text::positional_encoding_stacked;

/// Frame-level decoder: positional encoding, a stack of masked FFT blocks,
/// and a linear projection from the model width down to the mel bands.
/// Fully parallel; output length always equals input length.
///
/// With `causal` set (the default), attention masking and conv padding are
/// both causal, so frame `t` is bitwise independent of inputs after `t`.
pub struct MelDecoder<E: Element = f32> {
    pub blocks: Vec<FftBlockParams<E>>,
    pub out: Linear<E>,
    pub causal: bool,
    pub cfg: ModelConfig,
}

impl<E: Element> MelDecoder<E> {
    pub const PREFIX: &'static str = "decoder.";

    pub fn new(cfg: &ModelConfig, causal: bool, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let blocks = (0..cfg.n_blocks)
            .map(|i| {
                FftBlockParams::new(
                    &format!("decoder.fft.{i}"),
                    cfg.d_model,
                    cfg.n_heads,
                    cfg.conv_hidden,
                    cfg.conv_kernel1,
                    cfg.conv_kernel2,
                    cfg.block_dropout,
                    seed,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MelDecoder {
            blocks,
            out: Linear::new("decoder.out", cfg.d_model, cfg.n_mels, seed)?,
            causal,
            cfg: *cfg,
        })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params: Vec<Parameter<E>> =
            self.blocks.iter().flat_map(|b| b.parameters()).collect();
        params.extend(self.out.parameters());
        params
    }

    /// Decode length-regulated encoder frames `[M, d_model]` into a
    /// `[M, n_mels]` log-mel prediction.
    pub fn decode(&self, tape: &Tape<E>, expanded: &Tensor<E>, ctx: &ForwardCtx) -> Result<Tensor<E>> {
        let (m, _) = expanded.dims2()?;
        self.decode_stack(tape, expanded, &[(0, m)], ctx)
    }

    /// Decode several sequences stacked row-wise; positions (and causality,
    /// when enabled) restart at every segment boundary.
    pub fn decode_stack(
        &self,
        tape: &Tape<E>,
        expanded: &Tensor<E>,
        bounds: &[(usize, usize)],
        ctx: &ForwardCtx,
    ) -> Result<Tensor<E>> {
        let lengths: Vec<usize> = bounds.iter().map(|&(_, len)| len).collect();
        let pe = positional_encoding_stacked::<E>(&lengths, self.cfg.d_model)?;
        let mut h = tape.add(expanded, &pe)?;
        for block in &self.blocks {
            h = block.forward_stack(tape, &h, bounds, self.causal, ctx)?;
        }
        self.out.forward(tape, &h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{seeded_init, InitScheme};

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_blocks: 2,
            conv_hidden: 16,
            conv_kernel1: 9,
            conv_kernel2: 1,
            block_dropout: 0.0,
            dur_kernel: 3,
            dur_dropout: 0.5,
            n_mels: 6,
        }
    }

    #[test]
    fn output_is_m_by_n_mels() {
        let dec = MelDecoder::<f32>::new(&tiny_cfg(), true, 5).unwrap();
        for m in [1usize, 2, 33, 257] {
            let tape = Tape::inference();
            let x = seeded_init::<f32>(&[m, 8], InitScheme::Normal(1.0), m as u64).unwrap();
            let y = dec.decode(&tape, &x, &ForwardCtx::inference()).unwrap();
            assert_eq!(y.shape(), &[m, 6]);
        }
    }

    #[test]
    fn default_projection_narrows_to_80() {
        let dec = MelDecoder::<f32>::new(&ModelConfig::default(), true, 5).unwrap();
        assert_eq!(dec.out.weight.shape(), vec![256, 80]);
    }

    // Perturbation oracle: the causal decoder's past frames cannot see the
    // future, bitwise.
    #[test]
    fn perturbing_last_frame_leaves_past_bitwise_unchanged() {
        let cfg = tiny_cfg();
        let dec = MelDecoder::<f32>::new(&cfg, true, 5).unwrap();
        let ctx = ForwardCtx::inference();
        for m in [2usize, 5, 16] {
            let tape = Tape::inference();
            let x = seeded_init::<f32>(&[m, 8], InitScheme::Normal(1.0), 100 + m as u64).unwrap();
            let base = dec.decode(&tape, &x, &ctx).unwrap();

            let mut bumped = x.data().to_vec();
            for v in &mut bumped[(m - 1) * 8..] {
                *v += 1.0;
            }
            let x2 = Tensor::from_vec(bumped, &[m, 8]).unwrap();
            let out = dec.decode(&tape, &x2, &ctx).unwrap();
            assert_eq!(
                &base.data()[..(m - 1) * 6],
                &out.data()[..(m - 1) * 6],
                "M = {m}"
            );
        }
    }

    #[test]
    fn non_causal_variant_sees_the_future() {
        let dec = MelDecoder::<f32>::new(&tiny_cfg(), false, 5).unwrap();
        let ctx = ForwardCtx::inference();
        let m = 8;
        let tape = Tape::inference();
        let x = seeded_init::<f32>(&[m, 8], InitScheme::Normal(1.0), 3).unwrap();
        let base = dec.decode(&tape, &x, &ctx).unwrap();
        let mut bumped = x.data().to_vec();
        for v in &mut bumped[(m - 1) * 8..] {
            *v += 1.0;
        }
        let out = dec
            .decode(&tape, &Tensor::from_vec(bumped, &[m, 8]).unwrap(), &ctx)
            .unwrap();
        assert_ne!(&base.data()[..(m - 1) * 6], &out.data()[..(m - 1) * 6]);
    }
}
