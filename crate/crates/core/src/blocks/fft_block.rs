use crate::blocks::{
    multi_head_attention, multi_head_attention_stack, AttentionMask, ForwardCtx, MhaParams,
};
use crate::error::{Error, Result};
use crate::tensor::{
    param_seed, seeded_init, ConvPadding, Element, InitScheme, Parameter, Tape, Tensor,
};

const LN_EPS: f64 = 1e-5;

/// One feed-forward Transformer block: self-attention and a two-layer 1-D
/// convolutional feed-forward sublayer, each wrapped in residual + dropout
/// + post layer norm:
///
/// `y1 = LN(x + Drop(MHA(x)))`
/// `y2 = LN(y1 + Drop(Conv_k1 -> ReLU -> Conv_k2 (y1)))`
///
/// Under a causal mask the convolutions switch to causal (left) padding so
/// the whole block is exactly causal, not just the attention.
pub struct FftBlockParams<E: Element = f32> {
    pub attn: MhaParams<E>,
    pub conv1_w: Parameter<E>,
    pub conv1_b: Parameter<E>,
    pub conv2_w: Parameter<E>,
    pub conv2_b: Parameter<E>,
    pub ln1_gamma: Parameter<E>,
    pub ln1_beta: Parameter<E>,
    pub ln2_gamma: Parameter<E>,
    pub ln2_beta: Parameter<E>,
    pub dropout: f64,
    pub kernel1: usize,
    pub kernel2: usize,
    pub d_model: usize,
    pub conv_hidden: usize,
}

impl<E: Element> FftBlockParams<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prefix: &str,
        d_model: usize,
        n_heads: usize,
        conv_hidden: usize,
        kernel1: usize,
        kernel2: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidRate(dropout));
        }
        let xavier = |name: String, shape: &[usize]| -> Result<Parameter<E>> {
            Ok(Parameter::new(
                name.clone(),
                seeded_init(shape, InitScheme::XavierUniform, param_seed(seed, &name))?,
            ))
        };
        let zeros = |name: String, n: usize| -> Result<Parameter<E>> {
            Ok(Parameter::new(name, Tensor::zeros(&[n])?))
        };
        let ones = |name: String, n: usize| -> Result<Parameter<E>> {
            Ok(Parameter::new(
                name,
                Tensor::from_vec(vec![E::one(); n], &[n])?,
            ))
        };
        Ok(FftBlockParams {
            attn: MhaParams::new(&format!("{prefix}.attn"), d_model, n_heads, seed)?,
            conv1_w: xavier(format!("{prefix}.conv1.weight"), &[kernel1, d_model, conv_hidden])?,
            conv1_b: zeros(format!("{prefix}.conv1.bias"), conv_hidden)?,
            conv2_w: xavier(format!("{prefix}.conv2.weight"), &[kernel2, conv_hidden, d_model])?,
            conv2_b: zeros(format!("{prefix}.conv2.bias"), d_model)?,
            ln1_gamma: ones(format!("{prefix}.ln1.gamma"), d_model)?,
            ln1_beta: zeros(format!("{prefix}.ln1.beta"), d_model)?,
            ln2_gamma: ones(format!("{prefix}.ln2.gamma"), d_model)?,
            ln2_beta: zeros(format!("{prefix}.ln2.beta"), d_model)?,
            dropout,
            kernel1,
            kernel2,
            d_model,
            conv_hidden,
        })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = self.attn.parameters();
        params.extend([
            self.conv1_w.clone(),
            self.conv1_b.clone(),
            self.conv2_w.clone(),
            self.conv2_b.clone(),
            self.ln1_gamma.clone(),
            self.ln1_beta.clone(),
            self.ln2_gamma.clone(),
            self.ln2_beta.clone(),
        ]);
        params
    }

    pub fn forward(
        &self,
        tape: &Tape<E>,
        x: &Tensor<E>,
        mask: &AttentionMask,
        ctx: &ForwardCtx,
    ) -> Result<Tensor<E>> {
        if mask.valid_len == mask.total_len {
            // Fully valid single sequence: same computation as a one-segment
            // stack.
            return self.forward_stack(tape, x, &[(0, mask.total_len)], mask.causal, ctx);
        }
        let conv_padding = if mask.causal {
            ConvPadding::Causal
        } else {
            ConvPadding::Same
        };
        let attn_out = multi_head_attention(tape, x, &self.attn, mask)?;
        let attn_out = tape.dropout(&attn_out, self.dropout, ctx.training, ctx.next_seed())?;
        let y1 = tape.layer_norm(
            &tape.add(x, &attn_out)?,
            &self.ln1_gamma.value(),
            &self.ln1_beta.value(),
            LN_EPS,
        )?;

        let h = tape.conv1d(&y1, &self.conv1_w.value(), &self.conv1_b.value(), conv_padding)?;
        let h = tape.relu(&h);
        let h = tape.conv1d(&h, &self.conv2_w.value(), &self.conv2_b.value(), conv_padding)?;
        let h = tape.dropout(&h, self.dropout, ctx.training, ctx.next_seed())?;
        tape.layer_norm(
            &tape.add(&y1, &h)?,
            &self.ln2_gamma.value(),
            &self.ln2_beta.value(),
            LN_EPS,
        )
    }

    /// The block over several fully valid sequences stacked row-wise; the
    /// position-local sublayers run whole-stack, attention and convolution
    /// stay confined to their own segment.
    pub fn forward_stack(
        &self,
        tape: &Tape<E>,
        x: &Tensor<E>,
        bounds: &[(usize, usize)],
        causal: bool,
        ctx: &ForwardCtx,
    ) -> Result<Tensor<E>> {
        let conv_padding = if causal {
            ConvPadding::Causal
        } else {
            ConvPadding::Same
        };
        let attn_out = multi_head_attention_stack(tape, x, bounds, causal, &self.attn)?;
        let attn_out = tape.dropout(&attn_out, self.dropout, ctx.training, ctx.next_seed())?;
        let y1 = tape.layer_norm(
            &tape.add(x, &attn_out)?,
            &self.ln1_gamma.value(),
            &self.ln1_beta.value(),
            LN_EPS,
        )?;

        let h = tape.conv1d_within(
            &y1,
            &self.conv1_w.value(),
            &self.conv1_b.value(),
            conv_padding,
            bounds,
        )?;
        let h = tape.relu(&h);
        let h = tape.conv1d_within(
            &h,
            &self.conv2_w.value(),
            &self.conv2_b.value(),
            conv_padding,
            bounds,
        )?;
        let h = tape.dropout(&h, self.dropout, ctx.training, ctx.next_seed())?;
        tape.layer_norm(
            &tape.add(&y1, &h)?,
            &self.ln2_gamma.value(),
            &self.ln2_beta.value(),
            LN_EPS,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(d: usize, hidden: usize) -> FftBlockParams<f32> {
        FftBlockParams::new("blk", d, 2, hidden, 9, 1, 0.1, 3).unwrap()
    }

    #[test]
    fn preserves_shape_across_lengths() {
        let b = block(8, 16);
        let ctx = ForwardCtx::inference();
        for t in [1usize, 2, 17, 64] {
            let tape = Tape::inference();
            let x = seeded_init::<f32>(&[t, 8], InitScheme::Normal(1.0), t as u64).unwrap();
            let y = b.forward(&tape, &x, &AttentionMask::full(t), &ctx).unwrap();
            assert_eq!(y.shape(), &[t, 8]);
        }
    }

    #[test]
    fn default_hidden_width_is_1024() {
        let b = FftBlockParams::<f32>::new("blk", 256, 2, 1024, 9, 1, 0.1, 3).unwrap();
        assert_eq!(b.conv1_w.shape(), vec![9, 256, 1024]);
        assert_eq!(b.conv2_w.shape(), vec![1, 1024, 256]);
        let tape = Tape::inference();
        let x = seeded_init::<f32>(&[5, 256], InitScheme::Normal(1.0), 1).unwrap();
        let h = tape
            .conv1d(&x, &b.conv1_w.value(), &b.conv1_b.value(), ConvPadding::Same)
            .unwrap();
        assert_eq!(h.shape(), &[5, 1024]);
    }

    // With all weights zero the block reduces to LN(LN(x)); compose that by
    // hand and compare.
    #[test]
    fn zero_weights_reduce_to_double_layer_norm() {
        let d = 8;
        let mut b = block(d, 16);
        for p in b.parameters() {
            let value = if p.name().ends_with("gamma") {
                Tensor::from_vec(vec![1.0; p.numel()], &p.shape()).unwrap()
            } else {
                Tensor::zeros(&p.shape()).unwrap()
            };
            p.set_value(value).unwrap();
        }
        b.dropout = 0.0;
        let tape = Tape::<f32>::inference();
        let x = seeded_init::<f32>(&[4, d], InitScheme::Normal(2.0), 9).unwrap();
        let got = b
            .forward(&tape, &x, &AttentionMask::full(4), &ForwardCtx::inference())
            .unwrap();

        let gamma = Tensor::from_vec(vec![1.0; d], &[d]).unwrap();
        let beta = Tensor::zeros(&[d]).unwrap();
        let ln1 = tape.layer_norm(&x, &gamma, &beta, LN_EPS).unwrap();
        let want = tape.layer_norm(&ln1, &gamma, &beta, LN_EPS).unwrap();
        for (g, w) in got.data().iter().zip(want.data()) {
            assert!((g - w).abs() < 1e-6, "{g} vs {w}");
        }
    }

    // The masked variant must be causal through the convolutions as well.
    #[test]
    fn causal_block_is_bitwise_causal() {
        let d = 8;
        let b = block(d, 16);
        let ctx = ForwardCtx::inference();
        let t = 6;
        let x = seeded_init::<f32>(&[t, d], InitScheme::Normal(1.0), 21).unwrap();
        let mask = AttentionMask::causal(t, t);
        let tape = Tape::inference();
        let base = b.forward(&tape, &x, &mask, &ctx).unwrap();

        let mut bumped = x.data().to_vec();
        for v in &mut bumped[(t - 1) * d..] {
            *v += 2.0;
        }
        let x2 = Tensor::from_vec(bumped, &[t, d]).unwrap();
        let out = b.forward(&tape, &x2, &mask, &ctx).unwrap();
        assert_eq!(&base.data()[..(t - 1) * d], &out.data()[..(t - 1) * d]);
    }

    #[test]
    fn training_dropout_is_seed_deterministic() {
        let b = block(8, 16);
        let x = seeded_init::<f32>(&[5, 8], InitScheme::Normal(1.0), 2).unwrap();
        let run = |seed: u64| {
            let tape = Tape::<f32>::inference();
            let ctx = ForwardCtx::training(seed);
            b.forward(&tape, &x, &AttentionMask::full(5), &ctx)
                .unwrap()
                .data()
                .to_vec()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }
}
