use crate::blocks::{ForwardCtx, Linear};
use crate::error::{Error, Result};
use crate::tensor::{
    param_seed, seeded_init, ConvPadding, Element, InitScheme, Parameter, Tape, Tensor,
};

const LN_EPS: f64 = 1e-5;

/// Duration predictor: two `conv(k=3) -> ReLU -> LayerNorm -> Dropout(0.5)`
/// stages over the phoneme-level hidden states, then a linear head emitting
/// one log-duration per position.
pub struct DurationPredictorParams<E: Element = f32> {
    pub conv1_w: Parameter<E>,
    pub conv1_b: Parameter<E>,
    pub ln1_gamma: Parameter<E>,
    pub ln1_beta: Parameter<E>,
    pub conv2_w: Parameter<E>,
    pub conv2_b: Parameter<E>,
    pub ln2_gamma: Parameter<E>,
    pub ln2_beta: Parameter<E>,
    pub out: Linear<E>,
    pub kernel: usize,
    pub dropout: f64,
    pub width: usize,
}

impl<E: Element> DurationPredictorParams<E> {
    pub fn new(prefix: &str, width: usize, kernel: usize, dropout: f64, seed: u64) -> Result<Self> {
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
        Ok(DurationPredictorParams {
            conv1_w: xavier(format!("{prefix}.conv1.weight"), &[kernel, width, width])?,
            conv1_b: zeros(format!("{prefix}.conv1.bias"), width)?,
            ln1_gamma: ones(format!("{prefix}.ln1.gamma"), width)?,
            ln1_beta: zeros(format!("{prefix}.ln1.beta"), width)?,
            conv2_w: xavier(format!("{prefix}.conv2.weight"), &[kernel, width, width])?,
            conv2_b: zeros(format!("{prefix}.conv2.bias"), width)?,
            ln2_gamma: ones(format!("{prefix}.ln2.gamma"), width)?,
            ln2_beta: zeros(format!("{prefix}.ln2.beta"), width)?,
            out: Linear::new(&format!("{prefix}.out"), width, 1, seed)?,
            kernel,
            dropout,
            width,
        })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = vec![
            self.conv1_w.clone(),
            self.conv1_b.clone(),
            self.ln1_gamma.clone(),
            self.ln1_beta.clone(),
            self.conv2_w.clone(),
            self.conv2_b.clone(),
            self.ln2_gamma.clone(),
            self.ln2_beta.clone(),
        ];
        params.extend(self.out.parameters());
        params
    }

    /// Log-durations `[N]` from phoneme-level hidden states `[N, width]`.
    pub fn forward(&self, tape: &Tape<E>, h: &Tensor<E>, ctx: &ForwardCtx) -> Result<Tensor<E>> {
        let (n, _) = h.dims2()?;
        self.forward_stack(tape, h, &[(0, n)], ctx)
    }

    /// The predictor over several sequences stacked row-wise; convolutions
    /// stay confined to their own segment.
    pub fn forward_stack(
        &self,
        tape: &Tape<E>,
        h: &Tensor<E>,
        bounds: &[(usize, usize)],
        ctx: &ForwardCtx,
    ) -> Result<Tensor<E>> {
        let (n, _) = h.dims2()?;
        let stage = |x: &Tensor<E>,
                     w: &Parameter<E>,
                     b: &Parameter<E>,
                     gamma: &Parameter<E>,
                     beta: &Parameter<E>|
         -> Result<Tensor<E>> {
            let y = tape.conv1d_within(x, &w.value(), &b.value(), ConvPadding::Same, bounds)?;
            let y = tape.relu(&y);
            let y = tape.layer_norm(&y, &gamma.value(), &beta.value(), LN_EPS)?;
            tape.dropout(&y, self.dropout, ctx.training, ctx.next_seed())
        };
        let y = stage(h, &self.conv1_w, &self.conv1_b, &self.ln1_gamma, &self.ln1_beta)?;
        let y = stage(&y, &self.conv2_w, &self.conv2_b, &self.ln2_gamma, &self.ln2_beta)?;
        let y = self.out.forward(tape, &y)?;
        tape.reshape(&y, &[n])
    }
}

/// Inference-time rounding of log-durations to whole frames:
/// `max(1, round(exp(log_d)))`, so every phoneme keeps at least one frame.
pub fn lr_to_frames<E: Element>(log_d: &Tensor<E>) -> Vec<usize> {
    log_d
        .data()
        .iter()
        .map(|&v| {
            let frames = v.to_f64().exp().round();
            if frames < 1.0 {
                1
            } else {
                frames as usize
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_length_matches_input() {
        let p = DurationPredictorParams::<f32>::new("dur", 8, 3, 0.5, 3).unwrap();
        assert_eq!(p.dropout, 0.5);
        assert_eq!(p.kernel, 3);
        for n in [1usize, 2, 9] {
            let tape = Tape::inference();
            let h = seeded_init::<f32>(&[n, 8], InitScheme::Normal(1.0), n as u64).unwrap();
            let d = p.forward(&tape, &h, &ForwardCtx::inference()).unwrap();
            assert_eq!(d.shape(), &[n]);
        }
    }

    #[test]
    fn frame_rounding_rule() {
        let t = Tensor::<f32>::from_vec(vec![0.0, 2.4f32.ln(), -20.0, 1.9f32.ln()], &[4]).unwrap();
        assert_eq!(lr_to_frames(&t), vec![1, 2, 1, 2]);
    }
}
