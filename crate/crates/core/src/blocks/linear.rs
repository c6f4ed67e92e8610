use crate::error::Result;
use crate::tensor::{param_seed, seeded_init, Element, InitScheme, Parameter, Tape, Tensor};

/// Dense layer `y = x . w + b` with xavier weight and zero bias init.
pub struct Linear<E: Element = f32> {
    pub weight: Parameter<E>,
    pub bias: Parameter<E>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<E: Element> Linear<E> {
    pub fn new(prefix: &str, in_dim: usize, out_dim: usize, seed: u64) -> Result<Self> {
        let wname = format!("{prefix}.weight");
        let bname = format!("{prefix}.bias");
        Ok(Linear {
            weight: Parameter::new(
                wname.clone(),
                seeded_init(&[in_dim, out_dim], InitScheme::XavierUniform, param_seed(seed, &wname))?,
            ),
            bias: Parameter::new(bname, Tensor::zeros(&[out_dim])?),
            in_dim,
            out_dim,
        })
    }

    pub fn forward(&self, tape: &Tape<E>, x: &Tensor<E>) -> Result<Tensor<E>> {
        tape.add_bias(&tape.matmul(x, &self.weight.value())?, &self.bias.value())
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}
