use crate::error::{Error, Result};
use crate::tensor::{param_seed, seeded_init, Element, InitScheme, Parameter, Tape, Tensor};

/// Masked logits are forced to this value before the softmax; after max
/// subtraction the exponential underflows to exactly zero.
const MASK_VALUE: f64 = -1e9;

/// Attention mask over one sequence: keys at or beyond `valid_len` are
/// always hidden, and in causal mode each query additionally sees only keys
/// at its own position or earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionMask {
    pub causal: bool,
    pub valid_len: usize,
    pub total_len: usize,
}

impl AttentionMask {
    /// Everything visible (self-attention over a fully valid sequence).
    pub fn full(total_len: usize) -> Self {
        AttentionMask {
            causal: false,
            valid_len: total_len,
            total_len,
        }
    }

    pub fn padding(valid_len: usize, total_len: usize) -> Self {
        AttentionMask {
            causal: false,
            valid_len,
            total_len,
        }
    }

    pub fn causal(valid_len: usize, total_len: usize) -> Self {
        AttentionMask {
            causal: true,
            valid_len,
            total_len,
        }
    }

    /// Row-major `[T, T]` additive bias (0 for visible, -1e9 for masked).
    /// A mask that would leave any query row with no visible key is an
    /// error.
    pub fn bias<E: Element>(&self) -> Result<Tensor<E>> {
        let t = self.total_len;
        if t == 0 || self.valid_len == 0 || self.valid_len > t {
            return Err(Error::Mask(format!(
                "valid length {} of total {t} leaves fully-masked query rows",
                self.valid_len
            )));
        }
        let zero = E::zero();
        let masked = E::from_f64(MASK_VALUE);
        let mut data = vec![zero; t * t];
        for q in 0..t {
            for k in 0..t {
                if k >= self.valid_len || (self.causal && k > q) {
                    data[q * t + k] = masked;
                }
            }
        }
        Tensor::from_vec(data, &[t, t])
    }
}

/// Projection weights of one multi-head self-attention layer. Heads split
/// the model width evenly; outputs are re-concatenated and projected by
/// `wo`.
pub struct MhaParams<E: Element = f32> {
    pub wq: Parameter<E>,
    pub wk: Parameter<E>,
    pub wv: Parameter<E>,
    pub wo: Parameter<E>,
    pub n_heads: usize,
    pub d_model: usize,
}

impl<E: Element> MhaParams<E> {
    pub fn new(prefix: &str, d_model: usize, n_heads: usize, seed: u64) -> Result<Self> {
        if n_heads == 0 || d_model % n_heads != 0 {
            return Err(Error::InvalidShape(format!(
                "{n_heads} heads do not divide width {d_model}"
            )));
        }
        let mk = |name: &str| -> Result<Parameter<E>> {
            let full = format!("{prefix}.{name}");
            Ok(Parameter::new(
                full.clone(),
                seeded_init(&[d_model, d_model], InitScheme::XavierUniform, param_seed(seed, &full))?,
            ))
        };
        Ok(MhaParams {
            wq: mk("wq")?,
            wk: mk("wk")?,
            wv: mk("wv")?,
            wo: mk("wo")?,
            n_heads,
            d_model,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        vec![
            self.wq.clone(),
            self.wk.clone(),
            self.wv.clone(),
            self.wo.clone(),
        ]
    }
}

/// Validate that `bounds` tiles `rows` exactly.
pub(crate) fn check_bounds(bounds: &[(usize, usize)], rows: usize) -> Result<()> {
    let mut expect = 0;
    for &(start, len) in bounds {
        if start != expect || len == 0 {
            return Err(Error::Shape(format!(
                "segments must tile the rows: {bounds:?} for {rows} rows"
            )));
        }
        expect += len;
    }
    if expect != rows {
        return Err(Error::Shape(format!(
            "segments cover {expect} of {rows} rows"
        )));
    }
    Ok(())
}

/// Self-attention over independently attending segments stacked into one
/// matrix: the four projections run as whole-stack gemms, scores stay per
/// segment. Equivalent to attending each segment on its own with a full
/// (or causal) mask.
pub fn multi_head_attention_stack<E: Element>(
    tape: &Tape<E>,
    x: &Tensor<E>,
    bounds: &[(usize, usize)],
    causal: bool,
    params: &MhaParams<E>,
) -> Result<Tensor<E>> {
    let (rows, c) = x.dims2()?;
    if c != params.d_model {
        return Err(Error::Shape(format!(
            "attention expects width {}, got {c}",
            params.d_model
        )));
    }
    check_bounds(bounds, rows)?;
    let q = tape.matmul(x, &params.wq.value())?;
    let k = tape.matmul(x, &params.wk.value())?;
    let v = tape.matmul(x, &params.wv.value())?;
    let dh = params.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    // One causal bias per distinct segment length.
    let mut biases: std::collections::HashMap<usize, Tensor<E>> = std::collections::HashMap::new();

    let mut per_segment = Vec::with_capacity(bounds.len());
    for &(start, len) in bounds {
        let qs = tape.slice_rows(&q, start, len)?;
        let ks = tape.slice_rows(&k, start, len)?;
        let vs = tape.slice_rows(&v, start, len)?;
        let bias = if causal {
            Some(match biases.get(&len) {
                Some(b) => b.clone(),
                None => {
                    let b = AttentionMask::causal(len, len).bias::<E>()?;
                    biases.insert(len, b.clone());
                    b
                }
            })
        } else {
            None
        };
        let mut heads = Vec::with_capacity(params.n_heads);
        for h in 0..params.n_heads {
            let qh = tape.slice_cols(&qs, h * dh, dh)?;
            let kh = tape.slice_cols(&ks, h * dh, dh)?;
            let vh = tape.slice_cols(&vs, h * dh, dh)?;
            let scores = tape.scale(&tape.matmul_tb(&qh, &kh)?, scale);
            let masked = match &bias {
                Some(b) => tape.add(&scores, b)?,
                None => scores,
            };
            let probs = tape.softmax(&masked, 1)?;
            heads.push(tape.matmul(&probs, &vh)?);
        }
        let refs: Vec<&Tensor<E>> = heads.iter().collect();
        per_segment.push(tape.concat_cols(&refs)?);
    }
    let refs: Vec<&Tensor<E>> = per_segment.iter().collect();
    let concat = tape.concat_rows(&refs)?;
    tape.matmul(&concat, &params.wo.value())
}

/// Masked multi-head self-attention over `x[T, d_model]`.
pub fn multi_head_attention<E: Element>(
    tape: &Tape<E>,
    x: &Tensor<E>,
    params: &MhaParams<E>,
    mask: &AttentionMask,
) -> Result<Tensor<E>> {
    let (t, c) = x.dims2()?;
    if c != params.d_model {
        return Err(Error::Shape(format!(
            "attention expects width {}, got {c}",
            params.d_model
        )));
    }
    if mask.total_len != t {
        return Err(Error::Mask(format!(
            "mask is for length {}, input has {t}",
            mask.total_len
        )));
    }
    let q = tape.matmul(x, &params.wq.value())?;
    let k = tape.matmul(x, &params.wk.value())?;
    let v = tape.matmul(x, &params.wv.value())?;
    let dh = params.head_dim();
    let bias = mask.bias::<E>()?;
    let scale = 1.0 / (dh as f64).sqrt();

    let mut heads = Vec::with_capacity(params.n_heads);
    for h in 0..params.n_heads {
        let qh = tape.slice_cols(&q, h * dh, dh)?;
        let kh = tape.slice_cols(&k, h * dh, dh)?;
        let vh = tape.slice_cols(&v, h * dh, dh)?;
        let scores = tape.scale(&tape.matmul_tb(&qh, &kh)?, scale);
        let masked = tape.add(&scores, &bias)?;
        let probs = tape.softmax(&masked, 1)?;
        heads.push(tape.matmul(&probs, &vh)?);
    }
    let refs: Vec<&Tensor<E>> = heads.iter().collect();
    let concat = tape.concat_cols(&refs)?;
    tape.matmul(&concat, &params.wo.value())
}
