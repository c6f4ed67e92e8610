use crate::error::{Error, Result};
use crate::tensor::{Element, LossKind, Parameter, Tape, Tensor};

/// Contrastive loss variants. `SimMse` literally encodes the stated
/// targets: matched pairs pulled to cosine 1, everything else to 0.
/// `InfoNce` is symmetric cross-entropy over temperature-scaled logits with
/// a learnable scale, provided for parity experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipLossKind {
    SimMse,
    InfoNce,
}

/// `B x B` cosine similarities of unit-norm embedding rows: text items
/// index rows, mel items columns. Inputs off unit norm by more than 1e-3
/// violate the contract.
pub fn similarity_matrix<E: Element>(
    tape: &Tape<E>,
    text_pooled: &Tensor<E>,
    mel_pooled: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (bt, d) = text_pooled.dims2()?;
    let (bm, d2) = mel_pooled.dims2()?;
    if bt != bm || d != d2 {
        return Err(Error::Shape(format!(
            "similarity needs matching [B, d] stacks, got {:?} and {:?}",
            text_pooled.shape(),
            mel_pooled.shape()
        )));
    }
    for (what, stack) in [("text", text_pooled), ("mel", mel_pooled)] {
        for (i, row) in stack.data().chunks(d).enumerate() {
            let norm = row.iter().map(|&v| v * v).sum::<E>().sqrt().to_f64();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::Contract(format!(
                    "{what} embedding {i} has norm {norm}, expected 1"
                )));
            }
        }
    }
    tape.matmul_tb(text_pooled, mel_pooled)
}

/// The contrastive objective with its (optional) learnable temperature.
pub struct ClipObjective<E: Element = f32> {
    pub kind: ClipLossKind,
    /// `log(1/temperature)`, present only for InfoNCE.
    pub logit_scale: Option<Parameter<E>>,
}

impl<E: Element> ClipObjective<E> {
    pub fn new(kind: ClipLossKind, init_temperature: f64) -> Result<Self> {
        let logit_scale = match kind {
            ClipLossKind::SimMse => None,
            ClipLossKind::InfoNce => {
                if init_temperature <= 0.0 {
                    return Err(Error::InvalidRange(format!(
                        "temperature must be positive, got {init_temperature}"
                    )));
                }
                Some(Parameter::new(
                    "clip.logit_scale",
                    Tensor::from_vec(vec![E::from_f64((1.0 / init_temperature).ln())], &[1])?,
                ))
            }
        };
        Ok(ClipObjective { kind, logit_scale })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        self.logit_scale.iter().cloned().collect()
    }

    /// Scalar loss over a similarity matrix. Batches of one item carry no
    /// contrastive signal; the loss is still defined but flagged.
    pub fn loss(&self, tape: &Tape<E>, similarity: &Tensor<E>) -> Result<Tensor<E>> {
        let (b, b2) = similarity.dims2()?;
        if b != b2 {
            return Err(Error::Shape(format!(
                "similarity matrix must be square, got {:?}",
                similarity.shape()
            )));
        }
        if b < 2 {
            log::warn!("degenerate batch of {b}: contrastive loss has no negatives");
        }
        match self.kind {
            ClipLossKind::SimMse => {
                let mut eye = vec![E::zero(); b * b];
                for i in 0..b {
                    eye[i * b + i] = E::one();
                }
                let target = Tensor::from_vec(eye, &[b, b])?;
                tape.loss(similarity, &target, LossKind::Mse)
            }
            ClipLossKind::InfoNce => {
                let scale_param = self.logit_scale.as_ref().expect("set in new()");
                let scale = tape.exp(&scale_param.value());
                let logits = tape.mul_scalar_t(similarity, &scale)?;
                let rows = tape.cross_entropy_diag(&logits)?;
                let cols = tape.cross_entropy_diag(&tape.transpose(&logits)?)?;
                Ok(tape.scale(&tape.add(&rows, &cols)?, 0.5))
            }
        }
    }
}

/// Diagnostics read straight off the similarity values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityStats {
    pub diag_mean: f64,
    pub offdiag_mean: f64,
}

pub fn similarity_stats<E: Element>(similarity: &Tensor<E>) -> Result<SimilarityStats> {
    let (b, _) = similarity.dims2()?;
    let s = similarity.data();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..b {
        for j in 0..b {
            let v = s[i * b + j].to_f64();
            if i == j {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    Ok(SimilarityStats {
        diag_mean: diag / b as f64,
        offdiag_mean: if b > 1 { off / (b * (b - 1)) as f64 } else { 0.0 },
    })
}

/// Top-1 retrieval hits over rows (text -> mel) and columns (mel -> text);
/// ties break toward the lowest index.
pub fn retrieval_top1<E: Element>(similarity: &Tensor<E>) -> Result<(usize, usize)> {
    let (b, _) = similarity.dims2()?;
    let s = similarity.data();
    let mut t2m = 0;
    let mut m2t = 0;
    for i in 0..b {
        let row_best = (0..b)
            .max_by(|&a, &c| {
                s[i * b + a]
                    .partial_cmp(&s[i * b + c])
                    .unwrap()
                    .then(c.cmp(&a))
            })
            .unwrap();
        if row_best == i {
            t2m += 1;
        }
        let col_best = (0..b)
            .max_by(|&a, &c| {
                s[a * b + i]
                    .partial_cmp(&s[c * b + i])
                    .unwrap()
                    .then(c.cmp(&a))
            })
            .unwrap();
        if col_best == i {
            m2t += 1;
        }
    }
    Ok((t2m, m2t))
}
