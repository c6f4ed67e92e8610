//! Finite-difference sweep over every differentiable operation, including
//! the composite blocks. Each case draws random small inputs (dims <= 8),
//! builds a scalar loss through the op under test, and compares the tape's
//! gradients with central differences evaluated forward-only in f64.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{
    multi_head_attention, AttentionMask, DurationPredictorParams, FftBlockParams, ForwardCtx,
    MhaParams,
};
use crate::tensor::gradcheck::{check_gradients, random_shape, random_tensor, suite_rng};
use crate::tensor::{ConvPadding, LossKind, Tape, Tensor};

type LossFn = Box<dyn Fn(&Tape<f64>, &[Tensor<f64>]) -> crate::Result<Tensor<f64>>>;

struct Case {
    inputs: Vec<Tensor<f64>>,
    loss: LossFn,
}

/// Per-op result of the sweep.
#[derive(Debug, Clone)]
pub struct OpReport {
    pub op: &'static str,
    pub cases: usize,
    pub worst_rel_err: f64,
}

fn weights_like(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random_tensor(rng, shape)
}

/// Reduce an op output to a scalar through a fixed random weighting, so
/// transposed or misrouted gradients cannot cancel out.
fn weighted<F>(rng: &mut ChaCha8Rng, out_shape: &[usize], f: F) -> LossFn
where
    F: Fn(&Tape<f64>, &[Tensor<f64>]) -> crate::Result<Tensor<f64>> + 'static,
{
    let w = weights_like(rng, out_shape);
    Box::new(move |tape, ins| {
        let out = f(tape, ins)?;
        Ok(tape.sum_all(&tape.mul(&out, &w)?))
    })
}

fn case_for(op: &str, rng: &mut ChaCha8Rng) -> Case {
    match op {
        "add" => {
            let shape = random_shape(rng, 2);
            let a = random_tensor(rng, &shape);
            let b = random_tensor(rng, &shape);
            Case {
                loss: weighted(rng, &shape, |t, ins| t.add(&ins[0], &ins[1])),
                inputs: vec![a, b],
            }
        }
        "mul" => {
            let shape = random_shape(rng, 2);
            let a = random_tensor(rng, &shape);
            let b = random_tensor(rng, &shape);
            Case {
                loss: weighted(rng, &shape, |t, ins| t.mul(&ins[0], &ins[1])),
                inputs: vec![a, b],
            }
        }
        "scale" => {
            let shape = random_shape(rng, 2);
            let x = random_tensor(rng, &shape);
            let c = rng.gen_range(-2.0..2.0);
            Case {
                loss: weighted(rng, &shape, move |t, ins| Ok(t.scale(&ins[0], c))),
                inputs: vec![x],
            }
        }
        "exp" => {
            let shape = random_shape(rng, 1);
            let x = random_tensor(rng, &shape);
            Case {
                loss: weighted(rng, &shape, |t, ins| Ok(t.exp(&ins[0]))),
                inputs: vec![x],
            }
        }
        "relu" => {
            let shape = random_shape(rng, 2);
            let x = random_tensor(rng, &shape); // |x| >= 0.1, away from the kink
            Case {
                loss: weighted(rng, &shape, |t, ins| Ok(t.relu(&ins[0]))),
                inputs: vec![x],
            }
        }
        "mul_scalar_t" => {
            let shape = random_shape(rng, 2);
            let x = random_tensor(rng, &shape);
            let s = random_tensor(rng, &[1]);
            Case {
                loss: weighted(rng, &shape, |t, ins| t.mul_scalar_t(&ins[0], &ins[1])),
                inputs: vec![x, s],
            }
        }
        "matmul" => {
            let (m, k, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6));
            let a = random_tensor(rng, &[m, k]);
            let b = random_tensor(rng, &[k, n]);
            Case {
                loss: weighted(rng, &[m, n], |t, ins| t.matmul(&ins[0], &ins[1])),
                inputs: vec![a, b],
            }
        }
        "matmul_tb" => {
            let (m, k, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6));
            let a = random_tensor(rng, &[m, k]);
            let b = random_tensor(rng, &[n, k]);
            Case {
                loss: weighted(rng, &[m, n], |t, ins| t.matmul_tb(&ins[0], &ins[1])),
                inputs: vec![a, b],
            }
        }
        "transpose" => {
            let (r, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = random_tensor(rng, &[r, c]);
            Case {
                loss: weighted(rng, &[c, r], |t, ins| t.transpose(&ins[0])),
                inputs: vec![x],
            }
        }
        "add_bias" => {
            let (t_, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = random_tensor(rng, &[t_, c]);
            let b = random_tensor(rng, &[c]);
            Case {
                loss: weighted(rng, &[t_, c], |t, ins| t.add_bias(&ins[0], &ins[1])),
                inputs: vec![x, b],
            }
        }
        "reshape" => {
            let (r, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = random_tensor(rng, &[r, c]);
            Case {
                loss: weighted(rng, &[r * c], move |t, ins| t.reshape(&ins[0], &[r * c])),
                inputs: vec![x],
            }
        }
        "conv1d_same" | "conv1d_causal" => {
            let padding = if op == "conv1d_same" {
                ConvPadding::Same
            } else {
                ConvPadding::Causal
            };
            let t_ = rng.gen_range(1..=8);
            let cin = rng.gen_range(1..=4);
            let cout = rng.gen_range(1..=4);
            let k = *[1usize, 3, 5].get(rng.gen_range(0..3)).unwrap();
            let x = random_tensor(rng, &[t_, cin]);
            let w = random_tensor(rng, &[k, cin, cout]);
            let b = random_tensor(rng, &[cout]);
            Case {
                loss: weighted(rng, &[t_, cout], move |t, ins| {
                    t.conv1d(&ins[0], &ins[1], &ins[2], padding)
                }),
                inputs: vec![x, w, b],
            }
        }
        "conv1d_within" => {
            let padding = if rng.gen() {
                ConvPadding::Same
            } else {
                ConvPadding::Causal
            };
            let cin = rng.gen_range(1..=3);
            let cout = rng.gen_range(1..=3);
            let k = *[1usize, 3].get(rng.gen_range(0..2)).unwrap();
            // A random partition of 2..=8 rows into segments.
            let mut bounds = Vec::new();
            let mut at = 0;
            let total = rng.gen_range(2..=8);
            while at < total {
                let len = rng.gen_range(1..=total - at);
                bounds.push((at, len));
                at += len;
            }
            let x = random_tensor(rng, &[total, cin]);
            let w = random_tensor(rng, &[k, cin, cout]);
            let b = random_tensor(rng, &[cout]);
            Case {
                loss: weighted(rng, &[total, cout], move |t, ins| {
                    t.conv1d_within(&ins[0], &ins[1], &ins[2], padding, &bounds)
                }),
                inputs: vec![x, w, b],
            }
        }
        "slice_rows" => {
            let (r, c) = (rng.gen_range(2..=8), rng.gen_range(1..=4));
            let x = random_tensor(rng, &[r, c]);
            let start = rng.gen_range(0..r - 1);
            let len = rng.gen_range(1..=r - start);
            Case {
                loss: weighted(rng, &[len, c], move |t, ins| t.slice_rows(&ins[0], start, len)),
                inputs: vec![x],
            }
        }
        "concat_rows" => {
            let c = rng.gen_range(1..=4);
            let (r1, r2) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let a = random_tensor(rng, &[r1, c]);
            let b = random_tensor(rng, &[r2, c]);
            Case {
                loss: weighted(rng, &[r1 + r2, c], |t, ins| {
                    t.concat_rows(&[&ins[0], &ins[1]])
                }),
                inputs: vec![a, b],
            }
        }
        "softmax" => {
            let rank = rng.gen_range(1..=3);
            let shape = random_shape(rng, rank);
            let axis = rng.gen_range(0..rank);
            let x = random_tensor(rng, &shape);
            Case {
                loss: weighted(rng, &shape, move |t, ins| t.softmax(&ins[0], axis)),
                inputs: vec![x],
            }
        }
        "layer_norm" => {
            let (r, c) = (rng.gen_range(1..=6), rng.gen_range(2..=8));
            let x = random_tensor(rng, &[r, c]);
            let gamma = random_tensor(rng, &[c]);
            let beta = random_tensor(rng, &[c]);
            Case {
                loss: weighted(rng, &[r, c], |t, ins| {
                    t.layer_norm(&ins[0], &ins[1], &ins[2], 1e-5)
                }),
                inputs: vec![x, gamma, beta],
            }
        }
        "dropout" => {
            let shape = random_shape(rng, 2);
            let x = random_tensor(rng, &shape);
            let seed = rng.gen();
            let p = rng.gen_range(0.1..0.7);
            Case {
                loss: weighted(rng, &shape, move |t, ins| t.dropout(&ins[0], p, true, seed)),
                inputs: vec![x],
            }
        }
        "embedding" => {
            let v = rng.gen_range(2..=8);
            let c = rng.gen_range(1..=6);
            let n = rng.gen_range(1..=8);
            let table = random_tensor(rng, &[v, c]);
            let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
            Case {
                loss: weighted(rng, &[n, c], move |t, ins| t.embedding(&ins[0], &ids)),
                inputs: vec![table],
            }
        }
        "masked_mean_pool" => {
            let (t_, c) = (rng.gen_range(1..=8), rng.gen_range(1..=6));
            let x = random_tensor(rng, &[t_, c]);
            let mut mask: Vec<bool> = (0..t_).map(|_| rng.gen()).collect();
            if !mask.iter().any(|&m| m) {
                mask[0] = true;
            }
            Case {
                loss: weighted(rng, &[c], move |t, ins| t.masked_mean_pool(&ins[0], &mask)),
                inputs: vec![x],
            }
        }
        "l2_normalize" => {
            let n = rng.gen_range(1..=8);
            let x = random_tensor(rng, &[n]);
            Case {
                loss: weighted(rng, &[n], |t, ins| t.l2_normalize(&ins[0])),
                inputs: vec![x],
            }
        }
        "repeat_rows" => {
            let (n, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let x = random_tensor(rng, &[n, c]);
            let mut durations: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=3)).collect();
            if durations.iter().sum::<usize>() == 0 {
                durations[0] = 1;
            }
            let total: usize = durations.iter().sum();
            Case {
                loss: weighted(rng, &[total, c], move |t, ins| {
                    t.repeat_rows(&ins[0], &durations)
                }),
                inputs: vec![x],
            }
        }
        "slice_cols" => {
            let (t_, c) = (rng.gen_range(1..=6), rng.gen_range(2..=8));
            let x = random_tensor(rng, &[t_, c]);
            let start = rng.gen_range(0..c - 1);
            let len = rng.gen_range(1..=c - start);
            Case {
                loss: weighted(rng, &[t_, len], move |t, ins| t.slice_cols(&ins[0], start, len)),
                inputs: vec![x],
            }
        }
        "concat_cols" => {
            let t_ = rng.gen_range(1..=6);
            let (c1, c2) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let a = random_tensor(rng, &[t_, c1]);
            let b = random_tensor(rng, &[t_, c2]);
            Case {
                loss: weighted(rng, &[t_, c1 + c2], |t, ins| {
                    t.concat_cols(&[&ins[0], &ins[1]])
                }),
                inputs: vec![a, b],
            }
        }
        "stack_rows" => {
            let c = rng.gen_range(1..=6);
            let a = random_tensor(rng, &[c]);
            let b = random_tensor(rng, &[c]);
            let d = random_tensor(rng, &[c]);
            Case {
                loss: weighted(rng, &[3, c], |t, ins| {
                    t.stack_rows(&[&ins[0], &ins[1], &ins[2]])
                }),
                inputs: vec![a, b, d],
            }
        }
        "loss_mae" | "loss_mse" => {
            let kind = if op == "loss_mae" { LossKind::Mae } else { LossKind::Mse };
            let shape = random_shape(rng, 2);
            let p = random_tensor(rng, &shape);
            let t_ = random_tensor(rng, &shape);
            Case {
                loss: Box::new(move |t, ins| t.loss(&ins[0], &ins[1], kind)),
                inputs: vec![p, t_],
            }
        }
        "mean_all" => {
            let shape = random_shape(rng, 2);
            let x = random_tensor(rng, &shape);
            Case {
                loss: Box::new(|t, ins| Ok(t.mean_all(&ins[0]))),
                inputs: vec![x],
            }
        }
        "sum_all" => {
            let shape = random_shape(rng, 1);
            let x = random_tensor(rng, &shape);
            Case {
                loss: Box::new(|t, ins| Ok(t.sum_all(&ins[0]))),
                inputs: vec![x],
            }
        }
        "cross_entropy_diag" => {
            let b = rng.gen_range(2..=6);
            let x = random_tensor(rng, &[b, b]);
            Case {
                loss: Box::new(|t, ins| t.cross_entropy_diag(&ins[0])),
                inputs: vec![x],
            }
        }
        "multi_head_attention" => {
            let t_ = rng.gen_range(1..=6);
            let d = 6;
            let x = random_tensor(rng, &[t_, d]);
            let wq = random_tensor(rng, &[d, d]);
            let wk = random_tensor(rng, &[d, d]);
            let wv = random_tensor(rng, &[d, d]);
            let wo = random_tensor(rng, &[d, d]);
            let causal: bool = rng.gen();
            Case {
                loss: weighted(rng, &[t_, d], move |t, ins| {
                    let params = MhaParams {
                        wq: crate::tensor::Parameter::new("wq", ins[1].clone()),
                        wk: crate::tensor::Parameter::new("wk", ins[2].clone()),
                        wv: crate::tensor::Parameter::new("wv", ins[3].clone()),
                        wo: crate::tensor::Parameter::new("wo", ins[4].clone()),
                        n_heads: 2,
                        d_model: d,
                    };
                    let mask = if causal {
                        AttentionMask::causal(t_, t_)
                    } else {
                        AttentionMask::full(t_)
                    };
                    multi_head_attention(t, &ins[0], &params, &mask)
                }),
                inputs: vec![x, wq, wk, wv, wo],
            }
        }
        "fft_block" => {
            let t_ = rng.gen_range(1..=6);
            let d = 6;
            let hidden = 8;
            let block = FftBlockParams::<f64>::new("g", d, 2, hidden, 3, 1, 0.0, rng.gen()).unwrap();
            let x = random_tensor(rng, &[t_, d]);
            let mut inputs = vec![x];
            let params = block.parameters();
            for p in &params {
                inputs.push(random_tensor(rng, &p.shape()));
            }
            let causal: bool = rng.gen();
            Case {
                loss: weighted(rng, &[t_, d], move |t, ins| {
                    for (p, value) in params.iter().zip(&ins[1..]) {
                        p.set_value(value.clone())?;
                    }
                    let mask = if causal {
                        AttentionMask::causal(t_, t_)
                    } else {
                        AttentionMask::full(t_)
                    };
                    block.forward(t, &ins[0], &mask, &ForwardCtx::inference())
                }),
                inputs,
            }
        }
        "duration_predictor" => {
            let n = rng.gen_range(1..=6);
            let d = 6;
            let dur = DurationPredictorParams::<f64>::new("g", d, 3, 0.0, rng.gen()).unwrap();
            let x = random_tensor(rng, &[n, d]);
            let mut inputs = vec![x];
            let params = dur.parameters();
            for p in &params {
                inputs.push(random_tensor(rng, &p.shape()));
            }
            Case {
                loss: weighted(rng, &[n], move |t, ins| {
                    for (p, value) in params.iter().zip(&ins[1..]) {
                        p.set_value(value.clone())?;
                    }
                    dur.forward(t, &ins[0], &ForwardCtx::inference())
                }),
                inputs,
            }
        }
        other => panic!("unknown op '{other}'"),
    }
}

/// Every op the sweep covers.
pub const ALL_OPS: &[&str] = &[
    "add",
    "mul",
    "scale",
    "exp",
    "relu",
    "mul_scalar_t",
    "matmul",
    "matmul_tb",
    "transpose",
    "add_bias",
    "reshape",
    "conv1d_same",
    "conv1d_causal",
    "conv1d_within",
    "slice_rows",
    "concat_rows",
    "softmax",
    "layer_norm",
    "dropout",
    "embedding",
    "masked_mean_pool",
    "l2_normalize",
    "repeat_rows",
    "slice_cols",
    "concat_cols",
    "stack_rows",
    "loss_mae",
    "loss_mse",
    "mean_all",
    "sum_all",
    "cross_entropy_diag",
    "multi_head_attention",
    "fft_block",
    "duration_predictor",
];

/// Run `cases_per_op` random checks for every op; the first failure aborts
/// with a description, otherwise the per-op worst errors come back.
pub fn run_gradient_suite(
    cases_per_op: usize,
    seed: u64,
    tol: f64,
) -> std::result::Result<Vec<OpReport>, String> {
    let mut rng = suite_rng(seed);
    let mut reports = Vec::with_capacity(ALL_OPS.len());
    for &op in ALL_OPS {
        let mut worst = 0.0f64;
        for case_idx in 0..cases_per_op {
            let case = case_for(op, &mut rng);
            let err = check_gradients(&case.inputs, &case.loss, tol)
                .map_err(|e| format!("{op} case {case_idx}: {e}"))?;
            worst = worst.max(err);
        }
        reports.push(OpReport {
            op,
            cases: cases_per_op,
            worst_rel_err: worst,
        });
    }
    Ok(reports)
}
