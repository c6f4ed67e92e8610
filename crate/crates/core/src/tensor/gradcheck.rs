//! Finite-difference gradient checking. The numeric side evaluates the
//! function forward-only at perturbed inputs, so it exercises none of the
//! backward rules it is judging. Checks run in `f64`: central differences
//! in single precision would be dominated by rounding error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Tape, Tensor};

/// Relative-error tolerance used by the gradient suite.
pub const DEFAULT_TOL: f64 = 1e-4;

/// Perturbation scale for central differences.
pub const DEFAULT_STEP: f64 = 1e-7;

/// Central-difference gradient of `f` w.r.t. input `idx`, evaluated
/// forward-only.
pub fn numerical_grad<F>(inputs: &[Tensor<f64>], idx: usize, f: &F) -> Result<Vec<f64>>
where
    F: Fn(&Tape<f64>, &[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let base = &inputs[idx];
    let mut grad = vec![0.0; base.numel()];
    for i in 0..base.numel() {
        let h = DEFAULT_STEP * base.data()[i].abs().max(1.0);
        let eval = |delta: f64| -> Result<f64> {
            let mut data = base.data().to_vec();
            data[i] += delta;
            let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
            probe[idx] = Tensor::from_vec(data, base.shape())?;
            let tape = Tape::inference();
            Ok(f(&tape, &probe)?.item())
        };
        grad[i] = (eval(h)? - eval(-h)?) / (2.0 * h);
    }
    Ok(grad)
}

/// Norm-based relative error between two gradient vectors. The scale is
/// floored at 1e-3, so when both gradients are essentially zero the check
/// degrades to absolute agreement within `tol * 1e-3` instead of dividing
/// finite-difference round-off by itself.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt()
        + numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(1e-3)
    }
}

/// Compare analytic gradients of a scalar-valued function against central
/// finite differences for every input. Returns the worst relative error, or
/// an error message describing the first input that exceeded `tol`.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F, tol: f64) -> std::result::Result<f64, String>
where
    F: Fn(&Tape<f64>, &[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    // Analytic pass: variables on a recording tape.
    let vars: Vec<Tensor<f64>> = inputs
        .iter()
        .map(|t| Tensor::variable(t.data().to_vec(), t.shape()).expect("valid input"))
        .collect();
    let tape = Tape::new();
    let loss = f(&tape, &vars).map_err(|e| format!("forward failed: {e}"))?;
    if !loss.is_scalar() {
        return Err(format!("loss must be scalar, got {:?}", loss.shape()));
    }
    tape.backward(&loss).map_err(|e| format!("backward failed: {e}"))?;

    let mut worst = 0.0f64;
    for (idx, var) in vars.iter().enumerate() {
        let analytic = var
            .grad()
            .unwrap_or_else(|| vec![0.0; var.numel()]);
        let numeric =
            numerical_grad(inputs, idx, &f).map_err(|e| format!("fd eval failed: {e}"))?;
        let err = relative_error(&analytic, &numeric);
        if err > tol {
            return Err(format!(
                "input {idx} (shape {:?}): rel err {err:.3e} > {tol:.0e}\n analytic: {analytic:.6?}\n numeric:  {numeric:.6?}",
                var.shape()
            ));
        }
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Uniform random test tensor in [-1, 1], away from zero where kinks and
/// normalization denominators live.
pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let data: Vec<f64> = (0..shape.iter().product())
        .map(|_| {
            let v: f64 = rng.gen_range(0.1..1.0);
            if rng.gen::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(data, shape).expect("valid shape")
}

/// Random small shape with every dimension <= 8.
pub fn random_shape(rng: &mut ChaCha8Rng, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.gen_range(1..=8)).collect()
}

/// Seeded RNG for reproducible gradient-suite draws.
pub fn suite_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LossKind;

    #[test]
    fn numerical_grad_matches_analytic_square() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5], &[3]).unwrap();
        let f = |tape: &Tape<f64>, ins: &[Tensor<f64>]| {
            let sq = tape.mul(&ins[0], &ins[0])?;
            Ok(tape.sum_all(&sq))
        };
        let g = numerical_grad(std::slice::from_ref(&x), 0, &f).unwrap();
        for (gi, want) in g.iter().zip([2.0, -4.0, 1.0]) {
            assert!((gi - want).abs() < 1e-6, "{gi} vs {want}");
        }
    }

    #[test]
    fn checker_accepts_exact_gradients() {
        let mut rng = suite_rng(5);
        let x = random_tensor(&mut rng, &[3, 2]);
        let t = random_tensor(&mut rng, &[3, 2]);
        let worst = check_gradients(
            &[x, t],
            |tape, ins| tape.loss(&ins[0], &ins[1], LossKind::Mse),
            DEFAULT_TOL,
        )
        .unwrap();
        assert!(worst < DEFAULT_TOL);
    }

    #[test]
    fn checker_flags_a_wrong_slope() {
        // The forward value the FD probe sees is x^2 evaluated with a frozen
        // copy, while the tape differentiates 2*x^2; slopes disagree by 2x.
        let x = Tensor::from_vec(vec![0.7, -0.3], &[2]).unwrap();
        let frozen = x.clone();
        let res = check_gradients(
            std::slice::from_ref(&x),
            move |tape, ins| {
                let live = if tape.is_recording() { &ins[0] } else { &frozen };
                let sq = tape.mul(live, live)?;
                let doubled = tape.scale(&sq, if tape.is_recording() { 2.0 } else { 1.0 });
                let _ = ins;
                Ok(tape.sum_all(&doubled))
            },
            DEFAULT_TOL,
        );
        assert!(res.is_err(), "a 2x slope mismatch must be reported");
    }

    #[test]
    fn relative_error_handles_zero_gradients() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!(relative_error(&[1.0, 0.0], &[0.0, 0.0]) > 0.4);
    }
}
