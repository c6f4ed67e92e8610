use crate::error::{Error, Result};
use crate::tensor::{Element, Parameter};

/// Adam hyperparameters with the standard defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step over all parameters. Every gradient is
/// validated first; a non-finite gradient aborts before any parameter or
/// moment buffer has been touched, so a failed step mutates nothing.
pub fn adam_step<E: Element>(params: &[Parameter<E>], lr: f64, cfg: &AdamConfig) -> Result<()> {
    for p in params {
        if !p.grad_all_finite() {
            return Err(Error::NonFiniteGradient(p.name()));
        }
    }
    for p in params {
        p.apply_adam(lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    Ok(())
}
