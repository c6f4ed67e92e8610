//! Model and audio hyperparameter bundles with the stock defaults: 4 FFT
//! blocks of width 256 with 2 heads and 9/1 conv kernels around a 1024-wide
//! hidden layer, a kernel-3 duration predictor at dropout 0.5, and
//! 80-band mel analysis at 22050 Hz.

use crate::dsp::StftConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub conv_hidden: usize,
    pub conv_kernel1: usize,
    pub conv_kernel2: usize,
    pub block_dropout: f64,
    pub dur_kernel: usize,
    pub dur_dropout: f64,
    pub n_mels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 256,
            n_heads: 2,
            n_blocks: 4,
            conv_hidden: 1024,
            conv_kernel1: 9,
            conv_kernel2: 1,
            block_dropout: 0.1,
            dur_kernel: 3,
            dur_dropout: 0.5,
            n_mels: 80,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidShape(format!(
                "{} heads must divide model width {}",
                self.n_heads, self.d_model
            )));
        }
        if self.n_blocks == 0 || self.conv_hidden == 0 || self.n_mels == 0 {
            return Err(Error::InvalidShape(
                "block count, conv hidden width and mel count must be positive".into(),
            ));
        }
        for k in [self.conv_kernel1, self.conv_kernel2, self.dur_kernel] {
            if k % 2 == 0 {
                return Err(Error::InvalidKernel(k));
            }
        }
        for p in [self.block_dropout, self.dur_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidRate(p));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub f_min: f64,
    pub f_max: f64,
    pub griffin_lim_iters: usize,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            sample_rate: 22050,
            stft: StftConfig::default(),
            f_min: 0.0,
            f_max: 8000.0,
            griffin_lim_iters: 60,
        }
    }
}

impl AudioConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if self.sample_rate == 0 {
            return Err(Error::InvalidRange("sample rate must be positive".into()));
        }
        if self.f_max > self.sample_rate as f64 / 2.0 || self.f_min >= self.f_max {
            return Err(Error::InvalidRange(format!(
                "mel range [{}, {}] invalid for sample rate {}",
                self.f_min, self.f_max, self.sample_rate
            )));
        }
        if self.griffin_lim_iters == 0 {
            return Err(Error::InvalidRange("griffin-lim needs >= 1 iteration".into()));
        }
        Ok(())
    }
}

/// Training-harness knobs. The 90k-step full schedule stays reachable by
/// config; the step defaults here are desk-scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub warmup_steps: u64,
    pub lr_scale: f64,
    pub adam: crate::tensor::AdamConfig,
    pub lambda_duration: f64,
    pub loss: crate::clip::ClipLossKind,
    pub infonce_temperature: f64,
    pub freeze_encoder: bool,
    pub decoder_causal: bool,
    pub seed: u64,
    pub bucket_frames: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            steps: 2000,
            checkpoint_every: 500,
            log_every: 50,
            warmup_steps: 4000,
            lr_scale: 1.0,
            adam: crate::tensor::AdamConfig::default(),
            lambda_duration: 1.0,
            loss: crate::clip::ClipLossKind::SimMse,
            infonce_temperature: 0.07,
            freeze_encoder: false,
            decoder_causal: true,
            seed: 42,
            bucket_frames: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidRange("batch size must be positive".into()));
        }
        if self.warmup_steps == 0 || self.lr_scale <= 0.0 {
            return Err(Error::InvalidRange(
                "warmup steps and lr scale must be positive".into(),
            ));
        }
        if self.checkpoint_every == 0 || self.log_every == 0 {
            return Err(Error::InvalidRange(
                "checkpoint and log intervals must be positive".into(),
            ));
        }
        if self.lambda_duration < 0.0 {
            return Err(Error::InvalidRange("lambda_duration must be >= 0".into()));
        }
        if self.infonce_temperature <= 0.0 {
            return Err(Error::InvalidRange("temperature must be positive".into()));
        }
        Ok(())
    }

    pub fn schedule(&self, d_model: usize) -> Result<crate::tensor::LrSchedule> {
        crate::tensor::LrSchedule::new(d_model, self.warmup_steps, self.lr_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelConfig::default().validate().unwrap();
        AudioConfig::default().validate().unwrap();
        let t = TrainConfig::default();
        t.validate().unwrap();
        assert_eq!(t.batch_size, 16);
        assert_eq!(t.warmup_steps, 4000);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut m = ModelConfig::default();
        m.n_heads = 3;
        assert!(m.validate().is_err());
        let mut a = AudioConfig::default();
        a.f_max = 20000.0;
        assert!(a.validate().is_err());
    }
}
