//! Run configuration: every tunable default, parsed from a line-oriented
//! `key = value` file with `#` comments and dotted keys, overridable from
//! the command line. Unknown keys are rejected, values are range-checked,
//! and the fully resolved config echoes back out in a form that parses to
//! the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cliptts::clip::ClipLossKind;
use cliptts::config::{AudioConfig, ModelConfig, TrainConfig};
use cliptts::data::ToyCorpusSpec;

use crate::CmdError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub audio: AudioConfig,
    pub train: TrainConfig,
    /// Directory holding metadata.csv, inventory.txt and cache.spcl.
    pub cache_dir: Option<PathBuf>,
    /// Optional pronunciation lexicon for real-text corpora.
    pub lexicon: Option<PathBuf>,
    pub toy: ToyCorpusSpec,
    pub toy_utterances: usize,
    pub synth_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            audio: AudioConfig::default(),
            train: TrainConfig::default(),
            cache_dir: None,
            lexicon: None,
            toy: ToyCorpusSpec::default(),
            toy_utterances: 64,
            synth_seed: 7,
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> CmdError {
    CmdError::input(format!("config key '{key}': cannot parse '{value}' as {want}"))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, want: &str) -> Result<T, CmdError> {
    value.trim().parse::<T>().map_err(|_| bad(key, value, want))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CmdError> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "bool (true/false)")),
    }
}

impl RunConfig {
    /// Apply a single `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), CmdError> {
        let v = value.trim();
        match key {
            "model.d_model" => self.model.d_model = parse(key, v, "usize")?,
            "model.n_heads" => self.model.n_heads = parse(key, v, "usize")?,
            "model.n_blocks" => self.model.n_blocks = parse(key, v, "usize")?,
            "model.conv_hidden" => self.model.conv_hidden = parse(key, v, "usize")?,
            "model.conv_kernel1" => self.model.conv_kernel1 = parse(key, v, "usize")?,
            "model.conv_kernel2" => self.model.conv_kernel2 = parse(key, v, "usize")?,
            "model.block_dropout" => self.model.block_dropout = parse(key, v, "float")?,
            "model.dur_kernel" => self.model.dur_kernel = parse(key, v, "usize")?,
            "model.dur_dropout" => self.model.dur_dropout = parse(key, v, "float")?,
            "model.n_mels" => self.model.n_mels = parse(key, v, "usize")?,

            "audio.sample_rate" => self.audio.sample_rate = parse(key, v, "u32")?,
            "audio.n_fft" => self.audio.stft.n_fft = parse(key, v, "usize")?,
            "audio.win_length" => self.audio.stft.win_length = parse(key, v, "usize")?,
            "audio.hop_length" => self.audio.stft.hop_length = parse(key, v, "usize")?,
            "audio.f_min" => self.audio.f_min = parse(key, v, "float")?,
            "audio.f_max" => self.audio.f_max = parse(key, v, "float")?,
            "audio.griffin_lim_iters" => self.audio.griffin_lim_iters = parse(key, v, "usize")?,

            "train.batch_size" => self.train.batch_size = parse(key, v, "usize")?,
            "train.steps" => self.train.steps = parse(key, v, "u64")?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse(key, v, "u64")?,
            "train.log_every" => self.train.log_every = parse(key, v, "u64")?,
            "train.warmup_steps" => self.train.warmup_steps = parse(key, v, "u64")?,
            "train.lr_scale" => self.train.lr_scale = parse(key, v, "float")?,
            "train.adam_beta1" => self.train.adam.beta1 = parse(key, v, "float")?,
            "train.adam_beta2" => self.train.adam.beta2 = parse(key, v, "float")?,
            "train.adam_eps" => self.train.adam.eps = parse(key, v, "float")?,
            "train.lambda_duration" => self.train.lambda_duration = parse(key, v, "float")?,
            "train.loss" => {
                self.train.loss = match v {
                    "sim_mse" => ClipLossKind::SimMse,
                    "infonce" => ClipLossKind::InfoNce,
                    _ => return Err(bad(key, v, "one of sim_mse|infonce")),
                }
            }
            "train.infonce_temperature" => {
                self.train.infonce_temperature = parse(key, v, "float")?
            }
            "train.freeze_encoder" => self.train.freeze_encoder = parse_bool(key, v)?,
            "train.decoder_causal" => self.train.decoder_causal = parse_bool(key, v)?,
            "train.seed" => self.train.seed = parse(key, v, "u64")?,
            "train.bucket_frames" => self.train.bucket_frames = parse(key, v, "usize")?,

            "data.cache_dir" => {
                self.cache_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) }
            }
            "data.lexicon" => {
                self.lexicon = if v.is_empty() { None } else { Some(PathBuf::from(v)) }
            }

            "toy.n_phonemes" => self.toy.n_phonemes = parse(key, v, "usize")?,
            "toy.n_utterances" => self.toy_utterances = parse(key, v, "usize")?,
            "toy.min_phonemes" => self.toy.min_phonemes = parse(key, v, "usize")?,
            "toy.max_phonemes" => self.toy.max_phonemes = parse(key, v, "usize")?,
            "toy.min_duration" => self.toy.min_duration = parse(key, v, "usize")?,
            "toy.max_duration" => self.toy.max_duration = parse(key, v, "usize")?,
            "toy.f_lo" => self.toy.f_lo = parse(key, v, "float")?,
            "toy.f_hi" => self.toy.f_hi = parse(key, v, "float")?,
            "toy.seed" => self.toy.seed = parse(key, v, "u64")?,

            "synth.seed" => self.synth_seed = parse(key, v, "u64")?,

            unknown => {
                return Err(CmdError::input(format!("unknown config key '{unknown}'")));
            }
        }
        Ok(())
    }

    /// Parse a config file body.
    pub fn apply_file_body(&mut self, body: &str, origin: &str) -> Result<(), CmdError> {
        for (lineno, raw) in body.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CmdError::input(format!("{origin}:{}: expected 'key = value'", lineno + 1))
            })?;
            self.apply(key.trim(), value)
                .map_err(|e| CmdError::input(format!("{origin}:{}: {}", lineno + 1, e.message)))?;
        }
        Ok(())
    }

    /// Resolve a config: defaults, then the optional file, then
    /// `key=value` command line overrides, then validation.
    pub fn resolve(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CmdError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let body = std::fs::read_to_string(path).map_err(|e| {
                CmdError::input(format!("cannot read config {}: {e}", path.display()))
            })?;
            cfg.apply_file_body(&body, &path.display().to_string())?;
        }
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                CmdError::usage(format!("--set wants KEY=VALUE, got '{item}'"))
            })?;
            cfg.apply(key.trim(), value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CmdError> {
        self.model
            .validate()
            .and_then(|_| self.audio.validate())
            .and_then(|_| self.train.validate())
            .and_then(|_| self.toy.validate(&self.audio))
            .map_err(CmdError::from)?;
        if self.toy_utterances == 0 {
            return Err(CmdError::input("toy.n_utterances must be positive"));
        }
        Ok(())
    }

    /// The full resolved configuration as parseable `key = value` lines.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("model.d_model", self.model.d_model.to_string());
        kv("model.n_heads", self.model.n_heads.to_string());
        kv("model.n_blocks", self.model.n_blocks.to_string());
        kv("model.conv_hidden", self.model.conv_hidden.to_string());
        kv("model.conv_kernel1", self.model.conv_kernel1.to_string());
        kv("model.conv_kernel2", self.model.conv_kernel2.to_string());
        kv("model.block_dropout", self.model.block_dropout.to_string());
        kv("model.dur_kernel", self.model.dur_kernel.to_string());
        kv("model.dur_dropout", self.model.dur_dropout.to_string());
        kv("model.n_mels", self.model.n_mels.to_string());

        kv("audio.sample_rate", self.audio.sample_rate.to_string());
        kv("audio.n_fft", self.audio.stft.n_fft.to_string());
        kv("audio.win_length", self.audio.stft.win_length.to_string());
        kv("audio.hop_length", self.audio.stft.hop_length.to_string());
        kv("audio.f_min", self.audio.f_min.to_string());
        kv("audio.f_max", self.audio.f_max.to_string());
        kv("audio.griffin_lim_iters", self.audio.griffin_lim_iters.to_string());

        kv("train.batch_size", self.train.batch_size.to_string());
        kv("train.steps", self.train.steps.to_string());
        kv("train.checkpoint_every", self.train.checkpoint_every.to_string());
        kv("train.log_every", self.train.log_every.to_string());
        kv("train.warmup_steps", self.train.warmup_steps.to_string());
        kv("train.lr_scale", self.train.lr_scale.to_string());
        kv("train.adam_beta1", self.train.adam.beta1.to_string());
        kv("train.adam_beta2", self.train.adam.beta2.to_string());
        kv("train.adam_eps", self.train.adam.eps.to_string());
        kv("train.lambda_duration", self.train.lambda_duration.to_string());
        kv(
            "train.loss",
            match self.train.loss {
                ClipLossKind::SimMse => "sim_mse".into(),
                ClipLossKind::InfoNce => "infonce".into(),
            },
        );
        kv("train.infonce_temperature", self.train.infonce_temperature.to_string());
        kv("train.freeze_encoder", self.train.freeze_encoder.to_string());
        kv("train.decoder_causal", self.train.decoder_causal.to_string());
        kv("train.seed", self.train.seed.to_string());
        kv("train.bucket_frames", self.train.bucket_frames.to_string());

        kv(
            "data.cache_dir",
            self.cache_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv(
            "data.lexicon",
            self.lexicon
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );

        kv("toy.n_phonemes", self.toy.n_phonemes.to_string());
        kv("toy.n_utterances", self.toy_utterances.to_string());
        kv("toy.min_phonemes", self.toy.min_phonemes.to_string());
        kv("toy.max_phonemes", self.toy.max_phonemes.to_string());
        kv("toy.min_duration", self.toy.min_duration.to_string());
        kv("toy.max_duration", self.toy.max_duration.to_string());
        kv("toy.f_lo", self.toy.f_lo.to_string());
        kv("toy.f_hi", self.toy.f_hi.to_string());
        kv("toy.seed", self.toy.seed.to_string());

        kv("synth.seed", self.synth_seed.to_string());
        out
    }

    /// Write the resolved config into a run directory.
    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf, CmdError> {
        let path = dir.join("config.resolved");
        std::fs::write(&path, self.echo())
            .map_err(|e| CmdError::input(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_hold_the_stated_values() {
        let c = RunConfig::default();
        assert_eq!(c.model.d_model, 256);
        assert_eq!(c.model.n_blocks, 4);
        assert_eq!(c.model.n_heads, 2);
        assert_eq!(c.model.conv_kernel1, 9);
        assert_eq!(c.model.conv_kernel2, 1);
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.train.warmup_steps, 4000);
        assert_eq!(c.model.dur_dropout, 0.5);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = RunConfig::default();
        let err = c.apply("model.nonsense", "3").unwrap_err();
        assert!(err.message.contains("unknown config key"));
    }

    #[test]
    fn out_of_range_values_rejected_at_validate() {
        let mut c = RunConfig::default();
        c.apply("model.block_dropout", "1.5").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.apply("audio.f_max", "90000").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let mut c = RunConfig::default();
        c.apply_file_body(
            "# a comment\n\nmodel.d_model = 64  # trailing comment\ntrain.seed = 9\n",
            "test",
        )
        .unwrap();
        assert_eq!(c.model.d_model, 64);
        assert_eq!(c.train.seed, 9);
    }

    #[test]
    fn malformed_line_cites_its_number() {
        let mut c = RunConfig::default();
        let err = c.apply_file_body("model.d_model = 64\nnot a line\n", "cfg").unwrap_err();
        assert!(err.message.contains("cfg:2"), "{}", err.message);
    }

    // The echo must reproduce the configuration exactly.
    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply("model.d_model", "32").unwrap();
        c.apply("train.loss", "infonce").unwrap();
        c.apply("train.lr_scale", "2.5").unwrap();
        c.apply("data.cache_dir", "/tmp/cache").unwrap();
        c.apply("toy.seed", "123").unwrap();

        let mut back = RunConfig::default();
        back.apply_file_body(&c.echo(), "echo").unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn cli_overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "train.seed = 5\ntrain.batch_size = 4\n").unwrap();
        let cfg = RunConfig::resolve(Some(&path), &["train.seed=99".to_string()]).unwrap();
        assert_eq!(cfg.train.seed, 99);
        assert_eq!(cfg.train.batch_size, 4);
    }
}
