use std::path::PathBuf;

use cliptts::checkpoint::{unpack_inventory, Container};
use cliptts::dsp::{mel_filterbank, wav_write};
use cliptts::tensor::Tensor;
use cliptts::text::Lexicon;
use cliptts::tts::{synthesize, TtsModel};

use crate::commands::common::load_model_from_checkpoint;
use crate::config::RunConfig;
use crate::{CmdError, CmdResult};

#[derive(Debug)]
pub struct SynthArgs {
    pub ckpt: PathBuf,
    pub text: String,
    pub out: PathBuf,
    pub dump_mel: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
}

#[derive(Debug)]
pub struct SynthSummary {
    pub wav_path: PathBuf,
    pub samples: usize,
    pub mel_frames: usize,
    pub timings: Vec<(&'static str, f64)>,
}

/// Synthesize one utterance from a TTS checkpoint. The checkpoint carries
/// its own phoneme inventory, so only the config's audio section matters
/// here.
pub fn run_synth(args: &SynthArgs) -> CmdResult<SynthSummary> {
    if args.text.trim().is_empty() {
        return Err(CmdError::usage("--text must not be empty"));
    }
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.set)?;
    let container = Container::load(&args.ckpt).map_err(CmdError::from)?;
    let inventory = unpack_inventory(&container).map_err(CmdError::from)?;

    let model = TtsModel::<f32>::new(
        &cfg.model,
        inventory.size(),
        cfg.train.decoder_causal,
        cfg.train.seed,
    )
    .map_err(CmdError::from)?;
    load_model_from_checkpoint(&container, &model.parameters())?;

    let lexicon = match &cfg.lexicon {
        Some(path) => Lexicon::load(path).map_err(CmdError::from)?,
        None => Lexicon::empty(),
    };
    let fb = mel_filterbank(
        cfg.audio.sample_rate,
        &cfg.audio.stft,
        cfg.model.n_mels,
        cfg.audio.f_min,
        cfg.audio.f_max,
    )
    .map_err(CmdError::from)?;

    let out = synthesize(
        &model,
        &inventory,
        &lexicon,
        &cfg.audio,
        &fb,
        &args.text,
        cfg.synth_seed,
    )
    .map_err(CmdError::from)?;

    wav_write(&args.out, &out.wav).map_err(CmdError::from)?;
    if let Some(mel_path) = &args.dump_mel {
        let mut dump = Container::new();
        dump.insert(
            "mel",
            Tensor::from_vec(out.mel.data.clone(), &[out.mel.frames, out.mel.n_mels])
                .map_err(CmdError::from)?,
        )
        .map_err(CmdError::from)?;
        dump.save(mel_path).map_err(CmdError::from)?;
    }

    Ok(SynthSummary {
        wav_path: args.out.clone(),
        samples: out.wav.len(),
        mel_frames: out.mel.frames,
        timings: out.timings,
    })
}
