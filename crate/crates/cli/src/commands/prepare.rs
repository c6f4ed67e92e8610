use std::path::PathBuf;

use cliptts::data::{
    gen_toy_corpus, load_ljspeech, uniform_duration_targets, write_corpus_cache, Utterance,
};
use cliptts::dsp::{mel_filterbank, mel_spectrogram, wav_read, wav_write};
use cliptts::error::Error;
use cliptts::text::{build_inventory, text_to_phonemes, Lexicon};

use crate::config::RunConfig;
use crate::{CmdError, CmdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CorpusKind {
    Toy,
    Ljspeech,
}

#[derive(Debug)]
pub struct PrepareArgs {
    pub corpus: CorpusKind,
    pub root: Option<PathBuf>,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
}

#[derive(Debug)]
pub struct PrepareSummary {
    pub utterances: usize,
    pub total_frames: usize,
    pub skipped: usize,
}

fn write_outputs(
    out: &PathBuf,
    utterances: &[Utterance],
    inventory: &cliptts::text::PhonemeInventory,
) -> CmdResult {
    std::fs::create_dir_all(out)
        .map_err(|e| CmdError::input(format!("cannot create {}: {e}", out.display())))?;
    let mut metadata = String::new();
    for u in utterances {
        let text = &u.phonemes.source_text;
        metadata.push_str(&format!("{}|{}|{}\n", u.id, text, text));
    }
    std::fs::write(out.join("metadata.csv"), metadata)
        .map_err(|e| CmdError::input(e.to_string()))?;
    inventory.save(out.join("inventory.txt")).map_err(CmdError::from)?;
    write_corpus_cache(out.join("cache.spcl"), utterances).map_err(CmdError::from)?;
    Ok(())
}

/// Build the mel/duration cache for a corpus. The toy corpus is generated
/// (waveforms included, mirroring the LJSpeech layout); a real corpus is
/// read from `--root`, phonemized, and given uniform-split duration
/// targets.
pub fn run_prepare(args: &PrepareArgs) -> CmdResult<PrepareSummary> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.set)?;
    match args.corpus {
        CorpusKind::Toy => prepare_toy(&cfg, args),
        CorpusKind::Ljspeech => prepare_ljspeech(&cfg, args),
    }
}

fn prepare_toy(cfg: &RunConfig, args: &PrepareArgs) -> CmdResult<PrepareSummary> {
    let corpus =
        gen_toy_corpus(&cfg.toy, &cfg.audio, cfg.toy_utterances).map_err(CmdError::from)?;
    write_outputs(&args.out, &corpus.utterances, &corpus.inventory)?;
    let wav_dir = args.out.join("wavs");
    std::fs::create_dir_all(&wav_dir).map_err(|e| CmdError::input(e.to_string()))?;
    for (u, wave) in corpus.utterances.iter().zip(&corpus.waves) {
        wav_write(wav_dir.join(format!("{}.wav", u.id)), wave).map_err(CmdError::from)?;
    }
    Ok(PrepareSummary {
        utterances: corpus.utterances.len(),
        total_frames: corpus.utterances.iter().map(|u| u.n_frames()).sum(),
        skipped: 0,
    })
}

fn prepare_ljspeech(cfg: &RunConfig, args: &PrepareArgs) -> CmdResult<PrepareSummary> {
    let root = args
        .root
        .as_ref()
        .ok_or_else(|| CmdError::usage("--root is required for --corpus ljspeech"))?;
    let manifest = load_ljspeech(root).map_err(CmdError::from)?;
    let lexicon = match &cfg.lexicon {
        Some(path) => Lexicon::load(path).map_err(CmdError::from)?,
        None => Lexicon::empty(),
    };
    let inventory = build_inventory(&lexicon).map_err(CmdError::from)?;
    let fb = mel_filterbank(
        cfg.audio.sample_rate,
        &cfg.audio.stft,
        cfg.model.n_mels,
        cfg.audio.f_min,
        cfg.audio.f_max,
    )
    .map_err(CmdError::from)?;

    let mut utterances = Vec::new();
    let mut skipped = manifest.skipped.len();
    for entry in &manifest.entries {
        let wave = wav_read(manifest.wav_path(&entry.id)).map_err(CmdError::from)?;
        if wave.sample_rate != cfg.audio.sample_rate {
            return Err(CmdError::input(format!(
                "'{}' is sampled at {} Hz, configured rate is {} (resampling is out of scope)",
                entry.id, wave.sample_rate, cfg.audio.sample_rate
            )));
        }
        let mel = match mel_spectrogram(&wave, &cfg.audio.stft, &fb) {
            Ok(mel) => mel,
            Err(Error::InputTooShort { .. }) => {
                log::warn!("{}: audio shorter than one window, skipped", entry.id);
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let seq = match text_to_phonemes(&entry.transcript, &inventory, &lexicon) {
            Ok(seq) => seq,
            Err(Error::EmptyText) => {
                log::warn!("{}: transcript has no phonemes, skipped", entry.id);
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let durations = match uniform_duration_targets(seq.len(), mel.frames) {
            Ok(d) => d,
            Err(Error::TooShort { .. }) => {
                log::warn!("{}: fewer mel frames than phonemes, skipped", entry.id);
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let seq = seq.with_durations(durations).map_err(CmdError::from)?;
        utterances.push(Utterance::new(entry.id.clone(), seq, mel).map_err(CmdError::from)?);
    }
    if utterances.is_empty() {
        return Err(CmdError::input(format!(
            "no usable utterances under {}",
            root.display()
        )));
    }
    write_outputs(&args.out, &utterances, &inventory)?;
    Ok(PrepareSummary {
        total_frames: utterances.iter().map(|u| u.n_frames()).sum(),
        utterances: utterances.len(),
        skipped,
    })
}
