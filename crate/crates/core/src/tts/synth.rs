use std::time::Instant;

use crate::blocks::ForwardCtx;
use crate::config::AudioConfig;
use crate::dsp::{griffin_lim, log_floor, mel_to_linear, MelFilterbank, MelSpectrogram, Waveform};
use crate::error::Result;
use crate::tensor::{Element, Tape};
use crate::text::{text_to_phonemes, Lexicon, PhonemeInventory};
use crate::tts::TtsModel;

/// Everything `synthesize` produces: the waveform, the intermediate mel,
/// the predicted per-phoneme durations, and per-stage wall times.
pub struct SynthesisOutput {
    pub wav: Waveform,
    pub mel: MelSpectrogram,
    pub durations: Vec<usize>,
    pub timings: Vec<(&'static str, f64)>,
}

/// Full text-to-waveform pipeline: phonemes, text encoding with predicted
/// durations, length regulation, mel decoding, spectrogram inversion,
/// Griffin-Lim. Pure function of (text, parameters, seed) with dropout off;
/// errors carry the stage they occurred in.
pub fn synthesize<E: Element>(
    model: &TtsModel<E>,
    inventory: &PhonemeInventory,
    lexicon: &Lexicon,
    audio: &AudioConfig,
    filterbank: &MelFilterbank,
    text: &str,
    seed: u64,
) -> Result<SynthesisOutput> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut Vec<(&'static str, f64)>| {
        timings.push((name, clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    let seq =
        text_to_phonemes(text, inventory, lexicon).map_err(|e| e.at_stage("text_frontend"))?;
    lap("text_frontend", &mut timings);

    let ctx = ForwardCtx::inference();
    let tape = Tape::inference();
    let encoding = model
        .text_encoder
        .encode(&tape, &seq, false, &ctx)
        .map_err(|e| e.at_stage("text_encoder"))?;
    lap("text_encoder", &mut timings);

    let decoded = model
        .decoder
        .decode(&tape, &encoding.frames, &ctx)
        .map_err(|e| e.at_stage("mel_decoder"))?;
    let frames = decoded.shape()[0];
    let floor = log_floor();
    let mel_data: Vec<f32> = decoded
        .data()
        .iter()
        .map(|&v| (v.to_f64() as f32).max(floor))
        .collect();
    let mel = MelSpectrogram::new(mel_data, frames, model.decoder.cfg.n_mels)
        .map_err(|e| e.at_stage("mel_decoder"))?;
    lap("mel_decoder", &mut timings);

    let linear = mel_to_linear(&mel, filterbank).map_err(|e| e.at_stage("mel_inversion"))?;
    lap("mel_inversion", &mut timings);

    let wav = griffin_lim(
        &linear,
        &audio.stft,
        audio.sample_rate,
        audio.griffin_lim_iters,
        seed,
    )
    .map_err(|e| e.at_stage("vocoder"))?;
    lap("vocoder", &mut timings);

    Ok(SynthesisOutput {
        wav,
        mel,
        durations: encoding.durations,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::data::ToyCorpusSpec;
    use crate::dsp::mel_filterbank;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            n_blocks: 1,
            conv_hidden: 24,
            conv_kernel1: 3,
            conv_kernel2: 1,
            block_dropout: 0.1,
            dur_kernel: 3,
            dur_dropout: 0.1,
            n_mels: 80,
        }
    }

    fn setup() -> (TtsModel<f32>, PhonemeInventory, AudioConfig, MelFilterbank) {
        let spec = ToyCorpusSpec::default();
        let inventory = spec.inventory().unwrap();
        let audio = AudioConfig {
            griffin_lim_iters: 5,
            ..AudioConfig::default()
        };
        let fb = mel_filterbank(audio.sample_rate, &audio.stft, 80, audio.f_min, audio.f_max)
            .unwrap();
        let model = TtsModel::<f32>::new(&tiny_cfg(), inventory.size(), true, 3).unwrap();
        (model, inventory, audio, fb)
    }

    #[test]
    fn wav_length_matches_frame_arithmetic() {
        let (model, inventory, audio, fb) = setup();
        let out = synthesize(&model, &inventory, &Lexicon::empty(), &audio, &fb, "ABA", 9).unwrap();
        let expect = (out.mel.frames - 1) * audio.stft.hop_length + audio.stft.win_length;
        assert_eq!(out.wav.len(), expect);
        assert_eq!(out.mel.n_mels, 80);
        assert_eq!(out.durations.len(), 3);
        assert_eq!(out.timings.len(), 5);
    }

    #[test]
    fn empty_text_fails_at_the_text_stage() {
        let (model, inventory, audio, fb) = setup();
        match synthesize(&model, &inventory, &Lexicon::empty(), &audio, &fb, "", 9) {
            Err(crate::error::Error::Stage { stage, source }) => {
                assert_eq!(stage, "text_frontend");
                assert!(matches!(*source, crate::error::Error::EmptyText));
            }
            Err(other) => panic!("wrong error: {other}"),
            Ok(_) => panic!("empty text must fail"),
        }
    }

    #[test]
    fn same_seed_is_bitwise_reproducible() {
        let (model, inventory, audio, fb) = setup();
        let a = synthesize(&model, &inventory, &Lexicon::empty(), &audio, &fb, "CAB", 4).unwrap();
        let b = synthesize(&model, &inventory, &Lexicon::empty(), &audio, &fb, "CAB", 4).unwrap();
        assert_eq!(a.wav.samples, b.wav.samples);
        assert_eq!(a.mel.data, b.mel.data);
    }
}
