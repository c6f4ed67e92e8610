use crate::blocks::{lr_to_frames, ForwardCtx};
use crate::checkpoint::{load_parameters_strict, Container};
use crate::clip::{TextEncoder, TrainerState};
use crate::config::ModelConfig;
use crate::data::ClipBatch;
use crate::error::{Error, Result};
use crate::tensor::{
    adam_step, check_unique_names, noam_lr, Element, LossKind, Parameter, Tape,
};
use crate::text::PhonemeSequence;
use crate::tts::MelDecoder;

/// Rebuild a text encoder from a pretraining checkpoint. The vocabulary
/// size is taken from the stored embedding; every parameter under the
/// `text_encoder.` prefix must match exactly and loads bitwise.
pub fn load_pretrained_text_encoder<E: Element>(
    container: &Container,
    cfg: &ModelConfig,
) -> Result<TextEncoder<E>> {
    let embedding = container
        .get("text_encoder.embedding")
        .ok_or_else(|| Error::CheckpointMismatch("missing 'text_encoder.embedding'".into()))?;
    let vocab_size = match embedding.shape() {
        [v, d] if *d == cfg.d_model => *v,
        other => {
            return Err(Error::Shape(format!(
                "embedding of shape {other:?} does not fit model width {}",
                cfg.d_model
            )))
        }
    };
    let encoder = TextEncoder::new(cfg, vocab_size, 0)?;
    load_parameters_strict(container, &encoder.parameters(), TextEncoder::<E>::PREFIX)?;
    Ok(encoder)
}

/// Text encoder plus mel decoder. Fine-tuning touches all parameters by
/// default; `freeze_encoder` restricts updates to the decoder.
pub struct TtsModel<E: Element = f32> {
    pub text_encoder: TextEncoder<E>,
    pub decoder: MelDecoder<E>,
    pub freeze_encoder: bool,
}

impl<E: Element> TtsModel<E> {
    /// Fresh model, both halves randomly initialized.
    pub fn new(cfg: &ModelConfig, vocab_size: usize, causal: bool, seed: u64) -> Result<Self> {
        let model = TtsModel {
            text_encoder: TextEncoder::new(cfg, vocab_size, seed)?,
            decoder: MelDecoder::new(cfg, causal, seed)?,
            freeze_encoder: false,
        };
        check_unique_names(&model.parameters())?;
        Ok(model)
    }

    /// Text encoder extracted from a pretraining checkpoint, decoder fresh.
    pub fn from_pretrained(
        container: &Container,
        cfg: &ModelConfig,
        causal: bool,
        seed: u64,
    ) -> Result<Self> {
        let model = TtsModel {
            text_encoder: load_pretrained_text_encoder(container, cfg)?,
            decoder: MelDecoder::new(cfg, causal, seed)?,
            freeze_encoder: false,
        };
        check_unique_names(&model.parameters())?;
        Ok(model)
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = self.text_encoder.parameters();
        params.extend(self.decoder.parameters());
        params
    }

    /// Parameters the optimizer may update.
    pub fn trainable_parameters(&self) -> Vec<Parameter<E>> {
        if self.freeze_encoder {
            self.decoder.parameters()
        } else {
            self.parameters()
        }
    }
}

/// Diagnostics of one fine-tuning step.
#[derive(Debug, Clone, Copy)]
pub struct TtsMetrics {
    pub loss: f64,
    pub mel_mae: f64,
    pub duration_loss: f64,
    pub lr: f64,
}

fn batch_sequence(batch: &ClipBatch, i: usize) -> Result<PhonemeSequence> {
    PhonemeSequence::new(batch.item_phoneme_ids(i).to_vec(), batch.utt_ids[i].clone())?
        .with_durations(batch.durations[i].clone())
}

/// One teacher-forced step: ground-truth durations expand the text encoding
/// so the decoded mel aligns frame-exactly with the target, MAE plus the
/// weighted log-duration MSE is minimized by Adam under the warmup
/// schedule. Aborts without mutation on non-finite gradients.
pub fn train_tts_step<E: Element>(
    model: &TtsModel<E>,
    batch: &ClipBatch,
    state: &mut TrainerState,
) -> Result<TtsMetrics> {
    let trainable = model.trainable_parameters();
    for p in model.parameters() {
        p.zero_grad();
    }
    let tape = Tape::new();
    let ctx = ForwardCtx::training(state.step_seed());

    let b = batch.len();
    let seqs: Vec<PhonemeSequence> =
        (0..b).map(|i| batch_sequence(batch, i)).collect::<Result<_>>()?;
    let seq_refs: Vec<&PhonemeSequence> = seqs.iter().collect();
    let enc = model.text_encoder.encode_batch(&tape, &seq_refs, true, &ctx)?;
    let pred = model
        .decoder
        .decode_stack(&tape, &enc.frames, &enc.frame_bounds, &ctx)?;

    let mut mel_losses = Vec::with_capacity(b);
    let mut dur_losses = Vec::with_capacity(b);
    for i in 0..b {
        let (start, len) = enc.frame_bounds[i];
        debug_assert_eq!(len, batch.mel_len(i));
        let item = tape.slice_rows(&pred, start, len)?;
        let target = batch.item_mel_tensor::<E>(i);
        mel_losses.push(tape.loss(&item, &target, LossKind::Mae)?);
        let (ps, pl) = enc.phoneme_bounds[i];
        let pred_d = tape.slice_rows(&enc.pred_log_d, ps, pl)?;
        dur_losses.push(tape.loss(&pred_d, &batch.item_log_durations::<E>(i), LossKind::Mse)?);
    }
    let mel_loss = tape.mean_all(&tape.stack_rows(&mel_losses.iter().collect::<Vec<_>>())?);
    let dur_loss = tape.mean_all(&tape.stack_rows(&dur_losses.iter().collect::<Vec<_>>())?);
    let total = tape.add(&mel_loss, &tape.scale(&dur_loss, state.lambda_duration))?;

    let loss_value = total.item().to_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite("tts training loss".into()));
    }
    let mel_value = mel_loss.item().to_f64();
    let dur_value = dur_loss.item().to_f64();
    tape.backward(&total)?;

    let lr = noam_lr(&state.schedule, state.global_step + 1)?;
    adam_step(&trainable, lr, &state.adam)?;
    state.global_step += 1;

    Ok(TtsMetrics {
        loss: loss_value,
        mel_mae: mel_value,
        duration_loss: dur_value,
        lr,
    })
}

/// Objective evaluation: teacher-forced mel MAE and the mean absolute
/// duration error in frames, averaged per utterance. Deterministic
/// (dropout off).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtsEval {
    pub mel_mae: f64,
    pub duration_mae_frames: f64,
    pub utterances: usize,
}

pub fn eval_tts<E: Element>(model: &TtsModel<E>, batches: &[ClipBatch]) -> Result<TtsEval> {
    if batches.is_empty() {
        return Err(Error::Contract("evaluation needs at least one batch".into()));
    }
    let ctx = ForwardCtx::inference();
    let mut mel_mae = 0.0;
    let mut dur_mae = 0.0;
    let mut count = 0usize;
    for batch in batches {
        for i in 0..batch.len() {
            let tape = Tape::inference();
            let seq = batch_sequence(batch, i)?;
            let enc = model.text_encoder.encode(&tape, &seq, true, &ctx)?;
            let pred = model.decoder.decode(&tape, &enc.frames, &ctx)?;
            let target = batch.item_mel_tensor::<E>(i);
            mel_mae += tape.loss(&pred, &target, LossKind::Mae)?.item().to_f64();

            let predicted_frames = lr_to_frames(&enc.pred_log_d);
            let gt = &batch.durations[i];
            dur_mae += predicted_frames
                .iter()
                .zip(gt)
                .map(|(&p, &g)| (p as f64 - g as f64).abs())
                .sum::<f64>()
                / gt.len() as f64;
            count += 1;
        }
    }
    Ok(TtsEval {
        mel_mae: mel_mae / count as f64,
        duration_mae_frames: dur_mae / count as f64,
        utterances: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checkpoint::{pack_parameters, Container};
    use crate::clip::{ClipLossKind, SpeechClipModel};
    use crate::config::AudioConfig;
    use crate::data::{gen_toy_corpus, make_batches, ToyCorpusSpec};
    use crate::tensor::{AdamConfig, LrSchedule};

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

    fn toy_batch(n: usize) -> ClipBatch {
        let spec = ToyCorpusSpec {
            min_phonemes: 2,
            max_phonemes: 4,
            min_duration: 2,
            max_duration: 3,
            ..ToyCorpusSpec::default()
        };
        let corpus = gen_toy_corpus(&spec, &AudioConfig::default(), n).unwrap();
        make_batches(&corpus.utterances, n, 3, 0).unwrap().remove(0)
    }

    fn state() -> TrainerState {
        TrainerState::new(
            LrSchedule::new(16, 50, 1.0).unwrap(),
            AdamConfig::default(),
            1.0,
            977,
        )
    }

    #[test]
    fn pretrained_encoder_round_trip_is_bitwise() {
        let cfg = tiny_cfg();
        let clip = SpeechClipModel::<f32>::new(&cfg, 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let mut c = Container::new();
        pack_parameters(&mut c, &clip.parameters()).unwrap();

        let enc = load_pretrained_text_encoder::<f32>(&c, &cfg).unwrap();
        assert_eq!(enc.vocab_size, 10);
        for (loaded, original) in enc.parameters().iter().zip(clip.text_encoder.parameters()) {
            assert_eq!(loaded.name(), original.name());
            let a = loaded.value();
            let b = original.value();
            assert!(a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn missing_parameter_names_the_culprit() {
        let cfg = tiny_cfg();
        let clip = SpeechClipModel::<f32>::new(&cfg, 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let mut c = Container::new();
        let params = clip.parameters();
        let dropped: Vec<_> = params
            .iter()
            .filter(|p| p.name() != "text_encoder.dur.conv1.bias")
            .cloned()
            .collect();
        pack_parameters(&mut c, &dropped).unwrap();
        match load_pretrained_text_encoder::<f32>(&c, &cfg) {
            Err(Error::CheckpointMismatch(m)) => {
                assert!(m.contains("text_encoder.dur.conv1.bias"), "{m}")
            }
            Err(other) => panic!("wrong error: {other}"),
            Ok(_) => panic!("load must fail"),
        }
    }

    #[test]
    fn decoder_only_checkpoint_rejected() {
        let cfg = tiny_cfg();
        let tts = TtsModel::<f32>::new(&cfg, 10, true, 3).unwrap();
        let mut c = Container::new();
        pack_parameters(&mut c, &tts.decoder.parameters()).unwrap();
        assert!(matches!(
            load_pretrained_text_encoder::<f32>(&c, &cfg),
            Err(Error::CheckpointMismatch(_))
        ));
    }

    #[test]
    fn teacher_forced_lengths_always_match_targets() {
        let model = TtsModel::<f32>::new(&tiny_cfg(), 10, true, 3).unwrap();
        let batch = toy_batch(4);
        let ctx = ForwardCtx::inference();
        let tape = Tape::inference();
        for i in 0..batch.len() {
            let seq = batch_sequence(&batch, i).unwrap();
            let enc = model.text_encoder.encode(&tape, &seq, true, &ctx).unwrap();
            assert_eq!(enc.frames.shape()[0], batch.mel_len(i));
        }
    }

    #[test]
    fn overfit_reduces_mel_mae() {
        let model = TtsModel::<f32>::new(&tiny_cfg(), 10, true, 3).unwrap();
        let batch = toy_batch(3);
        let mut st = state();
        let first = train_tts_step(&model, &batch, &mut st).unwrap();
        let mut last = first;
        for _ in 0..40 {
            last = train_tts_step(&model, &batch, &mut st).unwrap();
        }
        assert!(
            last.mel_mae < first.mel_mae,
            "{} -> {}",
            first.mel_mae,
            last.mel_mae
        );
    }

    #[test]
    fn lambda_zero_freezes_duration_metric() {
        let run = |lambda: f64| {
            let model = TtsModel::<f32>::new(&tiny_cfg(), 10, true, 3).unwrap();
            let batch = toy_batch(2);
            let mut st = state();
            st.lambda_duration = lambda;
            let mut metrics = Vec::new();
            for _ in 0..3 {
                metrics.push(train_tts_step(&model, &batch, &mut st).unwrap().duration_loss);
            }
            metrics
        };
        // With lambda = 0 the duration head still reports its loss, but the
        // total gradient carries no duration term; the metric is defined
        // either way.
        let with = run(1.0);
        let without = run(0.0);
        assert_eq!(with.len(), without.len());
        assert!(without.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn frozen_encoder_leaves_encoder_weights_untouched() {
        let mut model = TtsModel::<f32>::new(&tiny_cfg(), 10, true, 3).unwrap();
        model.freeze_encoder = true;
        let before: Vec<Vec<f32>> = model
            .text_encoder
            .parameters()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        let batch = toy_batch(2);
        let mut st = state();
        for _ in 0..3 {
            train_tts_step(&model, &batch, &mut st).unwrap();
        }
        let after: Vec<Vec<f32>> = model
            .text_encoder
            .parameters()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn eval_is_deterministic_on_a_frozen_model() {
        let model = TtsModel::<f32>::new(&tiny_cfg(), 10, true, 3).unwrap();
        let batch = toy_batch(3);
        let a = eval_tts(&model, std::slice::from_ref(&batch)).unwrap();
        let b = eval_tts(&model, std::slice::from_ref(&batch)).unwrap();
        assert_eq!(a, b);
    }
}
