use crate::blocks::ForwardCtx;
use crate::clip::{
    retrieval_top1, similarity_matrix, similarity_stats, ClipLossKind, ClipObjective, MelEncoder,
    TextEncoder,
};
use crate::config::ModelConfig;
use crate::data::ClipBatch;
use crate::error::{Error, Result};
use crate::tensor::{
    adam_step, check_unique_names, noam_lr, AdamConfig, Element, LossKind, LrSchedule, Parameter,
    Tape, Tensor,
};
use crate::text::PhonemeSequence;

/// The dual-encoder pretraining model.
pub struct SpeechClipModel<E: Element = f32> {
    pub text_encoder: TextEncoder<E>,
    pub mel_encoder: MelEncoder<E>,
    pub objective: ClipObjective<E>,
}

impl<E: Element> SpeechClipModel<E> {
    pub fn new(
        cfg: &ModelConfig,
        vocab_size: usize,
        loss: ClipLossKind,
        init_temperature: f64,
        seed: u64,
    ) -> Result<Self> {
        let model = SpeechClipModel {
            text_encoder: TextEncoder::new(cfg, vocab_size, seed)?,
            mel_encoder: MelEncoder::new(cfg, seed)?,
            objective: ClipObjective::new(loss, init_temperature)?,
        };
        check_unique_names(&model.parameters())?;
        Ok(model)
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = self.text_encoder.parameters();
        params.extend(self.mel_encoder.parameters());
        params.extend(self.objective.parameters());
        params
    }
}

/// Optimizer and schedule state shared by both training loops.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub lambda_duration: f64,
    pub base_seed: u64,
    pub global_step: u64,
}

impl TrainerState {
    pub fn new(schedule: LrSchedule, adam: AdamConfig, lambda_duration: f64, base_seed: u64) -> Self {
        TrainerState {
            schedule,
            adam,
            lambda_duration,
            base_seed,
            global_step: 0,
        }
    }

    /// Deterministic dropout seed for the step about to run.
    pub fn step_seed(&self) -> u64 {
        self.base_seed ^ (self.global_step + 1).wrapping_mul(0x9e3779b97f4a7c15)
    }
}

/// Diagnostics of one contrastive training step.
#[derive(Debug, Clone, Copy)]
pub struct ClipMetrics {
    pub loss: f64,
    pub clip_loss: f64,
    pub duration_loss: f64,
    pub diag_mean: f64,
    pub offdiag_mean: f64,
    pub lr: f64,
}

fn batch_sequence(batch: &ClipBatch, i: usize) -> Result<PhonemeSequence> {
    PhonemeSequence::new(batch.item_phoneme_ids(i).to_vec(), batch.utt_ids[i].clone())?
        .with_durations(batch.durations[i].clone())
}

/// Forward both branches over the whole batch, returning the similarity
/// matrix and the mean per-item duration loss. Items enter at their true
/// lengths (sliced out of the padded batch), stacked row-wise so the
/// position-local math runs whole-batch; pad values never reach any
/// computation.
fn clip_forward<E: Element>(
    model: &SpeechClipModel<E>,
    tape: &Tape<E>,
    batch: &ClipBatch,
    ctx: &ForwardCtx,
) -> Result<(Tensor<E>, Tensor<E>)> {
    let b = batch.len();
    let seqs: Vec<crate::text::PhonemeSequence> =
        (0..b).map(|i| batch_sequence(batch, i)).collect::<Result<_>>()?;
    let seq_refs: Vec<&crate::text::PhonemeSequence> = seqs.iter().collect();
    let text = model.text_encoder.encode_batch(tape, &seq_refs, true, ctx)?;

    let mels: Vec<Tensor<E>> = (0..b).map(|i| batch.item_mel_tensor::<E>(i)).collect();
    let (_, _, mel_pooled) = model.mel_encoder.encode_batch(tape, &mels, ctx)?;

    let mut duration_losses = Vec::with_capacity(b);
    for (i, &(start, len)) in text.phoneme_bounds.iter().enumerate() {
        let pred = tape.slice_rows(&text.pred_log_d, start, len)?;
        let log_gt = batch.item_log_durations::<E>(i);
        duration_losses.push(tape.loss(&pred, &log_gt, LossKind::Mse)?);
    }
    let text_stack = tape.stack_rows(&text.pooled.iter().collect::<Vec<_>>())?;
    let mel_stack = tape.stack_rows(&mel_pooled.iter().collect::<Vec<_>>())?;
    let similarity = similarity_matrix(tape, &text_stack, &mel_stack)?;

    let dur_refs: Vec<&Tensor<E>> = duration_losses.iter().collect();
    let dur_loss = tape.mean_all(&tape.stack_rows(&dur_refs)?);
    Ok((similarity, dur_loss))
}

/// One teacher-forced contrastive step: total loss is the similarity loss
/// plus `lambda_duration` times the log-duration MSE, stepped by Adam under
/// the warmup schedule. A non-finite gradient aborts the step with no
/// parameter mutated.
pub fn train_clip_step<E: Element>(
    model: &SpeechClipModel<E>,
    batch: &ClipBatch,
    state: &mut TrainerState,
) -> Result<ClipMetrics> {
    let params = model.parameters();
    for p in &params {
        p.zero_grad();
    }
    let tape = Tape::new();
    let ctx = ForwardCtx::training(state.step_seed());
    let (similarity, dur_loss) = clip_forward(model, &tape, batch, &ctx)?;
    let stats = similarity_stats(&similarity)?;
    let clip_loss = model.objective.loss(&tape, &similarity)?;
    let total = tape.add(&clip_loss, &tape.scale(&dur_loss, state.lambda_duration))?;

    let loss_value = total.item().to_f64();
    if !loss_value.is_finite() {
        return Err(Error::NonFinite("clip training loss".into()));
    }
    let clip_value = clip_loss.item().to_f64();
    let dur_value = dur_loss.item().to_f64();
    tape.backward(&total)?;

    let lr = noam_lr(&state.schedule, state.global_step + 1)?;
    adam_step(&params, lr, &state.adam)?;
    state.global_step += 1;

    Ok(ClipMetrics {
        loss: loss_value,
        clip_loss: clip_value,
        duration_loss: dur_value,
        diag_mean: stats.diag_mean,
        offdiag_mean: stats.offdiag_mean,
        lr,
    })
}

/// Top-1 retrieval accuracy in both directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalAccuracy {
    pub text_to_mel_top1: f64,
    pub mel_to_text_top1: f64,
    pub trials: usize,
}

/// Forward-only retrieval over batches: argmax of each similarity row
/// (text to mel) and column (mel to text) against the diagonal.
pub fn retrieval_eval<E: Element>(
    model: &SpeechClipModel<E>,
    batches: &[ClipBatch],
) -> Result<RetrievalAccuracy> {
    if batches.is_empty() {
        return Err(Error::Contract("retrieval needs at least one batch".into()));
    }
    let ctx = ForwardCtx::inference();
    let mut trials = 0usize;
    let mut t2m = 0usize;
    let mut m2t = 0usize;
    for batch in batches {
        let tape = Tape::inference();
        let (similarity, _) = clip_forward(model, &tape, batch, &ctx)?;
        let (row_hits, col_hits) = retrieval_top1(&similarity)?;
        t2m += row_hits;
        m2t += col_hits;
        trials += batch.len();
    }
    Ok(RetrievalAccuracy {
        text_to_mel_top1: t2m as f64 / trials as f64,
        mel_to_text_top1: m2t as f64 / trials as f64,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AudioConfig;
    use crate::data::{gen_toy_corpus, make_batches, ToyCorpusSpec};

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
            9,
        )
    }

    #[test]
    fn default_batch_size_is_sixteen() {
        assert_eq!(crate::config::TrainConfig::default().batch_size, 16);
    }

    #[test]
    fn loss_decreases_on_a_frozen_batch() {
        let model =
            SpeechClipModel::<f32>::new(&tiny_cfg(), 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let batch = toy_batch(4);
        let mut st = state();
        let first = train_clip_step(&model, &batch, &mut st).unwrap();
        let mut last = first;
        for _ in 0..30 {
            last = train_clip_step(&model, &batch, &mut st).unwrap();
        }
        assert!(st.global_step == 31);
        assert!(
            last.loss < first.loss,
            "loss should fall: {} -> {}",
            first.loss,
            last.loss
        );
    }

    #[test]
    fn metric_traces_are_seed_deterministic() {
        let run = || {
            let model =
                SpeechClipModel::<f32>::new(&tiny_cfg(), 10, ClipLossKind::SimMse, 0.07, 5)
                    .unwrap();
            let batch = toy_batch(3);
            let mut st = state();
            (0..5)
                .map(|_| {
                    let m = train_clip_step(&model, &batch, &mut st).unwrap();
                    (m.loss, m.duration_loss, m.diag_mean)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pad_values_never_reach_the_loss() {
        let model =
            SpeechClipModel::<f32>::new(&tiny_cfg(), 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let batch = toy_batch(3);
        let mut perturbed = batch.clone();
        for i in 0..perturbed.len() {
            let n_valid = perturbed.text_len(i);
            let t_valid = perturbed.mel_len(i);
            for v in &mut perturbed.phoneme_ids[i][n_valid..] {
                *v = 1; // flip PAD to UNK in the pad region
            }
            let mels = perturbed.n_mels;
            for v in &mut perturbed.mels[i][t_valid * mels..] {
                *v = 7.25;
            }
        }
        let mut st_a = state();
        let mut st_b = state();
        let a = train_clip_step(&model, &batch, &mut st_a).unwrap();
        // Rebuild an identical model so parameters match bitwise.
        let model_b =
            SpeechClipModel::<f32>::new(&tiny_cfg(), 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let b = train_clip_step(&model_b, &perturbed, &mut st_b).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.diag_mean.to_bits(), b.diag_mean.to_bits());
    }

    #[test]
    fn retrieval_on_identity_is_perfect() {
        let model =
            SpeechClipModel::<f32>::new(&tiny_cfg(), 10, ClipLossKind::SimMse, 0.07, 5).unwrap();
        let batch = toy_batch(4);
        let mut st = state();
        for _ in 0..200 {
            train_clip_step(&model, &batch, &mut st).unwrap();
        }
        let acc = retrieval_eval(&model, &[batch]).unwrap();
        assert_eq!(acc.trials, 4);
        assert!(acc.text_to_mel_top1 > 0.9, "{acc:?}");
        assert!(acc.mel_to_text_top1 > 0.9, "{acc:?}");
    }
}
