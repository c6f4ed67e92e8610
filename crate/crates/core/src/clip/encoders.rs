use crate::blocks::{
    length_regulator, lr_to_frames, AttentionMask, DurationPredictorParams, FftBlockParams,
    ForwardCtx, Linear,
};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::tensor::{
    param_seed, seeded_init, Element, InitScheme, Parameter, Tape, Tensor,
};
use crate::text::{positional_encoding, positional_encoding_stacked, PhonemeSequence};

/// Row ranges of consecutive segments with the given lengths.
pub fn stack_bounds(lengths: &[usize]) -> Vec<(usize, usize)> {
    let mut bounds = Vec::with_capacity(lengths.len());
    let mut at = 0;
    for &len in lengths {
        bounds.push((at, len));
        at += len;
    }
    bounds
}

fn build_blocks<E: Element>(
    prefix: &str,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<Vec<FftBlockParams<E>>> {
    (0..cfg.n_blocks)
        .map(|i| {
            FftBlockParams::new(
                &format!("{prefix}.fft.{i}"),
                cfg.d_model,
                cfg.n_heads,
                cfg.conv_hidden,
                cfg.conv_kernel1,
                cfg.conv_kernel2,
                cfg.block_dropout,
                seed,
            )
        })
        .collect()
}

/// Everything the text branch produces for one utterance.
pub struct TextEncoding<E: Element = f32> {
    /// Length-regulated frame-level states `[M, d_model]`.
    pub frames: Tensor<E>,
    /// Unit-norm utterance embedding `[d_model]`.
    pub pooled: Tensor<E>,
    /// Predicted log-durations `[N]`.
    pub pred_log_d: Tensor<E>,
    /// Frame counts actually used for regulation.
    pub durations: Vec<usize>,
    /// Phoneme-level hidden states `[N, d_model]` (the decoder input source).
    pub hidden: Tensor<E>,
}

/// Phoneme embedding + FFT stack with an encapsulated duration predictor.
/// Training regulates lengths with ground-truth durations; inference uses
/// the predictor's rounded output.
pub struct TextEncoder<E: Element = f32> {
    pub embedding: Parameter<E>,
    pub blocks: Vec<FftBlockParams<E>>,
    pub duration: DurationPredictorParams<E>,
    pub cfg: ModelConfig,
    pub vocab_size: usize,
}

impl<E: Element> TextEncoder<E> {
    pub const PREFIX: &'static str = "text_encoder.";

    pub fn new(cfg: &ModelConfig, vocab_size: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if vocab_size < 2 {
            return Err(Error::InvalidShape(
                "vocabulary needs at least PAD and UNK".into(),
            ));
        }
        let emb_name = "text_encoder.embedding";
        let sigma = (cfg.d_model as f64).powf(-0.5);
        Ok(TextEncoder {
            embedding: Parameter::new(
                emb_name,
                seeded_init(
                    &[vocab_size, cfg.d_model],
                    InitScheme::Normal(sigma),
                    param_seed(seed, emb_name),
                )?,
            ),
            blocks: build_blocks("text_encoder", cfg, seed)?,
            duration: DurationPredictorParams::new(
                "text_encoder.dur",
                cfg.d_model,
                cfg.dur_kernel,
                cfg.dur_dropout,
                seed,
            )?,
            cfg: *cfg,
            vocab_size,
        })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = vec![self.embedding.clone()];
        for b in &self.blocks {
            params.extend(b.parameters());
        }
        params.extend(self.duration.parameters());
        params
    }

    /// Phoneme-level hidden states `[N, d_model]` before duration handling.
    pub fn hidden_states(
        &self,
        tape: &Tape<E>,
        ids: &[usize],
        ctx: &ForwardCtx,
    ) -> Result<Tensor<E>> {
        let n = ids.len();
        let emb = tape.embedding(&self.embedding.value(), ids)?;
        let pe = positional_encoding::<E>(n, self.cfg.d_model)?;
        let mut h = tape.add(&emb, &pe)?;
        let mask = AttentionMask::full(n);
        for block in &self.blocks {
            h = block.forward(tape, &h, &mask, ctx)?;
        }
        Ok(h)
    }

    /// Full text branch: embed, encode, predict durations, length-regulate
    /// (ground truth when `use_gt_durations`, else predicted), pool to a
    /// unit-norm embedding.
    pub fn encode(
        &self,
        tape: &Tape<E>,
        seq: &PhonemeSequence,
        use_gt_durations: bool,
        ctx: &ForwardCtx,
    ) -> Result<TextEncoding<E>> {
        if seq.is_empty() {
            return Err(Error::EmptyText);
        }
        let hidden = self.hidden_states(tape, &seq.ids, ctx)?;
        let pred_log_d = self.duration.forward(tape, &hidden, ctx)?;
        let durations: Vec<usize> = if use_gt_durations {
            seq.durations
                .clone()
                .ok_or_else(|| Error::Contract("ground-truth durations requested but absent".into()))?
        } else {
            lr_to_frames(&pred_log_d)
        };
        let frames = length_regulator(tape, &hidden, &durations)?;
        let mask = vec![true; frames.shape()[0]];
        let pooled = tape.l2_normalize(&tape.masked_mean_pool(&frames, &mask)?)?;
        Ok(TextEncoding {
            frames,
            pooled,
            pred_log_d,
            durations,
            hidden,
        })
    }

    /// The text branch over a whole batch at once, sequences stacked
    /// row-wise so the heavy position-local math runs as single gemms.
    pub fn encode_batch(
        &self,
        tape: &Tape<E>,
        seqs: &[&PhonemeSequence],
        use_gt_durations: bool,
        ctx: &ForwardCtx,
    ) -> Result<BatchTextEncoding<E>> {
        if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::EmptyText);
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let phoneme_bounds = stack_bounds(&lengths);
        let all_ids: Vec<usize> = seqs.iter().flat_map(|s| s.ids.iter().copied()).collect();

        let emb = tape.embedding(&self.embedding.value(), &all_ids)?;
        let pe = positional_encoding_stacked::<E>(&lengths, self.cfg.d_model)?;
        let mut hidden = tape.add(&emb, &pe)?;
        for block in &self.blocks {
            hidden = block.forward_stack(tape, &hidden, &phoneme_bounds, false, ctx)?;
        }
        let pred_log_d = self.duration.forward_stack(tape, &hidden, &phoneme_bounds, ctx)?;

        let durations: Vec<Vec<usize>> = if use_gt_durations {
            seqs.iter()
                .map(|s| {
                    s.durations.clone().ok_or_else(|| {
                        Error::Contract("ground-truth durations requested but absent".into())
                    })
                })
                .collect::<Result<_>>()?
        } else {
            let values = pred_log_d.data();
            phoneme_bounds
                .iter()
                .map(|&(start, len)| {
                    let slice = Tensor::from_vec(values[start..start + len].to_vec(), &[len])
                        .expect("valid slice");
                    Ok(lr_to_frames(&slice))
                })
                .collect::<Result<_>>()?
        };
        let flat_durations: Vec<usize> = durations.iter().flatten().copied().collect();
        let frames = length_regulator(tape, &hidden, &flat_durations)?;
        let frame_lengths: Vec<usize> = durations.iter().map(|d| d.iter().sum()).collect();
        if frame_lengths.iter().any(|&f| f == 0) {
            return Err(Error::EmptyExpansion);
        }
        let frame_bounds = stack_bounds(&frame_lengths);

        let mut pooled = Vec::with_capacity(seqs.len());
        for &(start, len) in &frame_bounds {
            let item = tape.slice_rows(&frames, start, len)?;
            let mean = tape.masked_mean_pool(&item, &vec![true; len])?;
            pooled.push(tape.l2_normalize(&mean)?);
        }
        Ok(BatchTextEncoding {
            frames,
            frame_bounds,
            pooled,
            pred_log_d,
            phoneme_bounds,
            durations,
        })
    }
}

/// Batch-stacked output of [`TextEncoder::encode_batch`].
pub struct BatchTextEncoding<E: Element = f32> {
    /// Length-regulated frame states for all items, stacked `[sum M_i, d]`.
    pub frames: Tensor<E>,
    pub frame_bounds: Vec<(usize, usize)>,
    /// Per-item unit-norm utterance embeddings.
    pub pooled: Vec<Tensor<E>>,
    /// Predicted log-durations for all items, stacked `[sum N_i]`.
    pub pred_log_d: Tensor<E>,
    pub phoneme_bounds: Vec<(usize, usize)>,
    /// Frame counts used for regulation, per item.
    pub durations: Vec<Vec<usize>>,
}

/// Input projection (n_mels to d_model) plus the FFT stack, pooled the same
/// way as the text branch.
pub struct MelEncoder<E: Element = f32> {
    pub input: Linear<E>,
    pub blocks: Vec<FftBlockParams<E>>,
    pub cfg: ModelConfig,
}

impl<E: Element> MelEncoder<E> {
    pub const PREFIX: &'static str = "mel_encoder.";

    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(MelEncoder {
            input: Linear::new("mel_encoder.input", cfg.n_mels, cfg.d_model, seed)?,
            blocks: build_blocks("mel_encoder", cfg, seed)?,
            cfg: *cfg,
        })
    }

    pub fn parameters(&self) -> Vec<Parameter<E>> {
        let mut params = self.input.parameters();
        for b in &self.blocks {
            params.extend(b.parameters());
        }
        params
    }

    /// Encode a `[T, n_mels]` log-mel matrix to frame states and a pooled
    /// unit-norm embedding.
    pub fn encode(
        &self,
        tape: &Tape<E>,
        mel: &Tensor<E>,
        ctx: &ForwardCtx,
    ) -> Result<(Tensor<E>, Tensor<E>)> {
        let (t, width) = mel.dims2()?;
        if width != self.cfg.n_mels {
            return Err(Error::Shape(format!(
                "mel encoder expects width {}, got {width}",
                self.cfg.n_mels
            )));
        }
        let x = self.input.forward(tape, mel)?;
        let pe = positional_encoding::<E>(t, self.cfg.d_model)?;
        let mut h = tape.add(&x, &pe)?;
        let mask = AttentionMask::full(t);
        for block in &self.blocks {
            h = block.forward(tape, &h, &mask, ctx)?;
        }
        let pooled = tape.l2_normalize(&tape.masked_mean_pool(&h, &vec![true; t])?)?;
        Ok((h, pooled))
    }

    /// The mel branch over a whole batch, inputs stacked row-wise.
    /// Returns the stacked frame states, their bounds, and per-item pooled
    /// embeddings.
    pub fn encode_batch(
        &self,
        tape: &Tape<E>,
        mels: &[Tensor<E>],
        ctx: &ForwardCtx,
    ) -> Result<(Tensor<E>, Vec<(usize, usize)>, Vec<Tensor<E>>)> {
        if mels.is_empty() {
            return Err(Error::Shape("mel batch is empty".into()));
        }
        let mut lengths = Vec::with_capacity(mels.len());
        for mel in mels {
            let (t, width) = mel.dims2()?;
            if width != self.cfg.n_mels {
                return Err(Error::Shape(format!(
                    "mel encoder expects width {}, got {width}",
                    self.cfg.n_mels
                )));
            }
            lengths.push(t);
        }
        let bounds = stack_bounds(&lengths);
        let refs: Vec<&Tensor<E>> = mels.iter().collect();
        let stacked = tape.concat_rows(&refs)?;
        let x = self.input.forward(tape, &stacked)?;
        let pe = positional_encoding_stacked::<E>(&lengths, self.cfg.d_model)?;
        let mut h = tape.add(&x, &pe)?;
        for block in &self.blocks {
            h = block.forward_stack(tape, &h, &bounds, false, ctx)?;
        }
        let mut pooled = Vec::with_capacity(mels.len());
        for &(start, len) in &bounds {
            let item = tape.slice_rows(&h, start, len)?;
            let mean = tape.masked_mean_pool(&item, &vec![true; len])?;
            pooled.push(tape.l2_normalize(&mean)?);
        }
        Ok((h, bounds, pooled))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_blocks: 2,
            conv_hidden: 16,
            conv_kernel1: 3,
            conv_kernel2: 1,
            block_dropout: 0.0,
            dur_kernel: 3,
            dur_dropout: 0.0,
            n_mels: 4,
        }
    }

    fn seq(ids: Vec<usize>, durs: Vec<usize>) -> PhonemeSequence {
        PhonemeSequence::new(ids, "test")
            .unwrap()
            .with_durations(durs)
            .unwrap()
    }

    #[test]
    fn pooled_embedding_is_unit_norm() {
        let enc = TextEncoder::<f32>::new(&tiny_cfg(), 6, 3).unwrap();
        let tape = Tape::inference();
        let out = enc
            .encode(&tape, &seq(vec![2, 3, 4], vec![2, 1, 3]), true, &ForwardCtx::inference())
            .unwrap();
        let norm: f32 = out.pooled.data().iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert_eq!(out.frames.shape(), &[6, 8]);
        assert_eq!(out.pred_log_d.shape(), &[3]);
    }

    #[test]
    fn gt_durations_control_expansion_length() {
        let enc = TextEncoder::<f32>::new(&tiny_cfg(), 6, 3).unwrap();
        let tape = Tape::inference();
        let s = seq(vec![2, 3], vec![4, 5]);
        let out = enc.encode(&tape, &s, true, &ForwardCtx::inference()).unwrap();
        assert_eq!(out.frames.shape()[0], 9);
        assert_eq!(out.durations, vec![4, 5]);

        let mut no_durs = s.clone();
        no_durs.durations = None;
        assert!(matches!(
            enc.encode(&tape, &no_durs, true, &ForwardCtx::inference()),
            Err(Error::Contract(_))
        ));
        // Predicted durations replace ground truth at inference.
        let pred = enc.encode(&tape, &no_durs, false, &ForwardCtx::inference()).unwrap();
        assert_eq!(pred.durations.len(), 2);
        assert!(pred.durations.iter().all(|&d| d >= 1));
    }

    #[test]
    fn same_ids_produce_identical_encodings() {
        let enc = TextEncoder::<f32>::new(&tiny_cfg(), 6, 3).unwrap();
        let tape = Tape::inference();
        let a = enc
            .encode(&tape, &seq(vec![2, 4], vec![2, 2]), true, &ForwardCtx::inference())
            .unwrap();
        let b = enc
            .encode(&tape, &seq(vec![2, 4], vec![2, 2]), true, &ForwardCtx::inference())
            .unwrap();
        assert_eq!(a.pooled.data(), b.pooled.data());
    }

    #[test]
    fn mel_encoder_checks_width_and_pools_unit_norm() {
        let enc = MelEncoder::<f32>::new(&tiny_cfg(), 5).unwrap();
        let tape = Tape::inference();
        let bad = seeded_init::<f32>(&[5, 3], InitScheme::Normal(1.0), 1).unwrap();
        assert!(matches!(
            enc.encode(&tape, &bad, &ForwardCtx::inference()),
            Err(Error::Shape(_))
        ));
        let mel = seeded_init::<f32>(&[5, 4], InitScheme::Normal(1.0), 2).unwrap();
        let (frames, pooled) = enc.encode(&tape, &mel, &ForwardCtx::inference()).unwrap();
        assert_eq!(frames.shape(), &[5, 8]);
        let norm: f32 = pooled.data().iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    // Stacked batch evaluation must agree with the per-item path.
    #[test]
    fn batch_encoding_matches_per_item() {
        let cfg = tiny_cfg();
        let text = TextEncoder::<f32>::new(&cfg, 6, 3).unwrap();
        let mel = MelEncoder::<f32>::new(&cfg, 5).unwrap();
        let ctx = ForwardCtx::inference();
        let tape = Tape::inference();
        let seqs = [
            seq(vec![2, 3, 4], vec![2, 1, 3]),
            seq(vec![4, 2], vec![4, 2]),
            seq(vec![5], vec![3]),
        ];
        let seq_refs: Vec<&PhonemeSequence> = seqs.iter().collect();
        let batch = text.encode_batch(&tape, &seq_refs, true, &ctx).unwrap();
        for (i, s) in seqs.iter().enumerate() {
            let single = text.encode(&tape, s, true, &ctx).unwrap();
            for (a, b) in batch.pooled[i].data().iter().zip(single.pooled.data()) {
                assert!((a - b).abs() < 1e-5, "text item {i}: {a} vs {b}");
            }
            let (start, len) = batch.phoneme_bounds[i];
            for (a, b) in batch.pred_log_d.data()[start..start + len]
                .iter()
                .zip(single.pred_log_d.data())
            {
                assert!((a - b).abs() < 1e-5, "durations item {i}");
            }
        }

        let mels: Vec<Tensor<f32>> = (0..3)
            .map(|i| seeded_init::<f32>(&[3 + i, 4], InitScheme::Normal(1.0), i as u64).unwrap())
            .collect();
        let (_, bounds, pooled) = mel.encode_batch(&tape, &mels, &ctx).unwrap();
        assert_eq!(bounds, vec![(0, 3), (3, 4), (7, 5)]);
        for (i, m) in mels.iter().enumerate() {
            let (_, single) = mel.encode(&tape, m, &ctx).unwrap();
            for (a, b) in pooled[i].data().iter().zip(single.data()) {
                assert!((a - b).abs() < 1e-5, "mel item {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn default_parameter_names_are_unique_and_prefixed() {
        let cfg = ModelConfig::default();
        let text = TextEncoder::<f32>::new(&cfg, 10, 3).unwrap();
        let mel = MelEncoder::<f32>::new(&cfg, 3).unwrap();
        let mut all = text.parameters();
        all.extend(mel.parameters());
        crate::tensor::check_unique_names(&all).unwrap();
        assert!(text
            .parameters()
            .iter()
            .all(|p| p.name().starts_with(TextEncoder::<f32>::PREFIX)));
        assert!(mel
            .parameters()
            .iter()
            .all(|p| p.name().starts_with(MelEncoder::<f32>::PREFIX)));
        // Spot the documented naming scheme.
        assert!(all.iter().any(|p| p.name() == "text_encoder.fft.0.attn.wq"));
        assert!(all.iter().any(|p| p.name() == "text_encoder.dur.conv1.weight"));
    }
}
