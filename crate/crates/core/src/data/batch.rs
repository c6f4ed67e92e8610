use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{log_floor, MelSpectrogram};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};
use crate::text::{PhonemeSequence, PAD_ID};

/// One training example. Construction is the hard gate: the ground-truth
/// durations must sum exactly to the mel frame count.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub phonemes: PhonemeSequence,
    pub mel: MelSpectrogram,
}

impl Utterance {
    pub fn new(id: impl Into<String>, phonemes: PhonemeSequence, mel: MelSpectrogram) -> Result<Self> {
        let id = id.into();
        let total = phonemes.total_frames().ok_or_else(|| {
            Error::Contract(format!("utterance '{id}' has no ground-truth durations"))
        })?;
        if total != mel.frames {
            return Err(Error::Contract(format!(
                "utterance '{id}': durations sum to {total} but mel has {} frames",
                mel.frames
            )));
        }
        Ok(Utterance { id, phonemes, mel })
    }

    pub fn n_phonemes(&self) -> usize {
        self.phonemes.len()
    }

    pub fn n_frames(&self) -> usize {
        self.mel.frames
    }

    pub fn durations(&self) -> &[usize] {
        self.phonemes.durations.as_ref().expect("validated in new()")
    }
}

/// Uniform split surrogate for corpora without duration annotations:
/// `floor(frames/n)` per phoneme with the remainder spread over the first
/// `frames mod n` phonemes, summing exactly to `frames`.
pub fn uniform_duration_targets(n_phonemes: usize, mel_frames: usize) -> Result<Vec<usize>> {
    if n_phonemes == 0 || mel_frames < n_phonemes {
        return Err(Error::TooShort {
            frames: mel_frames,
            phonemes: n_phonemes,
        });
    }
    let base = mel_frames / n_phonemes;
    let extra = mel_frames % n_phonemes;
    Ok((0..n_phonemes)
        .map(|i| if i < extra { base + 1 } else { base })
        .collect())
}

/// Padded batch: phoneme IDs padded with PAD, mels padded with the log
/// floor, and prefix-true masks for both modalities. Consumers read the
/// valid region through the masks, so pad values are irrelevant by
/// construction (and tested to be).
#[derive(Debug, Clone)]
pub struct ClipBatch {
    pub utt_ids: Vec<String>,
    /// `[B][max_phonemes]`, padded with `PAD_ID`.
    pub phoneme_ids: Vec<Vec<usize>>,
    /// `[B][max_phonemes]`.
    pub text_mask: Vec<Vec<bool>>,
    /// Ground-truth durations, valid length only.
    pub durations: Vec<Vec<usize>>,
    /// `[B][max_frames * n_mels]`, padded with the log floor.
    pub mels: Vec<Vec<f32>>,
    /// `[B][max_frames]`.
    pub mel_mask: Vec<Vec<bool>>,
    pub n_mels: usize,
}

impl ClipBatch {
    pub fn from_utterances(items: &[&Utterance]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let n_mels = items[0].mel.n_mels;
        let max_n = items.iter().map(|u| u.n_phonemes()).max().unwrap();
        let max_t = items.iter().map(|u| u.n_frames()).max().unwrap();
        let floor = log_floor();
        let mut batch = ClipBatch {
            utt_ids: Vec::with_capacity(items.len()),
            phoneme_ids: Vec::with_capacity(items.len()),
            text_mask: Vec::with_capacity(items.len()),
            durations: Vec::with_capacity(items.len()),
            mels: Vec::with_capacity(items.len()),
            mel_mask: Vec::with_capacity(items.len()),
            n_mels,
        };
        for u in items {
            if u.mel.n_mels != n_mels {
                return Err(Error::Shape(format!(
                    "utterance '{}' has {} mel bands, batch has {n_mels}",
                    u.id, u.mel.n_mels
                )));
            }
            let n = u.n_phonemes();
            let t = u.n_frames();
            let mut ids = u.phonemes.ids.clone();
            ids.resize(max_n, PAD_ID);
            let mut tmask = vec![true; n];
            tmask.resize(max_n, false);
            let mut mel = u.mel.data.clone();
            mel.resize(max_t * n_mels, floor);
            let mut mmask = vec![true; t];
            mmask.resize(max_t, false);
            batch.utt_ids.push(u.id.clone());
            batch.phoneme_ids.push(ids);
            batch.text_mask.push(tmask);
            batch.durations.push(u.durations().to_vec());
            batch.mels.push(mel);
            batch.mel_mask.push(mmask);
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.utt_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utt_ids.is_empty()
    }

    pub fn text_len(&self, i: usize) -> usize {
        self.text_mask[i].iter().filter(|&&m| m).count()
    }

    pub fn mel_len(&self, i: usize) -> usize {
        self.mel_mask[i].iter().filter(|&&m| m).count()
    }

    /// Valid phoneme IDs of item `i` (pad region excluded).
    pub fn item_phoneme_ids(&self, i: usize) -> &[usize] {
        &self.phoneme_ids[i][..self.text_len(i)]
    }

    /// Valid mel rows of item `i` as a `[T_i, n_mels]` tensor.
    pub fn item_mel_tensor<E: Element>(&self, i: usize) -> Tensor<E> {
        let t = self.mel_len(i);
        let data: Vec<E> = self.mels[i][..t * self.n_mels]
            .iter()
            .map(|&v| E::from_f64(v as f64))
            .collect();
        Tensor::from_vec(data, &[t, self.n_mels]).expect("valid slice")
    }

    /// Natural-log ground-truth durations of item `i` as a `[N_i]` tensor.
    pub fn item_log_durations<E: Element>(&self, i: usize) -> Tensor<E> {
        let data: Vec<E> = self.durations[i]
            .iter()
            .map(|&d| E::from_f64((d as f64).ln()))
            .collect();
        Tensor::from_vec(data, &[self.durations[i].len()]).expect("nonempty")
    }
}

/// Deterministic batch assembly: shuffle with the seed, bucket by mel
/// length (`bucket_width` frames per bucket, 0 disables bucketing), chunk
/// each bucket into batches, then shuffle the batch order. Pure function of
/// `(utterances, batch_size, seed, bucket_width)`.
pub fn make_batches(
    utterances: &[Utterance],
    batch_size: usize,
    seed: u64,
    bucket_width: usize,
) -> Result<Vec<ClipBatch>> {
    if utterances.is_empty() || batch_size == 0 {
        return Err(Error::Contract(
            "make_batches needs utterances and a positive batch size".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.shuffle(&mut rng);

    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for idx in order {
        let key = if bucket_width == 0 {
            0
        } else {
            utterances[idx].n_frames() / bucket_width
        };
        buckets.entry(key).or_default().push(idx);
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    for bucket in buckets.values() {
        for chunk in bucket.chunks(batch_size) {
            groups.push(chunk.to_vec());
        }
    }
    groups.shuffle(&mut rng);

    groups
        .into_iter()
        .map(|group| {
            let items: Vec<&Utterance> = group.iter().map(|&i| &utterances[i]).collect();
            ClipBatch::from_utterances(&items)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::PhonemeSequence;

    fn utterance(id: &str, durations: Vec<usize>) -> Utterance {
        let frames: usize = durations.iter().sum();
        let n = durations.len();
        let seq = PhonemeSequence::new(vec![2; n], id)
            .unwrap()
            .with_durations(durations)
            .unwrap();
        let mel = MelSpectrogram::new(vec![-1.0; frames * 4], frames, 4).unwrap();
        Utterance::new(id, seq, mel).unwrap()
    }

    #[test]
    fn duration_sum_must_match_frames() {
        let seq = PhonemeSequence::new(vec![2, 3], "ab")
            .unwrap()
            .with_durations(vec![2, 2])
            .unwrap();
        let mel = MelSpectrogram::new(vec![0.0; 5 * 4], 5, 4).unwrap();
        assert!(matches!(
            Utterance::new("bad", seq, mel),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn uniform_targets() {
        assert_eq!(uniform_duration_targets(3, 9).unwrap(), vec![3, 3, 3]);
        assert_eq!(uniform_duration_targets(3, 10).unwrap(), vec![4, 3, 3]);
        assert_eq!(uniform_duration_targets(1, 7).unwrap(), vec![7]);
        assert!(matches!(
            uniform_duration_targets(5, 3),
            Err(Error::TooShort { frames: 3, phonemes: 5 })
        ));
    }

    #[test]
    fn equal_length_batch_has_full_masks() {
        let utts = vec![utterance("a", vec![2, 2]), utterance("b", vec![1, 3])];
        let batch = ClipBatch::from_utterances(&utts.iter().collect::<Vec<_>>()).unwrap();
        assert!(batch.text_mask.iter().flatten().all(|&m| m));
        assert!(batch.mel_mask.iter().flatten().all(|&m| m));
    }

    #[test]
    fn batch_sizes_cover_all_utterances() {
        let utts: Vec<Utterance> = (0..33)
            .map(|i| utterance(&format!("u{i}"), vec![2, 3]))
            .collect();
        let batches = make_batches(&utts, 16, 5, 64).unwrap();
        let mut sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 16, 16]);
        let mut seen: Vec<String> = batches
            .iter()
            .flat_map(|b| b.utt_ids.iter().cloned())
            .collect();
        seen.sort();
        assert_eq!(seen.len(), 33);
        seen.dedup();
        assert_eq!(seen.len(), 33, "no duplicates across batches");
    }

    #[test]
    fn batching_is_pure_in_its_seed() {
        let utts: Vec<Utterance> = (0..20)
            .map(|i| utterance(&format!("u{i}"), vec![1 + i % 3, 2]))
            .collect();
        let a = make_batches(&utts, 8, 9, 64).unwrap();
        let b = make_batches(&utts, 8, 9, 64).unwrap();
        let ids = |bs: &[ClipBatch]| -> Vec<Vec<String>> {
            bs.iter().map(|x| x.utt_ids.clone()).collect()
        };
        assert_eq!(ids(&a), ids(&b));
        let c = make_batches(&utts, 8, 10, 64).unwrap();
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn bucketing_groups_similar_lengths() {
        // Widths 1 frame apart per bucket of width 4: lengths 2-3 vs 70+.
        let mut utts = Vec::new();
        for i in 0..8 {
            utts.push(utterance(&format!("short{i}"), vec![1, 2]));
        }
        for i in 0..8 {
            utts.push(utterance(&format!("long{i}"), vec![35, 36]));
        }
        let batches = make_batches(&utts, 8, 3, 64).unwrap();
        for b in &batches {
            let short = b.utt_ids.iter().filter(|i| i.starts_with("short")).count();
            assert!(short == 0 || short == b.len(), "buckets must not mix: {:?}", b.utt_ids);
        }
        // Disabled bucketing may mix lengths.
        let unbucketed = make_batches(&utts, 8, 3, 0).unwrap();
        assert_eq!(unbucketed.iter().map(|b| b.len()).sum::<usize>(), 16);
    }

    #[test]
    fn item_accessors_slice_valid_region() {
        let utts = vec![utterance("a", vec![2]), utterance("b", vec![1, 3, 2])];
        let batch = ClipBatch::from_utterances(&utts.iter().collect::<Vec<_>>()).unwrap();
        assert_eq!(batch.item_phoneme_ids(0), &[2]);
        assert_eq!(batch.item_phoneme_ids(1), &[2, 2, 2]);
        let mel0 = batch.item_mel_tensor::<f32>(0);
        assert_eq!(mel0.shape(), &[2, 4]);
        let logd = batch.item_log_durations::<f64>(1);
        assert_eq!(logd.numel(), 3);
        assert!((logd.data()[1] - 3f64.ln()).abs() < 1e-12);
    }
}
