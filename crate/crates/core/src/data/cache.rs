use std::path::Path;

use crate::checkpoint::Container;
use crate::data::Utterance;
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::{text_to_phonemes, Lexicon, PhonemeInventory};

/// Write the precomputed-mel cache: one container holding `mel/<id>`
/// (`[T, n_mels]`) and `dur/<id>` (`[N]`) per utterance.
pub fn write_corpus_cache(path: impl AsRef<Path>, utterances: &[Utterance]) -> Result<()> {
    let mut container = Container::new();
    for u in utterances {
        container.insert(
            format!("mel/{}", u.id),
            Tensor::from_vec(u.mel.data.clone(), &[u.mel.frames, u.mel.n_mels])?,
        )?;
        let durs: Vec<f32> = u.durations().iter().map(|&d| d as f32).collect();
        container.insert(
            format!("dur/{}", u.id),
            Tensor::from_vec(durs, &[u.durations().len()])?,
        )?;
    }
    container.save(path)
}

/// Rebuild utterances from the cache plus manifest transcripts. Phonemes
/// are re-derived from the transcripts with the same inventory and lexicon
/// used at preparation time, and every utterance passes the duration /
/// frame-count gate again on the way in.
pub fn read_corpus_cache(
    path: impl AsRef<Path>,
    entries: &[(String, String)],
    inventory: &PhonemeInventory,
    lexicon: &Lexicon,
) -> Result<Vec<Utterance>> {
    let container = Container::load(path.as_ref())?;
    let mut utterances = Vec::with_capacity(entries.len());
    for (id, transcript) in entries {
        let mel_t = container
            .get(&format!("mel/{id}"))
            .ok_or_else(|| Error::Manifest(format!("cache is missing mel/{id}")))?;
        let dur_t = container
            .get(&format!("dur/{id}"))
            .ok_or_else(|| Error::Manifest(format!("cache is missing dur/{id}")))?;
        let (frames, n_mels) = mel_t.dims2()?;
        let mel = MelSpectrogram::new(mel_t.data().to_vec(), frames, n_mels)?;
        let durations: Vec<usize> = dur_t.data().iter().map(|&v| v as usize).collect();
        let seq = text_to_phonemes(transcript, inventory, lexicon)
            .map_err(|e| e.at_stage("cache_read"))?
            .with_durations(durations)
            .map_err(|_| {
                Error::Manifest(format!(
                    "'{id}': cached durations do not match the transcript phoneme count"
                ))
            })?;
        utterances.push(Utterance::new(id.clone(), seq, mel)?);
    }
    Ok(utterances)
}

/// Every manifest id must be covered by the cache.
pub fn verify_cache_covers(path: impl AsRef<Path>, ids: &[String]) -> Result<()> {
    let container = Container::load(path.as_ref())?;
    for id in ids {
        if container.get(&format!("mel/{id}")).is_none()
            || container.get(&format!("dur/{id}")).is_none()
        {
            return Err(Error::Manifest(format!("cache does not cover id '{id}'")));
        }
    }
    Ok(())
}
