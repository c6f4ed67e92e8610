use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub transcript: String,
}

/// Parsed LJSpeech-layout corpus: `metadata.csv` with pipe-separated
/// `id|transcript|normalized_transcript` lines plus a `wavs/` directory.
#[derive(Debug, Clone)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    /// IDs whose wav file was missing; reported, not fatal.
    pub skipped: Vec<String>,
}

impl CorpusManifest {
    pub fn wav_path(&self, id: &str) -> PathBuf {
        self.root.join("wavs").join(format!("{id}.wav"))
    }

    /// Deterministic train/validation split.
    pub fn split(&self, val_fraction: f64, seed: u64) -> (Vec<&ManifestEntry>, Vec<&ManifestEntry>) {
        let mut order: Vec<&ManifestEntry> = self.entries.iter().collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((self.entries.len() as f64) * val_fraction).round() as usize;
        let val = order.split_off(order.len().saturating_sub(n_val));
        (order, val)
    }
}

/// Load `root/metadata.csv`, preferring the normalized transcript (third
/// field) over the raw one. Every entry's wav must exist under `root/wavs/`;
/// missing files go to the skipped report.
pub fn load_ljspeech(root: impl AsRef<Path>) -> Result<CorpusManifest> {
    let root = root.as_ref().to_path_buf();
    let metadata = root.join("metadata.csv");
    if !metadata.is_file() {
        return Err(Error::Manifest(format!(
            "missing metadata file {}",
            metadata.display()
        )));
    }
    let body = std::fs::read_to_string(&metadata)?;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 2 {
            return Err(Error::Manifest(format!(
                "{}:{}: expected 2-3 pipe-separated fields, got {}",
                metadata.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::Manifest(format!(
                "{}:{}: empty utterance id",
                metadata.display(),
                lineno + 1
            )));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Manifest(format!(
                "{}:{}: duplicate utterance id '{id}'",
                metadata.display(),
                lineno + 1
            )));
        }
        let transcript = fields
            .get(2)
            .filter(|t| !t.trim().is_empty())
            .or_else(|| fields.get(1))
            .unwrap()
            .trim()
            .to_string();
        if root.join("wavs").join(format!("{id}.wav")).is_file() {
            entries.push(ManifestEntry { id, transcript });
        } else {
            skipped.push(id);
        }
    }
    if entries.is_empty() && skipped.is_empty() {
        log::warn!("{} holds no entries", metadata.display());
    }
    if !skipped.is_empty() {
        log::warn!("{} entries skipped for missing wavs", skipped.len());
    }
    Ok(CorpusManifest {
        root,
        entries,
        skipped,
    })
}
