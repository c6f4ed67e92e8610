use std::path::{Path, PathBuf};

use cliptts::checkpoint::{
    pack_adam_state, pack_global_step, pack_inventory, pack_parameters, Container,
};
use cliptts::data::{read_corpus_cache, Utterance};
use cliptts::tensor::Parameter;
use cliptts::text::{Lexicon, PhonemeInventory};

use crate::config::RunConfig;
use crate::{CmdError, CmdResult};

/// Parse a prepared-corpus `metadata.csv` (pipe-separated, 2-3 fields,
/// normalized transcript preferred) without requiring audio files.
pub fn parse_metadata(path: &Path) -> CmdResult<Vec<(String, String)>> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| CmdError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (lineno, line) in body.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 2 {
            return Err(CmdError::input(format!(
                "{}:{}: expected 2-3 pipe-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        let transcript = fields
            .get(2)
            .filter(|t| !t.trim().is_empty())
            .or_else(|| fields.get(1))
            .unwrap();
        entries.push((fields[0].trim().to_string(), transcript.trim().to_string()));
    }
    Ok(entries)
}

/// Load a prepared corpus directory (metadata.csv + inventory.txt +
/// cache.spcl) back into utterances.
pub fn load_prepared_corpus(
    cfg: &RunConfig,
) -> CmdResult<(Vec<Utterance>, PhonemeInventory, Lexicon)> {
    let dir = cfg
        .cache_dir
        .as_ref()
        .ok_or_else(|| CmdError::input("data.cache_dir is not set"))?;
    let inventory = PhonemeInventory::load(dir.join("inventory.txt")).map_err(CmdError::from)?;
    let lexicon = match &cfg.lexicon {
        Some(path) => Lexicon::load(path).map_err(CmdError::from)?,
        None => Lexicon::empty(),
    };
    let entries = parse_metadata(&dir.join("metadata.csv"))?;
    if entries.is_empty() {
        return Err(CmdError::input(format!(
            "{} holds no utterances",
            dir.display()
        )));
    }
    let utterances = read_corpus_cache(dir.join("cache.spcl"), &entries, &inventory, &lexicon)
        .map_err(CmdError::from)?;
    Ok((utterances, inventory, lexicon))
}

/// Serialize parameters, optimizer state, the trainer step and the
/// inventory into one checkpoint file.
pub fn save_checkpoint(
    path: &Path,
    params: &[Parameter<f32>],
    global_step: u64,
    inventory: &PhonemeInventory,
) -> CmdResult {
    let mut container = Container::new();
    pack_parameters(&mut container, params).map_err(CmdError::from)?;
    pack_adam_state(&mut container, params).map_err(CmdError::from)?;
    pack_global_step(&mut container, global_step).map_err(CmdError::from)?;
    pack_inventory(&mut container, inventory).map_err(CmdError::from)?;
    container.save(path).map_err(CmdError::from)
}

pub fn checkpoint_name(step: u64) -> String {
    format!("ckpt-{step:06}.spcl")
}

/// Highest-step `ckpt-NNNNNN.spcl` in a directory, if any.
pub fn find_latest_checkpoint(dir: &Path) -> Option<(u64, PathBuf)> {
    let mut best: Option<(u64, PathBuf)> = None;
    let entries = std::fs::read_dir(dir).ok()?;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(digits) = name
            .strip_prefix("ckpt-")
            .and_then(|s| s.strip_suffix(".spcl"))
        {
            if let Ok(step) = digits.parse::<u64>() {
                if best.as_ref().map(|(b, _)| step > *b).unwrap_or(true) {
                    best = Some((step, entry.path()));
                }
            }
        }
    }
    best
}

/// Load every model parameter from a checkpoint, grouped by top-level
/// prefix so missing or extra tensors are reported per component.
pub fn load_model_from_checkpoint(
    container: &Container,
    params: &[Parameter<f32>],
) -> CmdResult {
    let mut prefixes: Vec<String> = params
        .iter()
        .map(|p| {
            let name = p.name();
            match name.split_once('.') {
                Some((top, _)) => format!("{top}."),
                None => name,
            }
        })
        .collect();
    prefixes.sort();
    prefixes.dedup();
    for prefix in prefixes {
        let group: Vec<Parameter<f32>> = params
            .iter()
            .filter(|p| p.name().starts_with(&prefix))
            .cloned()
            .collect();
        cliptts::checkpoint::load_parameters_strict(container, &group, &prefix)
            .map_err(CmdError::from)?;
    }
    Ok(())
}
