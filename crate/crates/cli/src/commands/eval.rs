use std::path::PathBuf;

use cliptts::checkpoint::{unpack_global_step, Container};
use cliptts::clip::{retrieval_eval, SpeechClipModel};
use cliptts::data::make_batches;
use cliptts::tts::{eval_tts, TtsModel};

use crate::commands::common::{load_model_from_checkpoint, load_prepared_corpus};
use crate::config::RunConfig;
use crate::metrics::MetricsLog;
use crate::{CmdError, CmdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalMode {
    Retrieval,
    Tts,
}

#[derive(Debug)]
pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub cache: PathBuf,
    pub mode: EvalMode,
    pub config: Option<PathBuf>,
    pub set: Vec<String>,
}

#[derive(Debug)]
pub struct EvalSummary {
    pub rows: Vec<(&'static str, f64)>,
    pub utterances: usize,
}

/// Evaluate a checkpoint against a prepared corpus: retrieval top-1 in both
/// directions for pretraining checkpoints, teacher-forced mel MAE plus
/// duration MAE for TTS checkpoints. Results are printed and appended to
/// the metrics log beside the checkpoint.
pub fn run_eval(args: &EvalArgs) -> CmdResult<EvalSummary> {
    let mut cfg = RunConfig::resolve(args.config.as_deref(), &args.set)?;
    cfg.cache_dir = Some(args.cache.clone());
    let (utterances, inventory, _lexicon) = load_prepared_corpus(&cfg)?;
    let container = Container::load(&args.ckpt).map_err(CmdError::from)?;
    let step = unpack_global_step(&container).unwrap_or(0);

    let batches = make_batches(
        &utterances,
        cfg.train.batch_size,
        cfg.train.seed,
        cfg.train.bucket_frames,
    )
    .map_err(CmdError::from)?;

    let rows: Vec<(&'static str, f64)> = match args.mode {
        EvalMode::Retrieval => {
            let model = SpeechClipModel::<f32>::new(
                &cfg.model,
                inventory.size(),
                cfg.train.loss,
                cfg.train.infonce_temperature,
                cfg.train.seed,
            )
            .map_err(CmdError::from)?;
            // Only the encoders matter for retrieval; a TTS checkpoint will
            // fail here with a mismatch, which is the intended signal.
            let mut encoder_params = model.text_encoder.parameters();
            encoder_params.extend(model.mel_encoder.parameters());
            load_model_from_checkpoint(&container, &encoder_params)?;
            let acc = retrieval_eval(&model, &batches).map_err(CmdError::from)?;
            vec![
                ("eval/text_to_mel_top1", acc.text_to_mel_top1),
                ("eval/mel_to_text_top1", acc.mel_to_text_top1),
            ]
        }
        EvalMode::Tts => {
            let model = TtsModel::<f32>::new(
                &cfg.model,
                inventory.size(),
                cfg.train.decoder_causal,
                cfg.train.seed,
            )
            .map_err(CmdError::from)?;
            load_model_from_checkpoint(&container, &model.parameters())?;
            let eval = eval_tts(&model, &batches).map_err(CmdError::from)?;
            vec![
                ("eval/mel_mae", eval.mel_mae),
                ("eval/duration_mae_frames", eval.duration_mae_frames),
            ]
        }
    };

    if let Some(dir) = args.ckpt.parent() {
        let mut log = MetricsLog::open(dir.join("metrics.tsv"), 1)?;
        for (key, value) in &rows {
            log.record(step, key, *value)?;
        }
        log.flush()?;
    }

    Ok(EvalSummary {
        rows,
        utterances: utterances.len(),
    })
}
