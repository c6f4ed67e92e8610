use std::path::PathBuf;

use cliptts::checkpoint::{unpack_global_step, unpack_inventory, Container};
use cliptts::clip::{train_clip_step, SpeechClipModel, TrainerState};
use cliptts::data::{make_batches, ClipBatch, Utterance};
use cliptts::tensor::Parameter;
use cliptts::text::PhonemeInventory;
use cliptts::tts::{train_tts_step, TtsModel};

use crate::commands::common::{
    checkpoint_name, find_latest_checkpoint, load_model_from_checkpoint, load_prepared_corpus,
    save_checkpoint,
};
use crate::config::RunConfig;
use crate::lock::RunLock;
use crate::metrics::MetricsLog;
use crate::{CmdError, CmdResult};

#[derive(Debug, Clone)]
pub enum TrainKind {
    Clip,
    Tts { init_from: Option<PathBuf> },
}

#[derive(Debug)]
pub struct TrainArgs {
    pub kind: TrainKind,
    pub config: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub steps: Option<u64>,
    pub set: Vec<String>,
}

#[derive(Debug)]
pub struct TrainSummary {
    pub steps_run: u64,
    pub final_step: u64,
    pub final_loss: Option<f64>,
    pub final_checkpoint: PathBuf,
    pub resumed_from: Option<u64>,
}

enum TrainModel {
    Clip(SpeechClipModel<f32>),
    Tts(TtsModel<f32>),
}

impl TrainModel {
    fn parameters(&self) -> Vec<Parameter<f32>> {
        match self {
            TrainModel::Clip(m) => m.parameters(),
            TrainModel::Tts(m) => m.parameters(),
        }
    }

    fn step(
        &self,
        batch: &ClipBatch,
        state: &mut TrainerState,
    ) -> cliptts::Result<Vec<(&'static str, f64)>> {
        match self {
            TrainModel::Clip(m) => {
                let metrics = train_clip_step(m, batch, state)?;
                Ok(vec![
                    ("clip/loss", metrics.loss),
                    ("clip/sim_loss", metrics.clip_loss),
                    ("clip/duration_loss", metrics.duration_loss),
                    ("clip/diag_mean", metrics.diag_mean),
                    ("clip/offdiag_mean", metrics.offdiag_mean),
                    ("clip/lr", metrics.lr),
                ])
            }
            TrainModel::Tts(m) => {
                let metrics = train_tts_step(m, batch, state)?;
                Ok(vec![
                    ("tts/loss", metrics.loss),
                    ("tts/mel_mae", metrics.mel_mae),
                    ("tts/duration_loss", metrics.duration_loss),
                    ("tts/lr", metrics.lr),
                ])
            }
        }
    }
}

fn build_model(
    kind: &TrainKind,
    cfg: &RunConfig,
    inventory: &PhonemeInventory,
) -> CmdResult<TrainModel> {
    match kind {
        TrainKind::Clip => Ok(TrainModel::Clip(
            SpeechClipModel::new(
                &cfg.model,
                inventory.size(),
                cfg.train.loss,
                cfg.train.infonce_temperature,
                cfg.train.seed,
            )
            .map_err(CmdError::from)?,
        )),
        TrainKind::Tts { init_from } => {
            let mut model = match init_from {
                Some(path) => {
                    let container = Container::load(path).map_err(CmdError::from)?;
                    if let Ok(ckpt_inventory) = unpack_inventory(&container) {
                        if &ckpt_inventory != inventory {
                            return Err(CmdError::input(format!(
                                "{}: checkpoint inventory disagrees with the corpus inventory",
                                path.display()
                            )));
                        }
                    }
                    TtsModel::from_pretrained(
                        &container,
                        &cfg.model,
                        cfg.train.decoder_causal,
                        cfg.train.seed,
                    )
                    .map_err(CmdError::from)?
                }
                None => TtsModel::new(
                    &cfg.model,
                    inventory.size(),
                    cfg.train.decoder_causal,
                    cfg.train.seed,
                )
                .map_err(CmdError::from)?,
            };
            model.freeze_encoder = cfg.train.freeze_encoder;
            Ok(TrainModel::Tts(model))
        }
    }
}

/// Deterministic batch plan: epoch `e` reshuffles with `seed ^ e`, so any
/// step's batch is a pure function of the corpus, config and step index.
fn epoch_batches(
    utterances: &[Utterance],
    cfg: &RunConfig,
    epoch: u64,
) -> CmdResult<Vec<ClipBatch>> {
    make_batches(
        utterances,
        cfg.train.batch_size,
        cfg.train.seed ^ epoch.wrapping_mul(0x9e3779b97f4a7c15),
        cfg.train.bucket_frames,
    )
    .map_err(CmdError::from)
}

/// Shared training loop: lock the run directory, resume from its latest
/// checkpoint when one exists, run the remaining steps with periodic
/// checkpoints and metrics, and write the final checkpoint. A non-finite
/// failure saves a diagnostic checkpoint and maps to exit code 3.
pub fn run_train(args: &TrainArgs) -> CmdResult<TrainSummary> {
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.set)?;
    let total_steps = args.steps.unwrap_or(cfg.train.steps);
    let _lock = RunLock::acquire(&args.out_dir)?;

    let (utterances, inventory, _lexicon) = load_prepared_corpus(&cfg)?;
    let model = build_model(&args.kind, &cfg, &inventory)?;
    let params = model.parameters();

    let schedule = cfg.train.schedule(cfg.model.d_model).map_err(CmdError::from)?;
    let mut state = TrainerState::new(
        schedule,
        cfg.train.adam,
        cfg.train.lambda_duration,
        cfg.train.seed,
    );

    // Resume from the newest checkpoint in the out dir, bitwise.
    let mut resumed_from = None;
    if let Some((step, path)) = find_latest_checkpoint(&args.out_dir) {
        let container = Container::load(&path).map_err(CmdError::from)?;
        load_model_from_checkpoint(&container, &params)?;
        cliptts::checkpoint::load_adam_state(&container, &params, step, true)
            .map_err(CmdError::from)?;
        state.global_step = unpack_global_step(&container).unwrap_or(step);
        resumed_from = Some(state.global_step);
        log::info!("resumed from {} at step {}", path.display(), state.global_step);
    }

    cfg.write_echo(&args.out_dir)?;
    let mut metrics = MetricsLog::open(args.out_dir.join("metrics.tsv"), cfg.train.log_every)?;

    let start_step = state.global_step;
    if start_step >= total_steps {
        let path = args.out_dir.join(checkpoint_name(start_step));
        if !path.exists() {
            save_checkpoint(&path, &params, start_step, &inventory)?;
        }
        return Ok(TrainSummary {
            steps_run: 0,
            final_step: start_step,
            final_loss: None,
            final_checkpoint: path,
            resumed_from,
        });
    }

    if total_steps == 0 {
        // Initialization checkpoint only.
        let path = args.out_dir.join(checkpoint_name(0));
        save_checkpoint(&path, &params, 0, &inventory)?;
        return Ok(TrainSummary {
            steps_run: 0,
            final_step: 0,
            final_loss: None,
            final_checkpoint: path,
            resumed_from,
        });
    }

    let mut current_epoch = u64::MAX;
    let mut batches: Vec<ClipBatch> = Vec::new();
    let batches_per_epoch = epoch_batches(&utterances, &cfg, 0)?.len() as u64;
    let mut final_loss = None;
    let mut last_saved = None;

    while state.global_step < total_steps {
        let step = state.global_step;
        let epoch = step / batches_per_epoch;
        if epoch != current_epoch {
            batches = epoch_batches(&utterances, &cfg, epoch)?;
            debug_assert_eq!(batches.len() as u64, batches_per_epoch);
            current_epoch = epoch;
        }
        let batch = &batches[(step % batches_per_epoch) as usize];

        let rows = match model.step(batch, &mut state) {
            Ok(rows) => rows,
            Err(e) => {
                let diag = args.out_dir.join("ckpt-diagnostic.spcl");
                save_checkpoint(&diag, &params, state.global_step, &inventory)?;
                metrics.flush()?;
                return Err(CmdError::numeric(format!(
                    "step {}: {e}; diagnostic checkpoint at {}",
                    state.global_step + 1,
                    diag.display()
                )));
            }
        };
        let done = state.global_step;
        for (key, value) in &rows {
            metrics.record(done, key, *value)?;
        }
        final_loss = rows.first().map(|(_, v)| *v);

        if done % cfg.train.checkpoint_every == 0 || done == total_steps {
            let path = args.out_dir.join(checkpoint_name(done));
            save_checkpoint(&path, &params, done, &inventory)?;
            last_saved = Some(done);
        }
    }

    if last_saved != Some(total_steps) {
        let path = args.out_dir.join(checkpoint_name(total_steps));
        save_checkpoint(&path, &params, total_steps, &inventory)?;
    }
    metrics.flush()?;

    Ok(TrainSummary {
        steps_run: total_steps - start_step,
        final_step: total_steps,
        final_loss,
        final_checkpoint: args.out_dir.join(checkpoint_name(total_steps)),
        resumed_from,
    })
}
