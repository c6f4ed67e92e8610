use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cliptts_cli::commands::{
    run_eval, run_prepare, run_synth, run_train, CorpusKind, EvalArgs, EvalMode, PrepareArgs,
    SynthArgs, TrainArgs, TrainKind,
};
use cliptts_cli::CmdError;

/// Contrastive text/mel pretraining and non-autoregressive TTS.
#[derive(Parser)]
#[command(name = "cliptts", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mel/duration cache (and toy corpus audio) for training.
    Prepare {
        /// Corpus kind to ingest.
        #[arg(long, value_enum)]
        corpus: CorpusKind,
        /// Corpus root (metadata.csv + wavs/); required for ljspeech.
        #[arg(long)]
        root: Option<PathBuf>,
        /// Output directory for metadata, inventory and cache.
        #[arg(long)]
        out: PathBuf,
        /// Config file (key = value lines).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. --set toy.seed=3 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Contrastive pretraining of the dual encoders.
    TrainClip {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory for checkpoints, metrics and the config echo.
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the configured step count.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// TTS fine-tuning (optionally from a pretraining checkpoint).
    TrainTts {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Pretraining checkpoint to extract the text encoder from.
        #[arg(long)]
        init_from: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Synthesize speech from text with a TTS checkpoint.
    Synth {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        text: String,
        /// Output wav path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the intermediate mel as a container file.
        #[arg(long)]
        dump_mel: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Objective evaluation of a checkpoint against a prepared corpus.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Prepared corpus directory (from `prepare`).
        #[arg(long)]
        cache: PathBuf,
        #[arg(long, value_enum)]
        mode: EvalMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CmdError> {
    match cli.command {
        Command::Prepare {
            corpus,
            root,
            out,
            config,
            set,
        } => {
            let summary = run_prepare(&PrepareArgs {
                corpus,
                root,
                out,
                config,
                set,
            })?;
            println!(
                "prepared {} utterances, {} mel frames total ({} skipped)",
                summary.utterances, summary.total_frames, summary.skipped
            );
            Ok(())
        }
        Command::TrainClip {
            config,
            out_dir,
            steps,
            set,
        } => {
            let summary = run_train(&TrainArgs {
                kind: TrainKind::Clip,
                config,
                out_dir,
                steps,
                set,
            })?;
            print_train(&summary);
            Ok(())
        }
        Command::TrainTts {
            config,
            out_dir,
            init_from,
            steps,
            set,
        } => {
            let summary = run_train(&TrainArgs {
                kind: TrainKind::Tts { init_from },
                config,
                out_dir,
                steps,
                set,
            })?;
            print_train(&summary);
            Ok(())
        }
        Command::Synth {
            ckpt,
            text,
            out,
            dump_mel,
            config,
            set,
        } => {
            let summary = run_synth(&SynthArgs {
                ckpt,
                text,
                out,
                dump_mel,
                config,
                set,
            })?;
            for (stage, secs) in &summary.timings {
                println!("{stage}: {:.3}s", secs);
            }
            println!(
                "wrote {} ({} samples, {} mel frames)",
                summary.wav_path.display(),
                summary.samples,
                summary.mel_frames
            );
            Ok(())
        }
        Command::Eval {
            ckpt,
            cache,
            mode,
            config,
            set,
        } => {
            let summary = run_eval(&EvalArgs {
                ckpt,
                cache,
                mode,
                config,
                set,
            })?;
            for (key, value) in &summary.rows {
                println!("{key} = {value:.6}");
            }
            println!("evaluated {} utterances", summary.utterances);
            Ok(())
        }
    }
}

fn print_train(summary: &cliptts_cli::commands::TrainSummary) {
    if let Some(from) = summary.resumed_from {
        println!("resumed at step {from}");
    }
    match summary.final_loss {
        Some(loss) => println!(
            "ran {} steps to step {}, final loss {:.6}; checkpoint {}",
            summary.steps_run,
            summary.final_step,
            loss,
            summary.final_checkpoint.display()
        ),
        None => println!(
            "wrote checkpoint {} at step {}",
            summary.final_checkpoint.display(),
            summary.final_step
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 4,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
