mod common;
mod eval;
mod prepare;
mod synth;
mod train;

pub use common::{find_latest_checkpoint, parse_metadata};
pub use eval::{run_eval, EvalArgs, EvalMode, EvalSummary};
pub use prepare::{run_prepare, CorpusKind, PrepareArgs, PrepareSummary};
pub use synth::{run_synth, SynthArgs, SynthSummary};
pub use train::{run_train, TrainArgs, TrainKind, TrainSummary};
