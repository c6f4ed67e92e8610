//! Corpus tooling: the synthetic phoneme-tone corpus with exact durations,
//! LJSpeech-layout ingestion, duration surrogates for real data, and padded
//! batch assembly.

mod batch;
mod cache;
mod ljspeech;
mod toy;

pub use batch::{make_batches, uniform_duration_targets, ClipBatch, Utterance};
pub use cache::{read_corpus_cache, verify_cache_covers, write_corpus_cache};
pub use ljspeech::{load_ljspeech, CorpusManifest, ManifestEntry};
pub use toy::{gen_toy_corpus, ToyCorpus, ToyCorpusSpec};
