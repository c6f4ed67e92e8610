//! Dual-encoder contrastive pretraining: a text encoder (phoneme embedding,
//! FFT blocks, duration predictor, length regulation) and a mel encoder
//! (80-to-width input projection, FFT blocks) pooled to unit-norm utterance
//! embeddings, scored by a cosine similarity matrix whose target is the
//! identity.

mod encoders;
mod objective;
mod trainer;

pub use encoders::{stack_bounds, BatchTextEncoding, MelEncoder, TextEncoder, TextEncoding};
pub use objective::{
    retrieval_top1, similarity_matrix, similarity_stats, ClipLossKind, ClipObjective,
    SimilarityStats,
};
pub use trainer::{
    retrieval_eval, train_clip_step, ClipMetrics, RetrievalAccuracy, SpeechClipModel, TrainerState,
};
