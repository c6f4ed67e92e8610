//! The synthesis system: the pretrained text encoder feeding a masked
//! (causal) FFT decoder with a width-80 output projection, trained with
//! MAE, and a Griffin-Lim vocoder behind the spectrogram-inversion
//! interface.

mod decoder;
mod model;
mod synth;

pub use decoder::MelDecoder;
pub use model::{
    eval_tts, load_pretrained_text_encoder, train_tts_step, TtsEval, TtsMetrics, TtsModel,
};
pub use synth::{synthesize, SynthesisOutput};
