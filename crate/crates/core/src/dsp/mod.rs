//! Acoustic front and back end: WAV I/O, short-time Fourier analysis, mel
//! projection and Griffin-Lim phase reconstruction.
//!
//! Everything here is pure given its config; filterbanks are built once and
//! shared read-only.

mod griffin_lim;
mod mel;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, griffin_lim_with_trace};
pub use mel::{mel_filterbank, mel_spectrogram, mel_to_linear, MelFilterbank, MelSpectrogram};
pub use stft::{frame_count, istft, stft, stft_complex, Spectrogram, StftConfig};
pub use wav::{wav_read, wav_write, Waveform};

/// Amplitude floor applied before the log in mel extraction.
pub const MEL_FLOOR: f32 = 1e-5;

/// Natural log of [`MEL_FLOOR`]; the value silence maps to.
pub fn log_floor() -> f32 {
    MEL_FLOOR.ln()
}
