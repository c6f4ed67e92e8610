use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::dsp::Waveform;

/// Short-time Fourier analysis parameters. The window is always Hann and
/// frames are not centred: `T = 1 + floor((len - win) / hop)` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_length <= self.win_length && self.win_length <= self.n_fft) {
            return Err(Error::InvalidShape(format!(
                "need hop <= win <= n_fft, got {}/{}/{}",
                self.hop_length, self.win_length, self.n_fft
            )));
        }
        if self.hop_length == 0 || !self.n_fft.is_power_of_two() {
            return Err(Error::InvalidShape(format!(
                "n_fft must be a power of two and hop nonzero, got {}/{}",
                self.n_fft, self.hop_length
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Samples produced by inverting `frames` spectral frames.
    pub fn output_len(&self, frames: usize) -> usize {
        (frames - 1) * self.hop_length + self.win_length
    }
}

/// Magnitude (or any nonnegative) spectrogram, row-major `[frames, bins]`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub data: Vec<f32>,
    pub frames: usize,
    pub bins: usize,
}

impl Spectrogram {
    pub fn new(data: Vec<f32>, frames: usize, bins: usize) -> Self {
        assert_eq!(data.len(), frames * bins);
        Spectrogram { data, frames, bins }
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

/// `T = 1 + floor((len - win) / hop)`, or None when the input is too short.
pub fn frame_count(len: usize, cfg: &StftConfig) -> Option<usize> {
    if len < cfg.win_length {
        None
    } else {
        Some(1 + (len - cfg.win_length) / cfg.hop_length)
    }
}

fn hann(win: usize) -> Vec<f32> {
    (0..win)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f32::consts::PI * n as f32 / win as f32).cos()))
        .collect()
}

/// Complex STFT, `[frames, n_fft/2 + 1]` row-major.
pub fn stft_complex(wave: &Waveform, cfg: &StftConfig) -> Result<Vec<Complex<f32>>> {
    cfg.validate()?;
    let len = wave.samples.len();
    let frames = frame_count(len, cfg).ok_or(Error::InputTooShort {
        len,
        win: cfg.win_length,
    })?;
    let window = hann(cfg.win_length);
    let bins = cfg.n_bins();
    let fft = FftPlanner::<f32>::new().plan_fft_forward(cfg.n_fft);
    let mut out = vec![Complex::new(0.0, 0.0); frames * bins];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    for t in 0..frames {
        let start = t * cfg.hop_length;
        for (i, b) in buf.iter_mut().enumerate() {
            let v = if i < cfg.win_length {
                wave.samples[start + i] * window[i]
            } else {
                0.0
            };
            *b = Complex::new(v, 0.0);
        }
        fft.process(&mut buf);
        out[t * bins..(t + 1) * bins].copy_from_slice(&buf[..bins]);
    }
    Ok(out)
}

/// Hann-windowed magnitude spectrogram.
pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    let complex = stft_complex(wave, cfg)?;
    let bins = cfg.n_bins();
    let frames = complex.len() / bins;
    let data = complex.iter().map(|c| c.norm()).collect();
    Ok(Spectrogram::new(data, frames, bins))
}

/// Weighted overlap-add inverse of a complex half-spectrum sequence.
/// Output length is `(frames - 1) * hop + win`.
pub fn istft(spec: &[Complex<f32>], frames: usize, cfg: &StftConfig) -> Result<Vec<f32>> {
    cfg.validate()?;
    let bins = cfg.n_bins();
    if spec.len() != frames * bins || frames == 0 {
        return Err(Error::Shape(format!(
            "istft: {} complex values for {frames} frames of {bins} bins",
            spec.len()
        )));
    }
    let window = hann(cfg.win_length);
    let n = cfg.n_fft;
    let inv_fft = FftPlanner::<f32>::new().plan_fft_inverse(n);
    let out_len = cfg.output_len(frames);
    let mut out = vec![0.0f32; out_len];
    let mut den = vec![0.0f32; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for t in 0..frames {
        let half = &spec[t * bins..(t + 1) * bins];
        buf[..bins].copy_from_slice(half);
        // Hermitian symmetry for a real signal.
        for k in 1..n / 2 {
            buf[n - k] = half[k].conj();
        }
        inv_fft.process(&mut buf);
        let start = t * cfg.hop_length;
        let scale = 1.0 / n as f32;
        for i in 0..cfg.win_length {
            let w = window[i];
            out[start + i] += buf[i].re * scale * w;
            den[start + i] += w * w;
        }
    }
    for (o, d) in out.iter_mut().zip(&den) {
        *o /= d.max(1e-8);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f32, n: usize, sr: u32) -> Waveform {
        let samples = (0..n)
            .map(|i| (2.0 * std::f32::consts::PI * freq * i as f32 / sr as f32).sin() * 0.7)
            .collect();
        Waveform::new(samples, sr)
    }

    #[test]
    fn single_window_gives_one_frame() {
        let cfg = StftConfig::default();
        let spec = stft(&sine(440.0, 1024, 22050), &cfg).unwrap();
        assert_eq!(spec.frames, 1);
        assert_eq!(spec.bins, 513);
    }

    #[test]
    fn too_short_input_is_an_error() {
        let cfg = StftConfig::default();
        assert!(matches!(
            stft(&sine(440.0, 1000, 22050), &cfg),
            Err(Error::InputTooShort { len: 1000, win: 1024 })
        ));
    }

    #[test]
    fn zero_input_gives_zero_magnitudes() {
        let cfg = StftConfig::default();
        let spec = stft(&Waveform::new(vec![0.0; 4096], 22050), &cfg).unwrap();
        assert!(spec.data.iter().all(|&v| v == 0.0));
    }

    // DFT oracle: a sine placed exactly on bin 80 peaks there in every frame.
    #[test]
    fn bin_aligned_sine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let sr = 22050;
        let freq = 80.0 * sr as f32 / cfg.n_fft as f32;
        let spec = stft(&sine(freq, 8192, sr), &cfg).unwrap();
        for t in 0..spec.frames {
            let frame = spec.frame(t);
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, 80, "frame {t}");
        }
    }

    #[test]
    fn istft_reconstructs_interior_samples() {
        let cfg = StftConfig::default();
        let wave = sine(523.25, 4096, 22050);
        let frames = frame_count(wave.len(), &cfg).unwrap();
        let spec = stft_complex(&wave, &cfg).unwrap();
        let back = istft(&spec, frames, &cfg).unwrap();
        assert_eq!(back.len(), cfg.output_len(frames));
        // Interior samples (full window coverage) reconstruct closely.
        for i in cfg.win_length..back.len() - cfg.win_length {
            assert!(
                (back[i] - wave.samples[i]).abs() < 1e-3,
                "sample {i}: {} vs {}",
                back[i],
                wave.samples[i]
            );
        }
    }

    proptest! {
        // Frame-count arithmetic is exact for every valid input length.
        #[test]
        fn frame_count_formula(len in 1024usize..20000) {
            let cfg = StftConfig::default();
            let wave = Waveform::new(vec![0.01; len], 22050);
            let spec = stft(&wave, &cfg).unwrap();
            prop_assert_eq!(spec.frames, 1 + (len - 1024) / 256);
        }
    }
}
