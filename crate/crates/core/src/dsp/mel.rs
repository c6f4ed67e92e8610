use crate::dsp::{Spectrogram, StftConfig, Waveform, MEL_FLOOR};
use crate::error::{Error, Result};
use crate::tensor::Element;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank with centres uniform on the mel scale and
/// peak-1 rows (no area normalization). The Moore-Penrose pseudo-inverse is
/// precomputed for spectrogram reconstruction.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `[n_mels, n_bins]` row-major, all entries >= 0.
    pub weights: Vec<f32>,
    /// `[n_mels, n_bins]` row-major transpose of the pseudo-inverse, so that
    /// `linear = mel . pinv_t`.
    pinv_t: Vec<f32>,
    pub n_mels: usize,
    pub n_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Triangle centre frequencies in Hz.
    pub centers: Vec<f64>,
}

/// Log-amplitude mel spectrogram, row-major `[frames, n_mels]`. Entries are
/// natural logs floored at `ln(1e-5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f32>,
    pub frames: usize,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn new(data: Vec<f32>, frames: usize, n_mels: usize) -> Result<Self> {
        if frames == 0 || data.len() != frames * n_mels {
            return Err(Error::InvalidShape(format!(
                "mel spectrogram of {} values cannot be {frames} x {n_mels}",
                data.len()
            )));
        }
        Ok(MelSpectrogram {
            data,
            frames,
            n_mels,
        })
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Rows `[start, end)` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, end: usize) -> MelSpectrogram {
        assert!(start < end && end <= self.frames);
        MelSpectrogram {
            data: self.data[start * self.n_mels..end * self.n_mels].to_vec(),
            frames: end - start,
            n_mels: self.n_mels,
        }
    }

    /// Mean over a frame range, used by the segment spectral oracle.
    pub fn mean_frame(&self, start: usize, end: usize) -> Vec<f32> {
        assert!(start < end && end <= self.frames);
        let mut mean = vec![0.0f32; self.n_mels];
        for t in start..end {
            for (m, &v) in mean.iter_mut().zip(self.frame(t)) {
                *m += v;
            }
        }
        let inv = 1.0 / (end - start) as f32;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }
}

/// Build the triangular filterbank for `n_mels` bands over `[f_min, f_max]`.
pub fn mel_filterbank(
    sample_rate: u32,
    cfg: &StftConfig,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    cfg.validate()?;
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 <= f_min && f_min < f_max && f_max <= nyquist) {
        return Err(Error::InvalidRange(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
        )));
    }
    if n_mels == 0 {
        return Err(Error::InvalidRange("n_mels must be positive".into()));
    }
    let n_bins = cfg.n_bins();
    let mel_lo = hz_to_mel(f_min);
    let mel_hi = hz_to_mel(f_max);
    // n_mels + 2 boundary points; triangle i spans points [i, i+2] and
    // peaks at point i+1.
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
    let mut weights = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= mid {
                (f - lo) / (mid - lo)
            } else {
                (hi - f) / (hi - mid)
            };
            weights[m * n_bins + k] = w as f32;
        }
        if weights[m * n_bins..(m + 1) * n_bins].iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidRange(format!(
                "mel band {m} covers no FFT bin; reduce n_mels or widen the range"
            )));
        }
    }

    // Moore-Penrose pseudo-inverse in f64 for the reconstruction path.
    let w64 = nalgebra::DMatrix::<f64>::from_fn(n_mels, n_bins, |r, c| {
        weights[r * n_bins + c] as f64
    });
    let pinv = w64
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::InvalidRange(format!("filterbank pseudo-inverse failed: {e}")))?;
    // pinv is [n_bins, n_mels]; store its transpose row-major.
    let mut pinv_t = vec![0.0f32; n_mels * n_bins];
    for m in 0..n_mels {
        for k in 0..n_bins {
            pinv_t[m * n_bins + k] = pinv[(k, m)] as f32;
        }
    }

    Ok(MelFilterbank {
        weights,
        pinv_t,
        n_mels,
        n_bins,
        f_min,
        f_max,
        centers: points[1..=n_mels].to_vec(),
    })
}

impl MelFilterbank {
    /// Apply the filterbank to one magnitude frame.
    pub fn apply_frame(&self, magnitude: &[f32]) -> Vec<f32> {
        assert_eq!(magnitude.len(), self.n_bins);
        let mut out = vec![0.0f32; self.n_mels];
        f32::gemm(
            self.n_mels,
            self.n_bins,
            1,
            1.0,
            &self.weights,
            false,
            magnitude,
            false,
            0.0,
            &mut out,
        );
        out
    }

    /// Mel band whose response to a pure tone at `freq` is strongest.
    pub fn band_for_frequency(&self, freq: f64) -> usize {
        self.centers
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - freq)
                    .abs()
                    .partial_cmp(&(b.1 - freq).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .unwrap()
    }
}

/// `log(max(fb . |STFT|, 1e-5))` per frame; output is `[T, n_mels]`.
pub fn mel_spectrogram(
    wave: &Waveform,
    cfg: &StftConfig,
    fb: &MelFilterbank,
) -> Result<MelSpectrogram> {
    let spec = super::stft(wave, cfg)?;
    linear_to_mel(&spec, fb)
}

/// Project an existing magnitude spectrogram onto the mel scale.
pub fn linear_to_mel(spec: &Spectrogram, fb: &MelFilterbank) -> Result<MelSpectrogram> {
    if spec.bins != fb.n_bins {
        return Err(Error::Shape(format!(
            "spectrogram has {} bins, filterbank wants {}",
            spec.bins, fb.n_bins
        )));
    }
    let t = spec.frames;
    // mel = magnitude . weights^T
    let mut mel = vec![0.0f32; t * fb.n_mels];
    f32::gemm(
        t,
        fb.n_bins,
        fb.n_mels,
        1.0,
        &spec.data,
        false,
        &fb.weights,
        true,
        0.0,
        &mut mel,
    );
    for v in mel.iter_mut() {
        *v = v.max(MEL_FLOOR).ln();
    }
    MelSpectrogram::new(mel, t, fb.n_mels)
}

/// Invert the mel projection: `exp(mel) . pinv(weights)`, clamped at zero.
pub fn mel_to_linear(mel: &MelSpectrogram, fb: &MelFilterbank) -> Result<Spectrogram> {
    if mel.n_mels != fb.n_mels {
        return Err(Error::Shape(format!(
            "mel has {} bands, filterbank wants {}",
            mel.n_mels, fb.n_mels
        )));
    }
    let t = mel.frames;
    let amplitudes: Vec<f32> = mel.data.iter().map(|&v| v.exp()).collect();
    let mut linear = vec![0.0f32; t * fb.n_bins];
    f32::gemm(
        t,
        fb.n_mels,
        fb.n_bins,
        1.0,
        &amplitudes,
        false,
        &fb.pinv_t,
        false,
        0.0,
        &mut linear,
    );
    for v in linear.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(Spectrogram::new(linear, t, fb.n_bins))
}
