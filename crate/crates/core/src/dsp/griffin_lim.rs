use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;

use crate::dsp::{istft, stft_complex, Spectrogram, StftConfig, Waveform};
use crate::error::Result;

/// Griffin-Lim phase reconstruction with per-iteration spectral-convergence
/// trace `||STFT(y)| - S|_F / |S|_F`.
pub fn griffin_lim_with_trace(
    spec: &Spectrogram,
    cfg: &StftConfig,
    sample_rate: u32,
    iters: usize,
    seed: u64,
) -> Result<(Waveform, Vec<f64>)> {
    cfg.validate()?;
    let iters = iters.max(1);
    let bins = spec.bins;
    let frames = spec.frames;
    let norm_s: f64 = spec
        .data
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();

    // Seeded random initial phase.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phased: Vec<Complex<f32>> = spec
        .data
        .iter()
        .map(|&mag| {
            let phi: f32 = rng.gen_range(-std::f32::consts::PI..std::f32::consts::PI);
            Complex::from_polar(mag, phi)
        })
        .collect();

    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        let samples = istft(&phased, frames, cfg)?;
        let wave = Waveform::new(samples, sample_rate);
        let analyzed = stft_complex(&wave, cfg)?;
        debug_assert_eq!(analyzed.len(), frames * bins);

        let mut err_sq = 0.0f64;
        for (p, a) in phased.iter_mut().zip(&analyzed) {
            let mag_a = a.norm();
            let target = p.norm();
            let d = (mag_a - target) as f64;
            err_sq += d * d;
            // Keep the estimated phase, re-impose the target magnitude.
            *p = if mag_a > 0.0 {
                a * (target / mag_a)
            } else {
                Complex::new(target, 0.0)
            };
        }
        trace.push(if norm_s > 0.0 {
            err_sq.sqrt() / norm_s
        } else {
            0.0
        });
    }

    let samples = istft(&phased, frames, cfg)?;
    let mut wave = Waveform::new(samples, sample_rate);
    let peak = wave.samples.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if peak > 1e-8 {
        let scale = 0.95 / peak;
        wave.samples.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((wave, trace))
}

/// Iterative phase estimation from a magnitude spectrogram. Deterministic
/// given `(spec, iters, seed)`; output is peak-normalized to 0.95.
pub fn griffin_lim(
    spec: &Spectrogram,
    cfg: &StftConfig,
    sample_rate: u32,
    iters: usize,
    seed: u64,
) -> Result<Waveform> {
    griffin_lim_with_trace(spec, cfg, sample_rate, iters, seed).map(|(w, _)| w)
}
