use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cliptts::config::AudioConfig;
use cliptts::data::{gen_toy_corpus, ToyCorpusSpec};
use cliptts::dsp::{
    griffin_lim, mel_filterbank, mel_spectrogram, mel_to_linear, stft, Waveform,
};

fn tone(freq: f32, n: usize, sr: u32) -> Waveform {
    let samples = (0..n)
        .map(|i| (2.0 * std::f32::consts::PI * freq * i as f32 / sr as f32).sin() * 0.6)
        .collect();
    Waveform::new(samples, sr)
}

fn dsp(c: &mut Criterion) {
    let audio = AudioConfig::default();
    let fb = mel_filterbank(audio.sample_rate, &audio.stft, 80, audio.f_min, audio.f_max).unwrap();
    // One second of audio.
    let wave = tone(440.0, 22050, 22050);

    c.bench_function("stft_1s", |b| {
        b.iter(|| black_box(stft(&wave, &audio.stft).unwrap()))
    });
    c.bench_function("mel_spectrogram_1s", |b| {
        b.iter(|| black_box(mel_spectrogram(&wave, &audio.stft, &fb).unwrap()))
    });

    let mel = mel_spectrogram(&wave, &audio.stft, &fb).unwrap();
    c.bench_function("mel_to_linear_1s", |b| {
        b.iter(|| black_box(mel_to_linear(&mel, &fb).unwrap()))
    });

    let linear = mel_to_linear(&mel, &fb).unwrap();
    c.bench_function("griffin_lim_30it_1s", |b| {
        b.iter(|| black_box(griffin_lim(&linear, &audio.stft, audio.sample_rate, 30, 7).unwrap()))
    });
}

fn corpus(c: &mut Criterion) {
    let audio = AudioConfig::default();
    let spec = ToyCorpusSpec::default();
    c.bench_function("gen_toy_corpus_16", |b| {
        b.iter(|| black_box(gen_toy_corpus(&spec, &audio, 16).unwrap()))
    });
}

criterion_group!(benches, dsp, corpus);
criterion_main!(benches);
