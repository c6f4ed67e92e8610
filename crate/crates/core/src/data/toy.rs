use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::AudioConfig;
use crate::data::Utterance;
use crate::dsp::{mel_filterbank, mel_spectrogram, MelFilterbank, Waveform};
use crate::error::{Error, Result};
use crate::text::{PhonemeInventory, PhonemeSequence};

/// Synthetic phoneme-tone corpus: each phoneme is a pure sine at its own
/// frequency, so ground-truth durations are exact by construction and a
/// spectral oracle can read the phoneme string back out of any mel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyCorpusSpec {
    pub n_phonemes: usize,
    pub min_phonemes: usize,
    pub max_phonemes: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        ToyCorpusSpec {
            n_phonemes: 8,
            min_phonemes: 3,
            max_phonemes: 10,
            min_duration: 2,
            max_duration: 6,
            f_lo: 200.0,
            f_hi: 1800.0,
            seed: 1,
        }
    }
}

impl ToyCorpusSpec {
    pub fn validate(&self, audio: &AudioConfig) -> Result<()> {
        if self.n_phonemes == 0 || self.n_phonemes > 26 {
            return Err(Error::InvalidRange(format!(
                "toy corpus supports 1..=26 phonemes, got {}",
                self.n_phonemes
            )));
        }
        if self.min_phonemes == 0 || self.min_phonemes > self.max_phonemes {
            return Err(Error::InvalidRange("bad utterance length range".into()));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return Err(Error::InvalidRange("bad duration range".into()));
        }
        if self.f_lo <= 0.0 || self.f_lo > self.f_hi || self.f_hi > audio.f_max {
            return Err(Error::InvalidRange(format!(
                "tone range [{}, {}] must sit inside (0, {}]",
                self.f_lo, self.f_hi, audio.f_max
            )));
        }
        Ok(())
    }

    /// Injective phoneme-to-frequency map, evenly spread over the range.
    pub fn frequency(&self, phoneme: usize) -> f64 {
        if self.n_phonemes == 1 {
            self.f_lo
        } else {
            self.f_lo + (self.f_hi - self.f_lo) * phoneme as f64 / (self.n_phonemes - 1) as f64
        }
    }

    /// Single-letter symbols A, B, C, ... for the K phonemes.
    pub fn symbols(&self) -> Vec<String> {
        (0..self.n_phonemes)
            .map(|i| char::from(b'A' + i as u8).to_string())
            .collect()
    }

    pub fn inventory(&self) -> Result<PhonemeInventory> {
        PhonemeInventory::from_symbols(self.symbols())
    }
}

/// A generated corpus: utterances with exact durations, their waveforms,
/// the inventory, and the filterbank used for extraction.
pub struct ToyCorpus {
    pub spec: ToyCorpusSpec,
    pub inventory: PhonemeInventory,
    pub utterances: Vec<Utterance>,
    pub waves: Vec<Waveform>,
    pub filterbank: MelFilterbank,
}

impl ToyCorpus {
    /// Reference mel band for each toy phoneme (0-based), measured from a
    /// long pure tone rather than assumed from filter centres.
    pub fn reference_bands(&self, audio: &AudioConfig) -> Result<Vec<usize>> {
        (0..self.spec.n_phonemes)
            .map(|p| {
                let freq = self.spec.frequency(p);
                let n = audio.stft.win_length + audio.stft.hop_length * 8;
                let wave = tone(freq, n, audio.sample_rate);
                let mel = mel_spectrogram(&wave, &audio.stft, &self.filterbank)?;
                let mean = mel.mean_frame(0, mel.frames);
                Ok(argmax(&mean))
            })
            .collect()
    }
}

fn tone(freq: f64, n: usize, sample_rate: u32) -> Waveform {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    let samples = (0..n).map(|i| (0.6 * (w * i as f64).sin()) as f32).collect();
    Waveform::new(samples, sample_rate)
}

pub(crate) fn argmax(values: &[f32]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Generate `n_utterances` tone sequences. Segment boundaries are offset by
/// `(win - hop) / 2` samples so that every analysis window's centre falls
/// inside its own phoneme's segment; with the trailing `win - hop` pad the
/// mel frame count then equals the duration sum exactly.
pub fn gen_toy_corpus(
    spec: &ToyCorpusSpec,
    audio: &AudioConfig,
    n_utterances: usize,
) -> Result<ToyCorpus> {
    spec.validate(audio)?;
    audio.validate()?;
    if n_utterances == 0 {
        return Err(Error::InvalidRange("need at least one utterance".into()));
    }
    let inventory = spec.inventory()?;
    let filterbank = mel_filterbank(
        audio.sample_rate,
        &audio.stft,
        80,
        audio.f_min,
        audio.f_max,
    )?;
    let hop = audio.stft.hop_length;
    let win = audio.stft.win_length;
    let offset = (win - hop) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut utterances = Vec::with_capacity(n_utterances);
    let mut waves = Vec::with_capacity(n_utterances);

    for u in 0..n_utterances {
        let len = rng.gen_range(spec.min_phonemes..=spec.max_phonemes);
        let phonemes: Vec<usize> = (0..len).map(|_| rng.gen_range(0..spec.n_phonemes)).collect();
        let durations: Vec<usize> = (0..len)
            .map(|_| rng.gen_range(spec.min_duration..=spec.max_duration))
            .collect();
        let total_frames: usize = durations.iter().sum();
        let n_samples = total_frames * hop + (win - hop);

        // Segment boundaries in samples, shifted by the centring offset.
        let mut boundaries = Vec::with_capacity(len + 1);
        let mut acc = offset;
        boundaries.push(acc);
        for &d in &durations {
            acc += d * hop;
            boundaries.push(acc);
        }

        // Continuous-phase tone sequence: the frequency switches per
        // segment but the phase never jumps.
        let mut samples = Vec::with_capacity(n_samples);
        let mut phase = 0.0f64;
        let mut seg = 0usize;
        for s in 0..n_samples {
            while seg + 1 < len && s >= boundaries[seg + 1] {
                seg += 1;
            }
            let freq = spec.frequency(phonemes[seg]);
            phase += 2.0 * std::f64::consts::PI * freq / audio.sample_rate as f64;
            samples.push((0.6 * phase.sin()) as f32);
        }
        let wave = Waveform::new(samples, audio.sample_rate);

        let mel = mel_spectrogram(&wave, &audio.stft, &filterbank)?;
        debug_assert_eq!(mel.frames, total_frames);

        let text: String = phonemes
            .iter()
            .map(|&p| char::from(b'A' + p as u8))
            .collect();
        let ids: Vec<usize> = phonemes
            .iter()
            .map(|&p| inventory.id(&char::from(b'A' + p as u8).to_string()).unwrap())
            .collect();
        let seq = PhonemeSequence::new(ids, text)?.with_durations(durations)?;
        utterances.push(Utterance::new(format!("toy-{u:04}"), seq, mel)?);
        waves.push(wave);
    }

    Ok(ToyCorpus {
        spec: *spec,
        inventory,
        utterances,
        waves,
        filterbank,
    })
}
