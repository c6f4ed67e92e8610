use std::path::Path;

use crate::error::{Error, Result};

/// Mono waveform, samples in [-1, 1].
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

/// Read a RIFF/WAVE file. Only 16-bit PCM is accepted; multi-channel audio
/// is averaged down to mono. Sample `-32768` maps to exactly `-1.0`.
pub fn wav_read(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path.as_ref()).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "expected 16-bit PCM, got {:?} at {} bits",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat("zero channels".into()));
    }
    let raw: Vec<i16> = reader
        .samples::<i16>()
        .collect::<std::result::Result<_, _>>()
        .map_err(map_hound)?;
    if raw.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let scale = 1.0 / 32768.0;
    let samples: Vec<f32> = raw
        .chunks(channels)
        .map(|frame| {
            let sum: f32 = frame.iter().map(|&v| v as f32).sum();
            sum / frame.len() as f32 * scale
        })
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate))
}

/// Write a mono 16-bit PCM file. Values are clamped to [-1, 1] and rounded,
/// so the write/read round trip errs by at most one quantization step.
pub fn wav_write(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec).map_err(map_hound)?;
    for &s in &wave.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round();
        writer
            .write_sample(v.clamp(-32768.0, 32767.0) as i16)
            .map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)?;
    Ok(())
}
