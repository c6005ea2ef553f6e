//! WAV input/output: 16-bit PCM or 32-bit float, one to eight channels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::stft::Waveform;

pub const MAX_CHANNELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingInput(format!("{} does not exist", path.display())));
    }
    let mut reader = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "{}: {channels} channels, supported 1..={MAX_CHANNELS}",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        (format, bits) => {
            return Err(Error::InvalidArgument(format!(
                "{}: unsupported sample format {format:?} at {bits} bits",
                path.display()
            )))
        }
    };
    let frames = interleaved.len() / channels;
    let mut out = vec![Vec::with_capacity(frames); channels];
    for frame in interleaved.chunks_exact(channels) {
        for (c, &s) in frame.iter().enumerate() {
            out[c].push(s);
        }
    }
    Waveform::new(out, spec.sample_rate)
}

/// Reads a WAV and rejects it unless it is sampled at `expected` Hz.
pub fn read_wav_at(path: impl AsRef<Path>, expected: u32) -> Result<Waveform> {
    let wave = read_wav(path)?;
    if wave.sample_rate() != expected {
        return Err(Error::SampleRateMismatch {
            expected,
            actual: wave.sample_rate(),
        });
    }
    Ok(wave)
}

pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform, format: WavFormat) -> Result<()> {
    let path = path.as_ref();
    if wave.num_channels() > MAX_CHANNELS {
        return Err(Error::InvalidArgument(format!(
            "cannot write {} channels (max {MAX_CHANNELS})",
            wave.num_channels()
        )));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let spec = hound::WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => hound::SampleFormat::Int,
            WavFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for n in 0..wave.len() {
        for ch in wave.channels() {
            let s = ch[n];
            match format {
                WavFormat::Pcm16 => {
                    let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v).map_err(wav_err(path))?;
                }
                WavFormat::Float32 => writer.write_sample(s as f32).map_err(wav_err(path))?,
            }
        }
    }
    writer.finalize().map_err(wav_err(path))
}
