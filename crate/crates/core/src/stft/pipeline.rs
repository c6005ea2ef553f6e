//! The encoder / separator / decoder composition shared by every enhancement path.

use ndarray::{Array2, Axis};

use super::{istft, stft, ComplexSpectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};

pub trait Encoder {
    fn config(&self) -> &StftConfig;
    fn encode(&self, wave: &Waveform) -> Result<ComplexSpectrogram>;
}

pub trait Decoder {
    fn config(&self) -> &StftConfig;
    fn decode(&self, spec: &ComplexSpectrogram, out_length: usize) -> Result<Waveform>;
}

/// Maps one mixture representation to `num_sources()` outputs of the same frame/bin shape.
pub trait Separator {
    fn num_sources(&self) -> usize;
    fn separate(&self, mixture: &ComplexSpectrogram) -> Result<Vec<ComplexSpectrogram>>;
}

#[derive(Debug, Clone, Default)]
pub struct StftEncoder(pub StftConfig);

#[derive(Debug, Clone, Default)]
pub struct StftDecoder(pub StftConfig);

impl Encoder for StftEncoder {
    fn config(&self) -> &StftConfig {
        &self.0
    }

    fn encode(&self, wave: &Waveform) -> Result<ComplexSpectrogram> {
        stft(wave, &self.0)
    }
}

impl Decoder for StftDecoder {
    fn config(&self) -> &StftConfig {
        &self.0
    }

    fn decode(&self, spec: &ComplexSpectrogram, out_length: usize) -> Result<Waveform> {
        istft(spec, &self.0, out_length)
    }
}

/// Passes the mixture through unchanged as a single source.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentitySeparator;

impl Separator for IdentitySeparator {
    fn num_sources(&self) -> usize {
        1
    }

    fn separate(&self, mixture: &ComplexSpectrogram) -> Result<Vec<ComplexSpectrogram>> {
        Ok(vec![mixture.clone()])
    }
}

/// Applies one real frames x bins mask per source to every channel of the mixture.
#[derive(Debug, Clone)]
pub struct MaskSeparator {
    masks: Vec<Array2<f64>>,
}

impl MaskSeparator {
    pub fn new(masks: Vec<Array2<f64>>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::InvalidArgument("mask separator needs at least one mask".into()));
        }
        Ok(Self { masks })
    }
}

impl Separator for MaskSeparator {
    fn num_sources(&self) -> usize {
        self.masks.len()
    }

    fn separate(&self, mixture: &ComplexSpectrogram) -> Result<Vec<ComplexSpectrogram>> {
        self.masks
            .iter()
            .map(|mask| {
                if mask.dim() != (mixture.frames(), mixture.bins()) {
                    return Err(Error::ShapeMismatch(format!(
                        "mask {:?} vs spectrogram {}x{}",
                        mask.dim(),
                        mixture.frames(),
                        mixture.bins()
                    )));
                }
                let mut out = mixture.clone();
                for mut lane in out.data_mut().axis_iter_mut(Axis(2)) {
                    lane.zip_mut_with(mask, |z, &m| *z *= m);
                }
                Ok(out)
            })
            .collect()
    }
}

/// Encode, separate, decode; every output has the mixture's length.
pub fn run_pipeline<E, S, D>(
    mixture: &Waveform,
    encoder: &E,
    separator: &S,
    decoder: &D,
) -> Result<Vec<Waveform>>
where
    E: Encoder + ?Sized,
    S: Separator + ?Sized,
    D: Decoder + ?Sized,
{
    if encoder.config() != decoder.config() {
        return Err(Error::InvalidArgument(
            "encoder and decoder STFT configs differ".into(),
        ));
    }
    let spec = encoder.encode(mixture)?;
    let outputs = separator.separate(&spec)?;
    if outputs.len() != separator.num_sources() {
        return Err(Error::ShapeMismatch(format!(
            "separator declared {} sources but produced {}",
            separator.num_sources(),
            outputs.len()
        )));
    }
    outputs
        .iter()
        .map(|out| {
            if out.frames() != spec.frames() || out.bins() != spec.bins() {
                return Err(Error::ShapeMismatch(format!(
                    "separator output {}x{} vs input {}x{}",
                    out.frames(),
                    out.bins(),
                    spec.frames(),
                    spec.bins()
                )));
            }
            decoder.decode(out, mixture.len())
        })
        .collect()
}
