//! Multichannel speech separation and enhancement.
//!
//! The crate covers the classical signal-processing side of a separation toolkit: STFT
//! analysis/synthesis, mask-driven beamformers, AuxIVA-ISS blind source separation, a
//! criterion/wrapper loss framework (PIT, MixIT, multi-task weighting), intelligibility and
//! SNR metrics, a shoebox room simulator for spatialized corpora, and the staged batch
//! pipeline that ties them together.

pub mod beamforming;
pub mod bss;
pub mod criteria;
pub mod error;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod spatializer;
pub mod stft;
pub mod synth;
pub mod wav;

mod dsp;

pub use error::{Error, Result};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, Waveform, WindowKind};
