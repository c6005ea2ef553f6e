//! Determined blind source separation.

mod auxiva;
mod projection;

pub use auxiva::{
    auxiva_iss, separate_waveform, AuxIvaConfig, AuxIvaSeparator, DemixingState, BSS_HOP, BSS_N_FFT,
    MIN_ABS_DET,
};
pub use projection::{projection_back, projection_scales};
