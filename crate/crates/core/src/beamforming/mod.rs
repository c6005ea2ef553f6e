//! Mask-driven spatial statistics and closed-form beamformers (MVDR, wMPDR, WPD, SDW-MWF,
//! rank-1 MWF, multi-frame multichannel Wiener filter).
//!
//! All per-bin work is independent; weights are computed in parallel over frequency.

mod mask;
mod psd;
mod steering;
mod weights;


pub use mask::{ideal_ratio_mask, TfMask};
pub use psd::{
    diag_load, estimate_power_weights, estimate_psd, stacked_observation, weighted_covariance,
    PowerWeights, PsdMatrix,
};
pub use steering::{steering_vector, SteeringVectors};
pub use weights::{
    apply_beamformer, compute_weights, BeamformerConfig, BeamformerInputs, BeamformerVariant,
    BeamformerWeights,
};

use crate::error::Result;
use crate::stft::ComplexSpectrogram;

/// Runs a full mask-driven beamformer on a multichannel mixture spectrogram.
///
/// `target` is only read by mfmcwf, which regresses onto it.
pub fn beamform(
    cfg: &BeamformerConfig,
    mixture: &ComplexSpectrogram,
    speech_mask: &TfMask,
    noise_mask: &TfMask,
    target: Option<&ComplexSpectrogram>,
) -> Result<ComplexSpectrogram> {
    let variant = cfg.variant;
    let phi_s = estimate_psd(mixture, speech_mask)?;
    let phi_n = match variant {
        BeamformerVariant::MvdrRtf
        | BeamformerVariant::MvdrSouden
        | BeamformerVariant::SdwMwf
        | BeamformerVariant::R1Mwf => Some(estimate_psd(mixture, noise_mask)?),
        _ => None,
    };
    let power = if variant.is_weighted() {
        Some(estimate_power_weights(mixture, speech_mask, cfg.mask_floor, cfg.power_floor)?)
    } else {
        None
    };
    let inputs = BeamformerInputs {
        target_psd: Some(&phi_s),
        noise_psd: phi_n.as_ref(),
        steering: None,
        observation: Some(mixture),
        power: power.as_ref(),
        target,
    };
    let weights = compute_weights(cfg, &inputs)?;
    apply_beamformer(&weights, mixture)
}
