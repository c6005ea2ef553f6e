use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::psd::{stacked_observation, weighted_covariance};
use super::{steering_vector, PowerWeights, PsdMatrix, SteeringVectors};
use crate::error::{Error, Result};
use crate::linalg::{load_diagonal, principal_eigenpair, solve_escalating, unit_vector, CMatrix, CVector};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformerVariant {
    MvdrRtf,
    MvdrSouden,
    WmpdrRtf,
    WmpdrSouden,
    WpdRtf,
    WpdSouden,
    SdwMwf,
    R1Mwf,
    Mfmcwf,
}

impl BeamformerVariant {
    pub const ALL: [BeamformerVariant; 9] = [
        Self::MvdrRtf,
        Self::MvdrSouden,
        Self::WmpdrRtf,
        Self::WmpdrSouden,
        Self::WpdRtf,
        Self::WpdSouden,
        Self::SdwMwf,
        Self::R1Mwf,
        Self::Mfmcwf,
    ];

    /// Variants whose weights satisfy `w^H d = 1`.
    pub fn is_distortionless(self) -> bool {
        matches!(self, Self::MvdrRtf | Self::WmpdrRtf | Self::WpdRtf)
    }

    pub fn uses_steering(self) -> bool {
        self.is_distortionless()
    }

    /// Variants that whiten with the power-weighted observation covariance.
    pub fn is_weighted(self) -> bool {
        matches!(self, Self::WmpdrRtf | Self::WmpdrSouden | Self::WpdRtf | Self::WpdSouden)
    }

    /// Variants filtering stacked frames.
    pub fn is_multi_frame(self) -> bool {
        matches!(self, Self::WpdRtf | Self::WpdSouden | Self::Mfmcwf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MvdrRtf => "mvdr_rtf",
            Self::MvdrSouden => "mvdr_souden",
            Self::WmpdrRtf => "wmpdr_rtf",
            Self::WmpdrSouden => "wmpdr_souden",
            Self::WpdRtf => "wpd_rtf",
            Self::WpdSouden => "wpd_souden",
            Self::SdwMwf => "sdw_mwf",
            Self::R1Mwf => "r1_mwf",
            Self::Mfmcwf => "mfmcwf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformerConfig {
    pub variant: BeamformerVariant,
    pub ref_channel: usize,
    /// Speech-distortion weight of the Wiener variants.
    pub mu: f64,
    /// Diagonal loading applied to the matrix being inverted.
    pub epsilon: f64,
    pub taps: usize,
    pub delay: usize,
    /// Relative floor on the wMPDR/WPD power weights.
    pub power_floor: f64,
    /// Floor applied to masks used as power sources.
    pub mask_floor: f64,
}

impl Default for BeamformerConfig {
    fn default() -> Self {
        Self {
            variant: BeamformerVariant::MvdrSouden,
            ref_channel: 0,
            mu: 1.0,
            epsilon: 1e-6,
            taps: 5,
            delay: 3,
            power_floor: 1e-8,
            mask_floor: 1e-4,
        }
    }
}

impl BeamformerConfig {
    pub fn new(variant: BeamformerVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.mu >= 0.0) {
            return Err(Error::InvalidArgument("epsilon and mu must be >= 0".into()));
        }
        if self.taps == 0 {
            return Err(Error::InvalidArgument("taps must be >= 1".into()));
        }
        if !(self.power_floor > 0.0) {
            return Err(Error::InvalidArgument("power_floor must be > 0".into()));
        }
        Ok(())
    }

    /// `(taps, delay)` actually used by this variant.
    pub fn frame_layout(&self) -> (usize, usize) {
        if self.variant.is_multi_frame() {
            (self.taps, self.delay)
        } else {
            (1, 0)
        }
    }
}

/// Per-bin filter over `M * K` stacked coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    weights: Vec<CVector>,
    channels: usize,
    taps: usize,
    delay: usize,
    ref_channel: usize,
}

impl BeamformerWeights {
    pub fn new(weights: Vec<CVector>, channels: usize, taps: usize, delay: usize, ref_channel: usize) -> Result<Self> {
        if taps == 0 || channels == 0 {
            return Err(Error::InvalidArgument("channels and taps must be >= 1".into()));
        }
        if weights.iter().any(|w| w.len() != channels * taps) {
            return Err(Error::ShapeMismatch(format!(
                "filters must have {} coefficients",
                channels * taps
            )));
        }
        if weights.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("beamformer weights".into()));
        }
        Ok(Self {
            weights,
            channels,
            taps,
            delay,
            ref_channel,
        })
    }

    /// Selects the reference channel unchanged.
    pub fn reference_selector(bins: usize, channels: usize, ref_channel: usize) -> Self {
        Self {
            weights: vec![unit_vector(channels, ref_channel); bins],
            channels,
            taps: 1,
            delay: 0,
            ref_channel,
        }
    }

    pub fn bin(&self, f: usize) -> &CVector {
        &self.weights[f]
    }

    pub fn num_bins(&self) -> usize {
        self.weights.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn ref_channel(&self) -> usize {
        self.ref_channel
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * alpha).collect(),
            ..self.clone()
        }
    }
}

/// Statistics available to [`compute_weights`]; each variant reads what it needs.
#[derive(Debug, Clone, Copy, Default)]
pub struct BeamformerInputs<'a> {
    pub target_psd: Option<&'a PsdMatrix>,
    pub noise_psd: Option<&'a PsdMatrix>,
    pub steering: Option<&'a SteeringVectors>,
    /// Multichannel observation, for the covariance of the weighted and multi-frame variants.
    pub observation: Option<&'a ComplexSpectrogram>,
    pub power: Option<&'a PowerWeights>,
    /// Single-channel target spectrogram regressed onto by mfmcwf.
    pub target: Option<&'a ComplexSpectrogram>,
}

fn require<'a, T>(value: Option<&'a T>, what: &str, variant: BeamformerVariant) -> Result<&'a T> {
    value.ok_or_else(|| Error::MissingInput(format!("{} needs {what}", variant.name())))
}

/// `A^{-1} B u / (offset + tr)` with the trace taken over the leading `m x m` block.
fn souden(inv_prod: &CMatrix, ref_channel: usize, offset: f64, m: usize) -> CVector {
    let tr: Complex64 = (0..m).map(|i| inv_prod[(i, i)]).sum();
    inv_prod.column(ref_channel).into_owned() / (tr + offset)
}

fn pad_block(phi: &CMatrix, dim: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dim, dim);
    out.view_mut((0, 0), (phi.nrows(), phi.ncols())).copy_from(phi);
    out
}

/// Per-bin closed-form filter weights for every supported variant.
pub fn compute_weights(cfg: &BeamformerConfig, inputs: &BeamformerInputs<'_>) -> Result<BeamformerWeights> {
    cfg.validate()?;
    let variant = cfg.variant;
    let (taps, delay) = cfg.frame_layout();

    let (m, bins) = if let Some(phi) = inputs.target_psd {
        (phi.dim(), phi.num_bins())
    } else if let Some(obs) = inputs.observation {
        (obs.channels(), obs.bins())
    } else {
        return Err(Error::MissingInput(format!(
            "{} needs a target PSD or an observation",
            variant.name()
        )));
    };
    if cfg.ref_channel >= m {
        return Err(Error::InvalidArgument(format!(
            "reference channel {} out of {m}",
            cfg.ref_channel
        )));
    }

    let owned_steering;
    let steering = if variant.uses_steering() {
        Some(match inputs.steering {
            Some(s) => s,
            None => {
                let phi_s = require(inputs.target_psd, "a target PSD or steering vectors", variant)?;
                owned_steering = steering_vector(phi_s, cfg.ref_channel)?.relative_to(cfg.ref_channel);
                &owned_steering
            }
        })
    } else {
        None
    };

    let whitening: PsdMatrix = match variant {
        BeamformerVariant::MvdrRtf
        | BeamformerVariant::MvdrSouden
        | BeamformerVariant::SdwMwf
        | BeamformerVariant::R1Mwf => require(inputs.noise_psd, "a noise PSD", variant)?.clone(),
        BeamformerVariant::WmpdrRtf
        | BeamformerVariant::WmpdrSouden
        | BeamformerVariant::WpdRtf
        | BeamformerVariant::WpdSouden => {
            let obs = require(inputs.observation, "the observation", variant)?;
            let power = require(inputs.power, "power weights (lambda)", variant)?;
            weighted_covariance(obs, Some(power), taps, delay)?
        }
        BeamformerVariant::Mfmcwf => {
            let obs = require(inputs.observation, "the observation", variant)?;
            weighted_covariance(obs, None, taps, delay)?
        }
    };
    if whitening.num_bins() != bins || whitening.dim() != m * taps {
        return Err(Error::ShapeMismatch(format!(
            "{} statistics are {}x{} over {} bins, expected {} over {bins}",
            variant.name(),
            whitening.dim(),
            whitening.dim(),
            whitening.num_bins(),
            m * taps
        )));
    }

    let cross = if variant == BeamformerVariant::Mfmcwf {
        let obs = require(inputs.observation, "the observation", variant)?;
        let target = require(inputs.target, "a target spectrogram", variant)?;
        if !target.same_grid(obs) || target.channels() != 1 {
            return Err(Error::ShapeMismatch("mfmcwf target must be one channel on the observation grid".into()));
        }
        Some(target_cross_correlation(obs, target, taps, delay))
    } else {
        None
    };

    let dim = m * taps;
    let weights = (0..bins)
        .into_par_iter()
        .map(|f| -> Result<CVector> {
            let a = load_diagonal(whitening.bin(f), cfg.epsilon);
            let w = match variant {
                BeamformerVariant::MvdrRtf | BeamformerVariant::WmpdrRtf | BeamformerVariant::WpdRtf => {
                    let d = steering.expect("steering resolved").bin(f);
                    if d.len() != m {
                        return Err(Error::ShapeMismatch("steering vector length".into()));
                    }
                    let mut d_stacked = CVector::zeros(dim);
                    d_stacked.rows_mut(0, m).copy_from(d);
                    let x = solve_escalating(&a, &CMatrix::from_column_slice(dim, 1, d_stacked.as_slice()), f)?;
                    let x = x.column(0).into_owned();
                    let denom = d_stacked.dotc(&x);
                    x / denom
                }
                BeamformerVariant::MvdrSouden | BeamformerVariant::WmpdrSouden | BeamformerVariant::WpdSouden => {
                    let phi_s = require(inputs.target_psd, "a target PSD", variant)?.bin(f);
                    let num = solve_escalating(&a, &pad_block(phi_s, dim), f)?;
                    souden(&num, cfg.ref_channel, 0.0, m)
                }
                BeamformerVariant::SdwMwf => {
                    let phi_s = require(inputs.target_psd, "a target PSD", variant)?.bin(f);
                    let lhs = phi_s + a.scale(cfg.mu);
                    let x = solve_escalating(&lhs, phi_s, f)?;
                    x.column(cfg.ref_channel).into_owned()
                }
                BeamformerVariant::R1Mwf => {
                    let phi_s = require(inputs.target_psd, "a target PSD", variant)?.bin(f);
                    let (sigma, v) = principal_eigenpair(phi_s)?;
                    let rank1 = (&v * v.adjoint()).scale(sigma.max(0.0));
                    let num = solve_escalating(&a, &rank1, f)?;
                    souden(&num, cfg.ref_channel, cfg.mu, m)
                }
                BeamformerVariant::Mfmcwf => {
                    let p = &cross.as_ref().expect("cross resolved")[f];
                    let x = solve_escalating(&a, &CMatrix::from_column_slice(dim, 1, p.as_slice()), f)?;
                    x.column(0).into_owned()
                }
            };
            if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite(format!("{} weights at bin {f}", variant.name())));
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    BeamformerWeights::new(weights, m, taps, delay, cfg.ref_channel)
}

/// `(1/T) sum_t y~(t, f) s*(t, f)` per bin.
fn target_cross_correlation(obs: &ComplexSpectrogram, target: &ComplexSpectrogram, taps: usize, delay: usize) -> Vec<CVector> {
    let frames = obs.frames() as f64;
    (0..obs.bins())
        .map(|f| {
            let mut acc = CVector::zeros(obs.channels() * taps);
            for t in 0..obs.frames() {
                let s = target.data()[[t, f, 0]].conj();
                acc += stacked_observation(obs, t, f, taps, delay) * s;
            }
            acc.unscale(frames)
        })
        .collect()
}

/// `s(t, f) = w(f)^H y~(t, f)`; one output channel.
pub fn apply_beamformer(weights: &BeamformerWeights, spec: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if weights.channels() != spec.channels() || weights.num_bins() != spec.bins() {
        return Err(Error::ShapeMismatch(format!(
            "weights for {} channels x {} bins, spectrogram has {} x {}",
            weights.channels(),
            weights.num_bins(),
            spec.channels(),
            spec.bins()
        )));
    }
    let mut out = ndarray::Array2::<Complex64>::zeros((spec.frames(), spec.bins()));
    for f in 0..spec.bins() {
        let w = weights.bin(f);
        for t in 0..spec.frames() {
            let y = stacked_observation(spec, t, f, weights.taps(), weights.delay());
            out[[t, f]] = w.dotc(&y);
        }
    }
    ComplexSpectrogram::from_single(out, spec.sample_rate(), spec.hop())
}
