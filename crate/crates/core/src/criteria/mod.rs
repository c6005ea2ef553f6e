//! Training-objective building blocks: elementary criteria composed with assignment-resolving
//! wrappers (fixed pairing, PIT, MixIT) and weighted multi-task combination.
//!
//! Wrappers work in a "lower is better" convention. dB criteria are negated on the way in;
//! [`LossReport::score`] carries the value back in the criterion's natural sign.

mod assignment;
mod mse;
mod mtl;
mod ratio;
mod wrappers;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use assignment::{assignment_cost, solve_exhaustive, solve_hungarian, MixingMatrix, Permutation};
pub use mse::{mse_mask, mse_spectrum};
pub use mtl::{mtl_combine, LossBatch, MtlEntry, MtlReport, MtlSpec, ObjectiveResult, WrapperKind};
pub use ratio::{
    capped_db, ci_sdr, ci_sdr_filter, si_snr, snr, DEFAULT_CI_SDR_TAPS, DEFAULT_EPS, RATIO_CAP_DB,
};
pub use wrappers::{
    fixed_wrap, mixit_wrap, pairwise_losses, pit_wrap, pit_wrap_with, PitSolver, MIXIT_BUDGET,
    PIT_EXHAUSTIVE_MAX,
};

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    SiSnr,
    Snr,
    CiSdr,
    MseSpectrum,
    MseMask,
}

impl CriterionKind {
    pub fn is_ratio(self) -> bool {
        matches!(self, Self::SiSnr | Self::Snr | Self::CiSdr)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SiSnr => "si_snr",
            Self::Snr => "snr",
            Self::CiSdr => "ci_sdr",
            Self::MseSpectrum => "mse_spectrum",
            Self::MseMask => "mse_mask",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriterionParams {
    pub eps: f64,
    pub filter_taps: usize,
}

impl Default for CriterionParams {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            filter_taps: DEFAULT_CI_SDR_TAPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionSpec {
    pub kind: CriterionKind,
    pub params: CriterionParams,
}

impl CriterionSpec {
    pub fn new(kind: CriterionKind) -> Self {
        Self {
            kind,
            params: CriterionParams::default(),
        }
    }

    pub fn with_taps(mut self, taps: usize) -> Self {
        self.params.filter_taps = taps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.params.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be > 0, got {}", self.params.eps)));
        }
        if self.params.filter_taps == 0 {
            return Err(Error::InvalidArgument("filter_taps must be >= 1".into()));
        }
        Ok(())
    }

    /// Converts a lower-is-better loss back to the criterion's natural value.
    pub fn natural(&self, loss: f64) -> f64 {
        if self.kind.is_ratio() {
            -loss
        } else {
            loss
        }
    }
}

/// An elementary loss, lower is better.
pub trait Criterion<T: ?Sized> {
    fn loss(&self, reference: &T, estimate: &T) -> Result<f64>;

    /// Maps a loss back to the criterion's natural sign.
    fn to_score(&self, loss: f64) -> f64 {
        loss
    }
}

impl Criterion<[f64]> for CriterionSpec {
    fn to_score(&self, loss: f64) -> f64 {
        self.natural(loss)
    }

    fn loss(&self, reference: &[f64], estimate: &[f64]) -> Result<f64> {
        self.validate()?;
        let eps = self.params.eps;
        match self.kind {
            CriterionKind::SiSnr => si_snr(reference, estimate, eps).map(|v| -v),
            CriterionKind::Snr => snr(reference, estimate, eps).map(|v| -v),
            CriterionKind::CiSdr => ci_sdr(reference, estimate, self.params.filter_taps, eps).map(|v| -v),
            kind => Err(Error::InvalidArgument(format!(
                "criterion {} does not take waveforms",
                kind.name()
            ))),
        }
    }
}

impl Criterion<Vec<f64>> for CriterionSpec {
    fn to_score(&self, loss: f64) -> f64 {
        self.natural(loss)
    }

    fn loss(&self, reference: &Vec<f64>, estimate: &Vec<f64>) -> Result<f64> {
        Criterion::<[f64]>::loss(self, reference, estimate)
    }
}

impl Criterion<ComplexSpectrogram> for CriterionSpec {
    fn loss(&self, reference: &ComplexSpectrogram, estimate: &ComplexSpectrogram) -> Result<f64> {
        match self.kind {
            CriterionKind::MseSpectrum => mse_spectrum(reference, estimate),
            kind => Err(Error::InvalidArgument(format!(
                "criterion {} does not take spectrograms",
                kind.name()
            ))),
        }
    }
}

impl Criterion<Array2<f64>> for CriterionSpec {
    fn loss(&self, reference: &Array2<f64>, estimate: &Array2<f64>) -> Result<f64> {
        match self.kind {
            CriterionKind::MseMask => mse_mask(reference, estimate),
            kind => Err(Error::InvalidArgument(format!(
                "criterion {} does not take masks",
                kind.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    None,
    Permutation(Permutation),
    Mixing(MixingMatrix),
}

/// Result of a wrapper: the objective and the pairing that achieved it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Lower is better.
    pub value: f64,
    /// Natural sign of the criterion (dB for ratio criteria, higher is better there).
    pub score: f64,
    pub assignment: Assignment,
}

impl LossReport {
    pub fn permutation(&self) -> Option<&Permutation> {
        match &self.assignment {
            Assignment::Permutation(p) => Some(p),
            _ => None,
        }
    }

    pub fn mixing(&self) -> Option<&MixingMatrix> {
        match &self.assignment {
            Assignment::Mixing(m) => Some(m),
            _ => None,
        }
    }
}
