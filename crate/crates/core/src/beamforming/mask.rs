use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

const IRM_EPS: f64 = 1e-8;

/// Real time-frequency mask, frames x bins, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct TfMask(Array2<f64>);

impl TfMask {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("mask values must lie in [0, 1]".into()));
        }
        Ok(Self(values))
    }

    pub fn ones(frames: usize, bins: usize) -> Self {
        Self(Array2::ones((frames, bins)))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_values(self) -> Array2<f64> {
        self.0
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// `1 - m`.
    pub fn complement(&self) -> TfMask {
        TfMask(self.0.mapv(|m| 1.0 - m))
    }

    pub(crate) fn check_matches(&self, spec: &ComplexSpectrogram) -> Result<()> {
        if self.dim() != (spec.frames(), spec.bins()) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} vs spectrogram {}x{}",
                self.dim(),
                spec.frames(),
                spec.bins()
            )));
        }
        Ok(())
    }
}

/// Oracle ratio mask `|S| / (|S| + |N| + eps)` at the reference channel.
pub fn ideal_ratio_mask(
    clean: &ComplexSpectrogram,
    interference: &ComplexSpectrogram,
    ref_channel: usize,
) -> Result<TfMask> {
    if clean.data().dim() != interference.data().dim() {
        return Err(Error::ShapeMismatch(format!(
            "clean {:?} vs interference {:?}",
            clean.data().dim(),
            interference.data().dim()
        )));
    }
    if ref_channel >= clean.channels() {
        return Err(Error::InvalidArgument(format!(
            "reference channel {ref_channel} out of {}",
            clean.channels()
        )));
    }
    let mut mask = Array2::zeros((clean.frames(), clean.bins()));
    Zip::from(&mut mask)
        .and(&clean.channel_view(ref_channel))
        .and(&interference.channel_view(ref_channel))
        .for_each(|m, s, n| {
            let (s, n) = (s.norm(), n.norm());
            *m = s / (s + n + IRM_EPS);
        });
    Ok(TfMask(mask))
}
