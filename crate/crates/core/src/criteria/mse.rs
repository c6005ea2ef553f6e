use ndarray::Array2;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Mean squared magnitude of the complex difference.
pub fn mse_spectrum(reference: &ComplexSpectrogram, estimate: &ComplexSpectrogram) -> Result<f64> {
    if reference.data().dim() != estimate.data().dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            reference.data().dim(),
            estimate.data().dim()
        )));
    }
    let n = reference.data().len();
    if n == 0 {
        return Err(Error::EmptyInput("spectrogram"));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(sum / n as f64)
}

pub fn mse_mask(reference: &Array2<f64>, estimate: &Array2<f64>) -> Result<f64> {
    if reference.dim() != estimate.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            reference.dim(),
            estimate.dim()
        )));
    }
    if reference.is_empty() {
        return Err(Error::EmptyInput("mask"));
    }
    let sum: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}
