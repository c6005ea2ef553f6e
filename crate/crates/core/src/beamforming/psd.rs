use ndarray::Array2;
use num_complex::Complex64;

use super::TfMask;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_part, load_diagonal, CMatrix, CVector};
use crate::stft::ComplexSpectrogram;

const MASK_MASS_FLOOR: f64 = 1e-8;

/// Per-bin spatial covariance, each `M x M` (or `MK x MK` for stacked statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    bins: Vec<CMatrix>,
}

impl PsdMatrix {
    pub fn from_bins(bins: Vec<CMatrix>) -> Result<Self> {
        let dim = bins.first().map(|m| m.nrows()).ok_or(Error::EmptyInput("PSD bins"))?;
        if bins.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::ShapeMismatch("PSD bins must be square and equally sized".into()));
        }
        Ok(Self { bins })
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn dim(&self) -> usize {
        self.bins[0].nrows()
    }

    pub fn bin(&self, f: usize) -> &CMatrix {
        &self.bins[f]
    }

    pub fn iter(&self) -> impl Iterator<Item = &CMatrix> {
        self.bins.iter()
    }

    pub fn max_hermitian_defect(&self) -> f64 {
        self.bins
            .iter()
            .map(|m| (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }
}

/// Strictly positive per-TF-bin target power used to weight frames in wMPDR/WPD.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerWeights(Array2<f64>);

impl PowerWeights {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("power weights must be finite and > 0".into()));
        }
        Ok(Self(values))
    }

    pub fn constant(frames: usize, bins: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((frames, bins), value))
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Observation vector at `(t, f)`: `[y_t; y_{t-D}; ...; y_{t-D-K+2}]`, zeros before frame 0.
pub fn stacked_observation(spec: &ComplexSpectrogram, t: usize, f: usize, taps: usize, delay: usize) -> CVector {
    let m = spec.channels();
    let data = spec.data();
    let mut out = CVector::zeros(m * taps);
    for block in 0..taps {
        let lag = if block == 0 { 0 } else { delay + block - 1 };
        if let Some(frame) = t.checked_sub(lag) {
            for c in 0..m {
                out[block * m + c] = data[[frame, f, c]];
            }
        }
    }
    out
}

/// Mask-weighted spatial covariance `sum_t m y y^H / sum_t m`, Hermitian-symmetrized.
pub fn estimate_psd(spec: &ComplexSpectrogram, mask: &TfMask) -> Result<PsdMatrix> {
    mask.check_matches(spec)?;
    let m = spec.channels();
    let data = spec.data();
    let mut bins = Vec::with_capacity(spec.bins());
    for f in 0..spec.bins() {
        let mut acc = CMatrix::zeros(m, m);
        let mut mass = 0.0;
        for t in 0..spec.frames() {
            let w = mask.values()[[t, f]];
            if w == 0.0 {
                continue;
            }
            mass += w;
            for i in 0..m {
                let yi = data[[t, f, i]] * w;
                for j in 0..m {
                    acc[(i, j)] += yi * data[[t, f, j]].conj();
                }
            }
        }
        if mass < MASK_MASS_FLOOR {
            return Err(Error::EmptyMask { bin: f });
        }
        bins.push(hermitian_part(&acc.unscale(mass)));
    }
    PsdMatrix::from_bins(bins)
}

/// `Phi + eps * (tr(Phi) / M) * I` for every bin.
pub fn diag_load(psd: &PsdMatrix, eps: f64) -> PsdMatrix {
    PsdMatrix {
        bins: psd.bins.iter().map(|m| load_diagonal(m, eps)).collect(),
    }
}

/// Frame-normalized, power-weighted covariance of the stacked observation:
/// `R(f) = (1/T) sum_t y~ y~^H / lambda(t, f)`. `power = None` means lambda = 1.
pub fn weighted_covariance(
    spec: &ComplexSpectrogram,
    power: Option<&PowerWeights>,
    taps: usize,
    delay: usize,
) -> Result<PsdMatrix> {
    if taps == 0 {
        return Err(Error::InvalidArgument("taps must be >= 1".into()));
    }
    if let Some(p) = power {
        if p.values().dim() != (spec.frames(), spec.bins()) {
            return Err(Error::ShapeMismatch("power weights vs spectrogram".into()));
        }
    }
    if spec.frames() == 0 {
        return Err(Error::EmptyInput("spectrogram frames"));
    }
    let dim = spec.channels() * taps;
    let frames = spec.frames() as f64;
    let bins = (0..spec.bins())
        .map(|f| {
            let mut acc = CMatrix::zeros(dim, dim);
            for t in 0..spec.frames() {
                let y = stacked_observation(spec, t, f, taps, delay);
                let inv = power.map_or(1.0, |p| 1.0 / p.values()[[t, f]]);
                acc.gerc(Complex64::new(inv, 0.0), &y, &y, Complex64::new(1.0, 0.0));
            }
            hermitian_part(&acc.unscale(frames))
        })
        .collect();
    PsdMatrix::from_bins(bins)
}

/// Default wMPDR/WPD weights: mask times mean channel power, mask floored at `mask_floor`,
/// the result floored at `power_floor * max`.
pub fn estimate_power_weights(
    spec: &ComplexSpectrogram,
    mask: &TfMask,
    mask_floor: f64,
    power_floor: f64,
) -> Result<PowerWeights> {
    mask.check_matches(spec)?;
    let m = spec.channels() as f64;
    let data = spec.data();
    let mut lambda = Array2::zeros((spec.frames(), spec.bins()));
    for ((t, f), value) in lambda.indexed_iter_mut() {
        let power: f64 = (0..spec.channels()).map(|c| data[[t, f, c]].norm_sqr()).sum::<f64>() / m;
        *value = mask.values()[[t, f]].max(mask_floor) * power;
    }
    let max = lambda.iter().cloned().fold(0.0, f64::max);
    let floor = (power_floor * max).max(f64::MIN_POSITIVE);
    lambda.mapv_inplace(|v| v.max(floor));
    PowerWeights::new(lambda)
}
