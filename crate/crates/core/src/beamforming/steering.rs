use num_complex::Complex64;

use super::PsdMatrix;
use crate::error::{Error, Result};
use crate::linalg::{principal_eigenpair, CVector};

/// Per-bin steering vectors (length M).
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVectors(Vec<CVector>);

impl SteeringVectors {
    pub fn new(vectors: Vec<CVector>) -> Self {
        Self(vectors)
    }

    pub fn bin(&self, f: usize) -> &CVector {
        &self.0[f]
    }

    pub fn num_bins(&self) -> usize {
        self.0.len()
    }

    /// Rescales every bin so the reference entry equals 1 (a relative transfer function).
    /// Bins with a vanishing reference entry are left unit-norm.
    pub fn relative_to(&self, ref_channel: usize) -> SteeringVectors {
        Self(
            self.0
                .iter()
                .map(|d| {
                    let r = d[ref_channel];
                    if r.norm() > 1e-12 {
                        d.map(|z| z / r)
                    } else {
                        d.clone()
                    }
                })
                .collect(),
        )
    }
}

/// Principal eigenvector of each bin of `target_psd`, unit norm, phase-aligned so the
/// reference entry is real and non-negative.
pub fn steering_vector(target_psd: &PsdMatrix, ref_channel: usize) -> Result<SteeringVectors> {
    if ref_channel >= target_psd.dim() {
        return Err(Error::InvalidArgument(format!(
            "reference channel {ref_channel} out of {}",
            target_psd.dim()
        )));
    }
    let vectors = target_psd
        .iter()
        .map(|phi| {
            let (_, v) = principal_eigenpair(phi)?;
            let r = v[ref_channel];
            let phase = if r.norm() > 0.0 {
                r.conj() / r.norm()
            } else {
                Complex64::new(1.0, 0.0)
            };
            Ok(v.map(|z| z * phase))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringVectors(vectors))
}
