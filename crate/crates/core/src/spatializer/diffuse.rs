//! Spherically isotropic noise fields from independent noise segments.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use super::scene::ArrayGeometry;
use crate::error::{Error, Result};
use crate::stft::{istft, stft, StftConfig, Waveform};

pub const DIFFUSE_N_FFT: usize = 512;
pub const DIFFUSE_HOP: usize = 128;

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Spherically isotropic coherence `Γᵢⱼ(f) = sinc(2π f dᵢⱼ / c)`.
pub fn diffuse_coherence(array: &ArrayGeometry, freq: f64, sound_speed: f64) -> DMatrix<f64> {
    let m = array.num_mics();
    DMatrix::from_fn(m, m, |i, j| {
        sinc(2.0 * std::f64::consts::PI * freq * array.mic_distance(i, j) / sound_speed)
    })
}

/// Mixing matrix with `CᵀC = Γ`, taken as the symmetric root `V Λ^½ Vᵀ`; negative
/// eigenvalues are clipped to zero.
///
/// `Λ^½ Vᵀ` alone also factors Γ, but the solver's eigenvector order and signs jump
/// between bins. Overlap-add then blends neighbouring bins rendered with unrelated
/// rotations and the low-frequency coherence comes out inflated. The symmetric root is
/// unique and smooth in frequency.
fn coherence_factor(gamma: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(gamma);
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * sqrt_l * eig.eigenvectors.transpose()
}

/// Renders `len` samples of diffuse noise at every mic of `array`.
///
/// Disjoint segments of `noise` feed one channel each; per STFT bin the channel vector
/// `n` becomes `x = Cᵀ n`, so the output cross-spectra follow the sinc coherence.
pub fn gen_diffuse(noise: &[f64], array: &ArrayGeometry, fs: u32, len: usize, sound_speed: f64) -> Result<Waveform> {
    let m = array.num_mics();
    if len == 0 {
        return Err(Error::EmptyInput("diffuse noise length"));
    }
    if noise.len() < m * len {
        return Err(Error::TooShort(format!(
            "diffuse source has {} samples, {m} disjoint segments of {len} need {}",
            noise.len(),
            m * len
        )));
    }
    let segments = (0..m).map(|i| noise[i * len..(i + 1) * len].to_vec()).collect();
    let cfg = StftConfig::new(DIFFUSE_N_FFT, DIFFUSE_HOP);
    let spec = stft(&Waveform::new(segments, fs)?, &cfg)?;
    let mut out = spec.clone();
    for f in 0..spec.bins() {
        let freq = f as f64 * fs as f64 / DIFFUSE_N_FFT as f64;
        let c = coherence_factor(diffuse_coherence(array, freq, sound_speed));
        for t in 0..spec.frames() {
            for j in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    acc += spec.data()[[t, f, i]] * c[(i, j)];
                }
                out.data_mut()[[t, f, j]] = acc;
            }
        }
    }
    istft(&out, &cfg, len)
}

/// Welch estimate of the complex coherence between two signals, one value per bin of
/// an `n_fft`-point Hann analysis with 50% overlap.
pub fn spatial_coherence(a: &[f64], b: &[f64], fs: u32, n_fft: usize) -> Result<Vec<Complex64>> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    let cfg = StftConfig::new(n_fft, n_fft / 2).with_center(false);
    let spec = stft(&Waveform::new(vec![a.to_vec(), b.to_vec()], fs)?, &cfg)?;
    Ok((0..spec.bins())
        .map(|f| {
            let (mut sxy, mut sxx, mut syy) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
            for t in 0..spec.frames() {
                let x = spec.data()[[t, f, 0]];
                let y = spec.data()[[t, f, 1]];
                sxy += x * y.conj();
                sxx += x.norm_sqr();
                syy += y.norm_sqr();
            }
            let den = (sxx * syy).sqrt();
            if den > 0.0 {
                sxy / den
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatializer::SPEED_OF_SOUND;
    use crate::synth::white_noise;

    fn array() -> ArrayGeometry {
        ArrayGeometry::circular([2.0, 2.0, 1.2], 0.05, 4, 0.4)
    }

    #[test]
    fn factor_reproduces_coherence() {
        for freq in [0.0, 500.0, 1000.0, 3000.0, 8000.0] {
            let gamma = diffuse_coherence(&array(), freq, SPEED_OF_SOUND);
            let c = coherence_factor(gamma.clone());
            assert!((c.transpose() * &c - gamma).abs().max() < 1e-10);
        }
    }

    #[test]
    fn coherence_tends_to_one_at_dc() {
        let gamma = diffuse_coherence(&array(), 1e-3, SPEED_OF_SOUND);
        assert!(gamma.iter().all(|&g| (g - 1.0).abs() < 1e-9));
    }

    #[test]
    fn opposite_pair_has_the_analytic_coherence_at_1khz() {
        let fs = 16000;
        let len = 30 * fs as usize;
        let out = gen_diffuse(&white_noise(4 * len, 5), &array(), fs, len, SPEED_OF_SOUND).unwrap();
        let coh = spatial_coherence(out.channel(0), out.channel(2), fs, 512).unwrap();
        let bin = (1000.0 * 512.0 / fs as f64) as usize;
        let msc = coh[bin].norm_sqr();
        let x = 2.0 * std::f64::consts::PI * 1000.0 * 0.1 / SPEED_OF_SOUND;
        assert!((sinc(x).powi(2) - 0.278).abs() < 1e-3);
        assert!((msc - 0.278).abs() < 0.08, "{msc}");
        for ch in 0..4 {
            let p_in = white_noise(4 * len, 5)[ch * len..(ch + 1) * len].iter().map(|v| v * v).sum::<f64>();
            let p_out = out.channel(ch).iter().map(|v| v * v).sum::<f64>();
            assert!((p_out / p_in - 1.0).abs() < 0.05, "channel {ch}: {}", p_out / p_in);
        }
    }

    #[test]
    fn short_noise_is_rejected() {
        assert!(matches!(
            gen_diffuse(&vec![0.1; 100], &array(), 16000, 30, SPEED_OF_SOUND),
            Err(Error::TooShort(_))
        ));
    }
}
