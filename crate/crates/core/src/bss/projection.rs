use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

/// Per-bin least-squares scale of each single-channel source onto the mixture reference
/// channel: `c(f) = Σ_t conj(z) y / Σ_t |z|²`. Shape (sources, bins).
pub fn projection_scales(
    separated: &[ComplexSpectrogram],
    mixture: &ComplexSpectrogram,
    ref_channel: usize,
) -> Result<Array2<Complex64>> {
    if ref_channel >= mixture.channels() {
        return Err(Error::InvalidArgument(format!(
            "reference channel {ref_channel} out of range for {} channels",
            mixture.channels()
        )));
    }
    let mut scales = Array2::zeros((separated.len(), mixture.bins()));
    for (s, source) in separated.iter().enumerate() {
        if source.channels() != 1 || source.frames() != mixture.frames() || source.bins() != mixture.bins() {
            return Err(Error::ShapeMismatch(format!(
                "source {s} is {}x{}x{}, mixture grid is {}x{}",
                source.frames(),
                source.bins(),
                source.channels(),
                mixture.frames(),
                mixture.bins()
            )));
        }
        for f in 0..mixture.bins() {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for t in 0..mixture.frames() {
                let z = source.data()[[t, f, 0]];
                num += z.conj() * mixture.data()[[t, f, ref_channel]];
                den += z.norm_sqr();
            }
            scales[[s, f]] = if den > 0.0 { num / den } else { Complex64::new(0.0, 0.0) };
        }
    }
    Ok(scales)
}

/// Restores the scale of frequency-domain BSS outputs relative to `ref_channel`.
pub fn projection_back(
    separated: &[ComplexSpectrogram],
    mixture: &ComplexSpectrogram,
    ref_channel: usize,
) -> Result<Vec<ComplexSpectrogram>> {
    let scales = projection_scales(separated, mixture, ref_channel)?;
    Ok(separated
        .iter()
        .enumerate()
        .map(|(s, source)| {
            let mut out = source.clone();
            for ((_, f, _), z) in out.data_mut().indexed_iter_mut() {
                *z *= scales[[s, f]];
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_single(rng: &mut ChaCha8Rng, frames: usize, bins: usize) -> ComplexSpectrogram {
        let data = Array3::from_shape_fn((frames, bins, 1), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        ComplexSpectrogram::new(data, 16000, 256).unwrap()
    }

    #[test]
    fn source_equal_to_mixture_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mix = random_single(&mut rng, 30, 4);
        let out = projection_back(std::slice::from_ref(&mix), &mix, 0).unwrap();
        for (a, b) in out[0].data().iter().zip(mix.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn half_scale_source_is_doubled() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mix = random_single(&mut rng, 30, 4);
        let half = mix.map(|z| z * 0.5);
        let scales = projection_scales(&[half], &mix, 0).unwrap();
        assert!(scales.iter().all(|c| (c - Complex64::new(2.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn scales_match_dense_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array3::from_shape_fn((40, 3, 2), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let mix = ComplexSpectrogram::new(data, 16000, 256).unwrap();
        let sources = vec![random_single(&mut rng, 40, 3), random_single(&mut rng, 40, 3)];
        let scales = projection_scales(&sources, &mix, 1).unwrap();
        for (s, src) in sources.iter().enumerate() {
            for f in 0..3 {
                let a = DMatrix::from_fn(40, 1, |t, _| src.data()[[t, f, 0]]);
                let b = DVector::from_fn(40, |t, _| mix.data()[[t, f, 1]]);
                let x = a.svd(true, true).solve(&b, 1e-14).unwrap();
                assert!((x[0] - scales[[s, f]]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_source_gets_zero_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mix = random_single(&mut rng, 10, 2);
        let zero = ComplexSpectrogram::zeros(10, 2, 1, 16000, 256);
        let scales = projection_scales(&[zero], &mix, 0).unwrap();
        assert!(scales.iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        assert!(projection_scales(&[mix.clone()], &mix, 3).is_err());
    }
}
