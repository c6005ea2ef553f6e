//! Ratio criteria in dB: SI-SNR, SNR and convolution-invariant SDR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Saturation bound for every ratio criterion, in dB.
pub const RATIO_CAP_DB: f64 = 60.0;
pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_CI_SDR_TAPS: usize = 512;

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_pair(reference: &[f64], estimate: &[f64], eps: f64) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let e = energy(reference);
    if e == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(e)
}

/// `10 log10((num + eps) / (den + eps))`, clamped to `±RATIO_CAP_DB`.
pub fn capped_db(num: f64, den: f64, eps: f64) -> f64 {
    (10.0 * ((num + eps) / (den + eps)).log10()).clamp(-RATIO_CAP_DB, RATIO_CAP_DB)
}

/// Scale-invariant SNR of `estimate` against `reference`, in dB.
pub fn si_snr(reference: &[f64], estimate: &[f64], eps: f64) -> Result<f64> {
    let ref_energy = check_pair(reference, estimate, eps)?;
    let scale = dot(estimate, reference) / (ref_energy + eps);
    let (mut target, mut residual) = (0.0, 0.0);
    for (r, e) in reference.iter().zip(estimate) {
        let t = scale * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    Ok(capped_db(target, residual, eps))
}

/// Plain SNR `10 log10(|ref|^2 / |est - ref|^2)`, in dB.
pub fn snr(reference: &[f64], estimate: &[f64], eps: f64) -> Result<f64> {
    let ref_energy = check_pair(reference, estimate, eps)?;
    let err: f64 = reference.iter().zip(estimate).map(|(r, e)| (e - r) * (e - r)).sum();
    Ok(capped_db(ref_energy, err, eps))
}

/// Least-squares FIR `h` of `taps` coefficients minimizing `|est - (h * ref)[..N]|^2`.
///
/// The normal matrix is the Toeplitz autocorrelation corrected for the truncated tail,
/// filled diagonal by diagonal with `R[i+1][j+1] = R[i][j] - ref[N-1-j] ref[N-1-i]`.
pub fn ci_sdr_filter(reference: &[f64], estimate: &[f64], taps: usize) -> Result<Vec<f64>> {
    let n = reference.len();
    if taps == 0 || taps > n {
        return Err(Error::InvalidArgument(format!(
            "filter taps must be in 1..={n}, got {taps}"
        )));
    }
    let acf: Vec<f64> = (0..taps).map(|k| dot(&reference[..n - k], &reference[k..])).collect();
    if acf[0] == 0.0 {
        return Err(Error::ZeroReference);
    }
    let mut normal = DMatrix::<f64>::zeros(taps, taps);
    for lag in 0..taps {
        let mut value = acf[lag];
        for i in 0..taps - lag {
            let j = i + lag;
            if i > 0 {
                value -= reference[n - j] * reference[n - i];
            }
            normal[(i, j)] = value;
            normal[(j, i)] = value;
        }
    }
    let loading = 1e-10 * acf[0];
    for i in 0..taps {
        normal[(i, i)] += loading;
    }
    let cross = DVector::from_iterator(taps, (0..taps).map(|j| dot(&estimate[j..], &reference[..n - j])));

    let h = match normal.clone().cholesky() {
        Some(ch) => ch.solve(&cross),
        None => normal
            .full_piv_lu()
            .solve(&cross)
            .ok_or(Error::Singular { bin: 0, loading })?,
    };
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CI-SDR filter".into()));
    }
    Ok(h.iter().copied().collect())
}

/// Convolution-invariant SDR with an FIR distortion filter of `taps` coefficients, in dB.
pub fn ci_sdr(reference: &[f64], estimate: &[f64], taps: usize, eps: f64) -> Result<f64> {
    check_pair(reference, estimate, eps)?;
    let h = ci_sdr_filter(reference, estimate, taps)?;
    let n = reference.len();
    let (mut target, mut residual) = (0.0, 0.0);
    for t in 0..n {
        let p: f64 = h
            .iter()
            .enumerate()
            .take(t + 1)
            .map(|(k, hk)| hk * reference[t - k])
            .sum();
        target += p * p;
        residual += (estimate[t] - p) * (estimate[t] - p);
    }
    Ok(capped_db(target, residual, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::white_noise;

    #[test]
    fn self_comparison_saturates() {
        let s = white_noise(1000, 1);
        assert_eq!(si_snr(&s, &s, DEFAULT_EPS).unwrap(), RATIO_CAP_DB);
        assert_eq!(snr(&s, &s, DEFAULT_EPS).unwrap(), RATIO_CAP_DB);
        let doubled: Vec<f64> = s.iter().map(|x| 2.0 * x).collect();
        assert_eq!(si_snr(&s, &doubled, DEFAULT_EPS).unwrap(), RATIO_CAP_DB);
    }

    #[test]
    fn orthogonal_estimate_is_heavily_negative() {
        let v = si_snr(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 1e-8).unwrap();
        assert!(v <= -40.0);
    }

    #[test]
    fn snr_of_doubled_reference_is_zero_db() {
        let s = white_noise(500, 2);
        let est: Vec<f64> = s.iter().map(|x| 2.0 * x).collect();
        assert!(snr(&s, &est, DEFAULT_EPS).unwrap().abs() < 1e-9);
    }

    #[test]
    fn snr_with_constructed_error_power() {
        // Error orthogonal to ref with exactly 1% of its energy.
        let s = white_noise(2000, 3);
        let mut noise = white_noise(2000, 4);
        let proj = dot(&noise, &s) / energy(&s);
        noise.iter_mut().zip(&s).for_each(|(n, r)| *n -= proj * r);
        let scale = (0.01 * energy(&s) / energy(&noise)).sqrt();
        let est: Vec<f64> = s.iter().zip(&noise).map(|(r, n)| r + scale * n).collect();
        assert!((snr(&s, &est, DEFAULT_EPS).unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn zero_reference_is_an_error() {
        assert!(matches!(si_snr(&[0.0; 4], &[1.0; 4], 1e-8), Err(Error::ZeroReference)));
        assert!(matches!(snr(&[0.0; 4], &[1.0; 4], 1e-8), Err(Error::ZeroReference)));
        assert!(matches!(ci_sdr(&[0.0; 40], &[1.0; 40], 4, 1e-8), Err(Error::ZeroReference)));
        assert!(si_snr(&[1.0; 4], &[1.0; 3], 1e-8).is_err());
    }

    #[test]
    fn ci_sdr_absorbs_a_delay() {
        let s = white_noise(4000, 5);
        let mut delayed = vec![0.0; 5];
        delayed.extend_from_slice(&s[..s.len() - 5]);
        let v = ci_sdr(&s, &delayed, 16, DEFAULT_EPS).unwrap();
        assert!(v >= RATIO_CAP_DB - 1e-6, "{v}");
        let h = ci_sdr_filter(&s, &delayed, 16).unwrap();
        assert!((h[5] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn ci_sdr_identity_filter() {
        let s = white_noise(1000, 6);
        assert_eq!(ci_sdr(&s, &s, 1, DEFAULT_EPS).unwrap(), RATIO_CAP_DB);
    }

    #[test]
    fn ci_sdr_single_tap_matches_correlation_formula() {
        let r = white_noise(3000, 7);
        let e = white_noise(3000, 8);
        let rho = dot(&r, &e) / (energy(&r) * energy(&e)).sqrt();
        let expected = 10.0 * (rho * rho / (1.0 - rho * rho)).log10();
        assert!((ci_sdr(&r, &e, 1, DEFAULT_EPS).unwrap() - expected).abs() < 1e-6);
    }
}
