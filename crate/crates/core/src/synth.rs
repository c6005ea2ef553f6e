//! Deterministic synthetic signals for toy corpora, benches and tests.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// SplitMix64 finalizer; spreads nearby seeds over the whole 64-bit range.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-item seed from a master seed, so parallel and serial runs agree.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index)
}

/// Zero-mean unit-variance Gaussian noise.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Speech-shaped modulated noise: low-pass tilted noise gated by syllable-rate bursts.
///
/// Bursts last 80-300 ms with 40-200 ms pauses and random levels, shaped by raised-cosine
/// ramps. The result is normalized to a peak of 0.5.
pub fn speech_like(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let fs = sample_rate as f64;

    let mut carrier = Vec::with_capacity(len);
    let (mut lp1, mut lp2) = (0.0, 0.0);
    for _ in 0..len {
        let w: f64 = normal.sample(&mut rng);
        lp1 = 0.9 * lp1 + w;
        lp2 = 0.6 * lp2 + w;
        carrier.push(0.15 * lp1 + 0.5 * lp2 + 0.2 * w);
    }

    let mut envelope = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.1) * fs) as usize;
    while pos < len {
        let dur = (rng.random_range(0.08..0.3) * fs) as usize;
        let level = rng.random_range(0.3..1.0);
        let ramp = (dur / 4).max(1);
        for i in 0..dur.min(len - pos) {
            let edge = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if i >= dur - ramp {
                0.5 - 0.5 * (PI * (dur - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            envelope[pos + i] = level * edge;
        }
        pos += dur + (rng.random_range(0.04..0.2) * fs) as usize;
    }

    let mut out: Vec<f64> = carrier
        .iter()
        .zip(&envelope)
        .map(|(c, e)| c * (e + 1e-3))
        .collect();
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= 0.5 / peak);
    }
    out
}

/// Non-stationary super-Gaussian source: Laplacian samples under a per-block Laplacian-magnitude
/// gain, so short-time spectra are sparse across time.
pub fn laplacian_source(len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = ((0.064 * sample_rate as f64) as usize).max(1);
    let laplace = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random_range(-0.5..0.5);
        -u.signum() * (1.0 - 2.0 * u.abs()).max(1e-300).ln()
    };
    let mut out = Vec::with_capacity(len);
    let mut gain = 0.0;
    for n in 0..len {
        if n % block == 0 {
            gain = laplace(&mut rng).abs() + 0.01;
        }
        out.push(gain * laplace(&mut rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(speech_like(4000, 16000, 3), speech_like(4000, 16000, 3));
        assert_ne!(speech_like(4000, 16000, 3), speech_like(4000, 16000, 4));
        assert_eq!(laplacian_source(100, 16000, 1), laplacian_source(100, 16000, 1));
    }

    #[test]
    fn speech_like_has_pauses_and_bounded_peak() {
        let x = speech_like(32000, 16000, 9);
        let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 0.5).abs() < 1e-12);
        let frame_energy: Vec<f64> = x.chunks(320).map(|c| c.iter().map(|v| v * v).sum()).collect();
        let max = frame_energy.iter().cloned().fold(0.0, f64::max);
        assert!(frame_energy.iter().any(|&e| e < 1e-3 * max));
    }
}
