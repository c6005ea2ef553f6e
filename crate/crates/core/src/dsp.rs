//! FFT convolution and fractional-delay kernels.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Full linear convolution, length `a.len() + b.len() - 1`.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |x: &[f64]| {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        buf
    };
    let mut fa = lift(a);
    let mut fb = lift(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    inv.process(&mut fa);
    fa.truncate(out_len);
    fa.iter().map(|z| z.re / n as f64).collect()
}

/// Hann-windowed sinc taps for a delay of `frac` samples past the kernel center,
/// `frac` in [0, 1). Tap `k` sits at offset `k - (taps - 1) / 2`.
#[cfg(test)]
pub fn fractional_delay_kernel(taps: usize, frac: f64) -> Vec<f64> {
    let half = (taps - 1) as f64 / 2.0;
    (0..taps)
        .map(|k| {
            let x = k as f64 - half - frac;
            let sinc = if x.abs() < 1e-12 { 1.0 } else { (PI * x).sin() / (PI * x) };
            let window = 0.5 + 0.5 * (2.0 * PI * x / taps as f64).cos();
            sinc * window
        })
        .collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window of `len` points with shape `beta`.
pub fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let norm = bessel_i0(beta);
    let m = (len - 1) as f64;
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / m - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational resampling from `from` Hz to `to` Hz: upsample, Kaiser-windowed sinc
/// low-pass at the narrower Nyquist, downsample. The filter is centered, so the output
/// has no delay; length is `ceil(len · up / down)`.
pub fn resample_poly(x: &[f64], from: u32, to: u32, beta: f64) -> Vec<f64> {
    if from == to {
        return x.to_vec();
    }
    let g = gcd(from as usize, to as usize);
    let (up, down) = (to as usize / g, from as usize / g);
    let max_rate = up.max(down);
    // Transition width a tenth of the cutoff; length from the Kaiser design formula for
    // the attenuation implied by `beta`.
    let attenuation = beta / 0.1102 + 8.7;
    let roll_off = 1.0 / (20.0 * max_rate as f64);
    let half = ((attenuation - 8.0) / (28.714 * roll_off)).ceil() as usize;
    let window = kaiser(2 * half + 1, beta);
    let taps: Vec<f64> = window
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let t = (n as f64 - half as f64) / max_rate as f64;
            let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
            sinc * w * up as f64 / max_rate as f64
        })
        .collect();
    let out_len = (x.len() * up).div_ceil(down);
    (0..out_len)
        .map(|m| {
            // Upsampled-domain position of output m; input k sits at k·up.
            let p = (m * down + half) as isize;
            let k_hi = (p / up as isize).min(x.len() as isize - 1);
            let k_lo = ((p - 2 * half as isize).max(0) as usize).div_ceil(up) as isize;
            let mut acc = 0.0;
            let mut k = k_lo;
            while k <= k_hi {
                acc += x[k as usize] * taps[(p - k * up as isize) as usize];
                k += 1;
            }
            acc
        })
        .collect()
}
