//! Classic short-time objective intelligibility.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::resample_poly;
use crate::{Error, Result};

pub const STOI_FS: u32 = 10_000;
const FRAME: usize = 256;
const NFFT: usize = 512;
const NUM_BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
/// Frames per short-time segment.
pub const SEGMENT_FRAMES: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const RESAMPLE_BETA: f64 = 14.0;
const EPS: f64 = f64::EPSILON;

/// Symmetric Hann without the zero endpoints (MATLAB `hanning`).
fn hanning(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(FRAME / 2)
}

fn remove_silent_frames(x: &[f64], y: &[f64], window: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hop = FRAME / 2;
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = x[s..s + FRAME].iter().zip(window).map(|(v, w)| (v * w).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = (kept.len().saturating_sub(1)) * hop + FRAME;
    let mut xs = vec![0.0; out_len];
    let mut ys = vec![0.0; out_len];
    for (j, &s) in kept.iter().enumerate() {
        for k in 0..FRAME {
            xs[j * hop + k] += window[k] * x[s + k];
            ys[j * hop + k] += window[k] * y[s + k];
        }
    }
    (xs, ys)
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * STOI_FS as f64 / NFFT as f64).collect();
    let nearest = |target: f64| {
        let mut best = 0;
        for (k, f) in freqs.iter().enumerate() {
            if (f - target).powi(2) < (freqs[best] - target).powi(2) {
                best = k;
            }
        }
        best
    };
    (0..NUM_BANDS)
        .map(|i| {
            let k = i as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes, `[frame][band]`.
fn band_envelopes(x: &[f64], window: &[f64], bands: &[(usize, usize)]) -> Vec<[f64; NUM_BANDS]> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(NFFT);
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    frame_starts(x.len())
        .map(|s| {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for k in 0..FRAME {
                buf[k].re = window[k] * x[s + k];
            }
            fft.process(&mut buf);
            let mut env = [0.0; NUM_BANDS];
            for (b, &(lo, hi)) in bands.iter().enumerate() {
                env[b] = buf[lo..hi].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            }
            env
        })
        .collect()
}

/// Classic STOI of `estimate` against `reference`, both at `sample_rate`.
pub fn stoi(reference: &[f64], estimate: &[f64], sample_rate: u32) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "stoi: reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if sample_rate < STOI_FS {
        return Err(Error::InvalidArgument(format!(
            "stoi needs at least {STOI_FS} Hz, got {sample_rate}"
        )));
    }
    let (x, y) = if sample_rate == STOI_FS {
        (reference.to_vec(), estimate.to_vec())
    } else {
        (
            resample_poly(reference, sample_rate, STOI_FS, RESAMPLE_BETA),
            resample_poly(estimate, sample_rate, STOI_FS, RESAMPLE_BETA),
        )
    };
    let window = hanning(FRAME);
    if x.len() <= FRAME {
        return Err(Error::TooShort(format!("stoi: {} samples at 10 kHz", x.len())));
    }
    let (x, y) = remove_silent_frames(&x, &y, &window);
    let bands = third_octave_bands();
    let xe = band_envelopes(&x, &window, &bands);
    let ye = band_envelopes(&y, &window, &bands);
    if xe.len() < SEGMENT_FRAMES {
        return Err(Error::TooShort(format!(
            "stoi: {} active frames, need {SEGMENT_FRAMES}",
            xe.len()
        )));
    }

    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let segments = xe.len() - SEGMENT_FRAMES + 1;
    let mut total = 0.0;
    let mut xs = [0.0; SEGMENT_FRAMES];
    let mut ys = [0.0; SEGMENT_FRAMES];
    for m in 0..segments {
        for b in 0..NUM_BANDS {
            for t in 0..SEGMENT_FRAMES {
                xs[t] = xe[m + t][b];
                ys[t] = ye[m + t][b];
            }
            let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let scale = norm(&xs) / (norm(&ys) + EPS);
            for t in 0..SEGMENT_FRAMES {
                ys[t] = (ys[t] * scale).min(xs[t] * clip);
            }
            let center = |v: &mut [f64]| {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                v.iter_mut().for_each(|a| *a -= mean);
                let n = norm(v) + EPS;
                v.iter_mut().for_each(|a| *a /= n);
            };
            center(&mut xs);
            center(&mut ys);
            total += xs.iter().zip(&ys).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(total / (segments * NUM_BANDS) as f64)
}
