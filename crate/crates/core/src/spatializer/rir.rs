//! Shoebox image-source room impulse responses.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::scene::{ArrayGeometry, Point, RoomSpec};
use crate::error::{Error, Result};

pub const FRAC_DELAY_TAPS: usize = 81;
const HALF_TAPS: usize = FRAC_DELAY_TAPS / 2;
/// Every response starts this many samples late so the first kernel half fits.
pub const RIR_LATENCY: usize = HALF_TAPS;

/// Default DC-blocking cutoff. All image amplitudes are positive, so without it the
/// dense tail accumulates low-frequency energy and decays too slowly.
pub const RIR_HIGHPASS_HZ: f64 = 50.0;
const CALIBRATION_ROUNDS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirOptions {
    /// Keep only the direct image.
    pub direct_only: bool,
    /// Cap on the total reflection count per image.
    pub max_order: Option<u32>,
    /// Second-order Butterworth high-pass applied to every response.
    pub highpass_hz: Option<f64>,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self {
            direct_only: false,
            max_order: None,
            highpass_hz: Some(RIR_HIGHPASS_HZ),
        }
    }
}

impl RirOptions {
    pub fn direct() -> Self {
        Self {
            direct_only: true,
            ..Self::default()
        }
    }

    pub fn unfiltered(self) -> Self {
        Self {
            highpass_hz: None,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    responses: Vec<Vec<f64>>,
    sample_rate: u32,
    direct_only: bool,
}

impl Rir {
    pub fn responses(&self) -> &[Vec<f64>] {
        &self.responses
    }

    pub fn mic(&self, i: usize) -> &[f64] {
        &self.responses[i]
    }

    pub fn num_mics(&self) -> usize {
        self.responses.len()
    }

    pub fn len(&self) -> usize {
        self.responses.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn is_direct_only(&self) -> bool {
        self.direct_only
    }
}

/// Image coordinates along one axis with their reflection counts:
/// `x = (1 − 2q)·s + 2 m L`, reflections `|m − q| + |m|`.
fn axis_images(s: f64, len: f64, reach: f64, direct_only: bool) -> Vec<(f64, u32)> {
    if direct_only {
        return vec![(s, 0)];
    }
    let span = (reach / (2.0 * len)).ceil() as i64 + 1;
    let mut out = Vec::with_capacity(4 * span as usize + 2);
    for m in -span..=span {
        for q in 0..2i64 {
            let x = (1 - 2 * q) as f64 * s + 2.0 * m as f64 * len;
            out.push((x, ((m - q).abs() + m.abs()) as u32));
        }
    }
    out
}

struct Kernel {
    cos_j: Vec<f64>,
    sin_j: Vec<f64>,
}

impl Kernel {
    fn new() -> Self {
        let w = 2.0 * PI / FRAC_DELAY_TAPS as f64;
        let js = (0..FRAC_DELAY_TAPS).map(|k| k as f64 - HALF_TAPS as f64);
        Self {
            cos_j: js.clone().map(|j| (w * j).cos()).collect(),
            sin_j: js.map(|j| (w * j).sin()).collect(),
        }
    }

    /// Adds `amp · w(n − τ) sinc(n − τ)` around `tau` into `out`.
    fn splat(&self, out: &mut [f64], tau: f64, amp: f64) {
        let n0 = tau.floor();
        let frac = tau - n0;
        let base = n0 as usize - HALF_TAPS;
        let sf = (PI * frac).sin();
        let (wsf, wcf) = (2.0 * PI * frac / FRAC_DELAY_TAPS as f64).sin_cos();
        let limit = FRAC_DELAY_TAPS.min(out.len().saturating_sub(base));
        for k in 0..limit {
            let j = k as f64 - HALF_TAPS as f64;
            let x = j - frac;
            // sin(π(j − frac)) = −(−1)^j sin(π frac) for integer j.
            let sinc = if x.abs() < 1e-12 {
                1.0
            } else {
                let sign = if (k + HALF_TAPS) % 2 == 0 { 1.0 } else { -1.0 };
                -sign * sf / (PI * x)
            };
            let window = 0.5 + 0.5 * (self.cos_j[k] * wcf + self.sin_j[k] * wsf);
            out[base + k] += amp * sinc * window;
        }
    }
}

/// Second-order Butterworth high-pass (bilinear transform), run forward once.
fn highpass(x: &[f64], fc: f64, fs: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * fc / fs;
    let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
    let cw = w0.cos();
    let a0 = 1.0 + alpha;
    let b0 = (1.0 + cw) / 2.0 / a0;
    let b1 = -(1.0 + cw) / a0;
    let a1 = -2.0 * cw / a0;
    let a2 = (1.0 - alpha) / a0;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b1 * x1 + b0 * x2 - a1 * y1 - a2 * y2;
            (x2, x1, y2, y1) = (x1, v, y1, y);
            y
        })
        .collect()
}

struct ImageSet {
    axes: Vec<Vec<(f64, u32)>>,
    max_dist: f64,
    order_cap: u32,
    len: usize,
}

impl ImageSet {
    fn new(room: &RoomSpec, src: &Point, fs: u32, opts: RirOptions) -> Result<Self> {
        if !room.contains(src) {
            return Err(Error::InvalidArgument(format!("source {src:?} is outside the room")));
        }
        if matches!(opts.max_order, Some(0)) && !opts.direct_only {
            return Err(Error::InvalidArgument("max_order must be at least 1".into()));
        }
        let c = room.sound_speed;
        let room_diag = room.dims.iter().map(|d| d * d).sum::<f64>().sqrt();
        let max_dist = if opts.direct_only { room_diag } else { (c * room.t60).max(room_diag) };
        Ok(Self {
            axes: (0..3)
                .map(|i| axis_images(src[i], room.dims[i], max_dist, opts.direct_only))
                .collect(),
            max_dist,
            order_cap: if opts.direct_only { 0 } else { opts.max_order.unwrap_or(u32::MAX) },
            len: RIR_LATENCY + (max_dist / c * fs as f64).ceil() as usize + HALF_TAPS + 2,
        })
    }

    fn max_bounces(&self) -> u32 {
        self.axes.iter().map(|a| a.iter().map(|e| e.1).max().unwrap_or(0)).sum()
    }

    /// Calls `visit(distance, reflections)` for every image within reach of `mic`.
    fn for_each(&self, mic: &Point, mut visit: impl FnMut(f64, u32)) {
        let max_d2 = self.max_dist * self.max_dist;
        for &(x, nx) in &self.axes[0] {
            let dx2 = (x - mic[0]).powi(2);
            if dx2 > max_d2 {
                continue;
            }
            for &(y, ny) in &self.axes[1] {
                let dxy2 = dx2 + (y - mic[1]).powi(2);
                if dxy2 > max_d2 {
                    continue;
                }
                for &(z, nz) in &self.axes[2] {
                    let d2 = dxy2 + (z - mic[2]).powi(2);
                    let n = nx + ny + nz;
                    if d2 <= max_d2 && n <= self.order_cap {
                        visit(d2.sqrt(), n);
                    }
                }
            }
        }
    }
}

/// Image-source impulse responses from `src` to every mic in `array`.
///
/// Images out to a distance of `c·T60` are kept; each bounce scales the amplitude by
/// `√(1 − α)` and spreading loss is `1/(4πd)`.
pub fn simulate_rir(room: &RoomSpec, src: &Point, array: &ArrayGeometry, fs: u32, opts: RirOptions) -> Result<Rir> {
    if let Some(m) = array.mics.iter().find(|m| !room.contains(m)) {
        return Err(Error::InvalidArgument(format!("microphone {m:?} is outside the room")));
    }
    if !(room.absorption > 0.0 && room.absorption <= 1.0) {
        return Err(Error::InvalidArgument(format!("absorption {} outside (0, 1]", room.absorption)));
    }
    if let Some(fc) = opts.highpass_hz {
        if !(fc > 0.0 && fc < fs as f64 / 2.0) {
            return Err(Error::InvalidArgument(format!("high-pass cutoff {fc} Hz outside (0, fs/2)")));
        }
    }
    let images = ImageSet::new(room, src, fs, opts)?;
    let c = room.sound_speed;
    let fs_f = fs as f64;
    let beta = (1.0 - room.absorption).sqrt();
    let gains: Vec<f64> = (0..=images.max_bounces()).map(|n| beta.powi(n as i32)).collect();
    let kernel = Kernel::new();

    let responses = array
        .mics
        .par_iter()
        .map(|mic| {
            let mut h = vec![0.0; images.len];
            images.for_each(mic, |d, n| {
                let amp = gains[n as usize] / (4.0 * PI * d);
                kernel.splat(&mut h, RIR_LATENCY as f64 + d / c * fs_f, amp);
            });
            match opts.highpass_hz {
                Some(fc) => highpass(&h, fc, fs_f),
                None => h,
            }
        })
        .collect();
    Ok(Rir {
        responses,
        sample_rate: fs,
        direct_only: opts.direct_only,
    })
}

/// Absorption for which the rendered response from `src` to `mic` has a Schroeder T60
/// equal to `room.t60`.
///
/// Starts from the Sabine value already stored in `room` and rescales `−ln(1 − α)` by the
/// measured/target ratio until the estimate is within 2%.
pub fn calibrate_absorption(room: &RoomSpec, src: &Point, mic: &Point, fs: u32, opts: RirOptions) -> Result<f64> {
    let probe = ArrayGeometry {
        center: *mic,
        radius: 0.0,
        yaw: 0.0,
        mics: vec![*mic],
    };
    let mut trial = room.clone();
    let mut best = (f64::INFINITY, room.absorption);
    for _ in 0..CALIBRATION_ROUNDS {
        let rir = simulate_rir(&trial, src, &probe, fs, opts)?;
        let Some(t60) = schroeder_t60(rir.mic(0), fs) else {
            break;
        };
        let miss = (t60 / room.t60 - 1.0).abs();
        if miss < best.0 {
            best = (miss, trial.absorption);
        }
        if miss < 0.02 {
            break;
        }
        let k = -(1.0 - trial.absorption).ln() * t60 / room.t60;
        trial.absorption = (1.0 - (-k).exp()).clamp(1e-3, 0.99);
    }
    Ok(best.1)
}

/// Backward-integrated energy in dB relative to the total (first entry is 0 dB).
pub fn energy_decay_curve(h: &[f64]) -> Vec<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for i in (0..h.len()).rev() {
        acc += h[i] * h[i];
        edc[i] = acc;
    }
    let total = edc.first().copied().unwrap_or(0.0);
    edc.iter()
        .map(|&e| if total > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY })
        .collect()
}

/// T60 from a least-squares line through the decay curve between −5 and −25 dB.
pub fn schroeder_t60(h: &[f64], fs: u32) -> Option<f64> {
    fit_t60(&energy_decay_curve(h), fs)
}

fn fit_t60(edc: &[f64], fs: u32) -> Option<f64> {
    let start = edc.iter().position(|&e| e <= -5.0)?;
    let stop = edc.iter().position(|&e| e <= -25.0)?;
    let start = start.min(stop.saturating_sub(1));
    let pts: Vec<(f64, f64)> = (start..=stop)
        .filter(|&i| edc[i].is_finite())
        .map(|i| (i as f64 / fs as f64, edc[i]))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = cov / var;
    (slope < 0.0).then(|| -60.0 / slope)
}
