use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

/// Overlap-add normalization floor.
pub const WINDOW_SUM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Hann,
    SqrtHann,
    Rectangular,
}

impl WindowKind {
    /// Periodic window of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos();
                match self {
                    WindowKind::Hann => hann,
                    WindowKind::SqrtHann => hann.sqrt(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub win_length: usize,
    pub window: WindowKind,
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(512, 128)
    }
}

impl StftConfig {
    /// Hann-windowed, centered config with `win_length == n_fft`.
    pub fn new(n_fft: usize, hop: usize) -> Self {
        Self {
            n_fft,
            hop,
            win_length: n_fft,
            window: WindowKind::Hann,
            center: true,
        }
    }

    pub fn with_window(mut self, window: WindowKind) -> Self {
        self.window = window;
        self
    }

    pub fn with_center(mut self, center: bool) -> Self {
        self.center = center;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "n_fft must be a power of two >= 2, got {}",
                self.n_fft
            )));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return Err(Error::InvalidArgument(format!(
                "win_length {} must be in 1..={}",
                self.win_length, self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.win_length {
            return Err(Error::InvalidArgument(format!(
                "hop {} must be in 1..=win_length ({})",
                self.hop, self.win_length
            )));
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Analysis window zero-padded (centered) to `n_fft`.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n_fft];
        let offset = (self.n_fft - self.win_length) / 2;
        w[offset..offset + self.win_length].copy_from_slice(&self.window.coefficients(self.win_length));
        w
    }

    fn left_pad(&self) -> usize {
        if self.center {
            self.n_fft / 2
        } else {
            0
        }
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if self.center {
            1 + len.div_ceil(self.hop)
        } else {
            1 + len.saturating_sub(self.n_fft).div_ceil(self.hop)
        }
    }

    /// Smallest steady-state sum of squared windows over one hop period.
    pub fn min_window_sum(&self) -> (usize, f64) {
        let w = self.window();
        (0..self.hop)
            .map(|o| {
                let s: f64 = w.iter().skip(o).step_by(self.hop).map(|x| x * x).sum();
                (o, s)
            })
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
    }
}

/// Complex time-frequency tensor laid out frames x bins x channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Array3<Complex64>,
    sample_rate: u32,
    hop: usize,
}

impl ComplexSpectrogram {
    pub fn new(data: Array3<Complex64>, sample_rate: u32, hop: usize) -> Result<Self> {
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram entries".into()));
        }
        Ok(Self {
            data,
            sample_rate,
            hop,
        })
    }

    pub fn zeros(frames: usize, bins: usize, channels: usize, sample_rate: u32, hop: usize) -> Self {
        Self {
            data: Array3::zeros((frames, bins, channels)),
            sample_rate,
            hop,
        }
    }

    /// Builds a one-channel spectrogram from a frames x bins matrix.
    pub fn from_single(data: Array2<Complex64>, sample_rate: u32, hop: usize) -> Result<Self> {
        Self::new(data.insert_axis(Axis(2)), sample_rate, hop)
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array3<Complex64> {
        self.data
    }

    /// frames x bins view of one channel.
    pub fn channel_view(&self, channel: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(2), channel)
    }

    pub fn select_channel(&self, channel: usize) -> ComplexSpectrogram {
        Self {
            data: self.channel_view(channel).to_owned().insert_axis(Axis(2)),
            sample_rate: self.sample_rate,
            hop: self.hop,
        }
    }

    /// Same shape and frame grid.
    pub fn same_grid(&self, other: &ComplexSpectrogram) -> bool {
        self.frames() == other.frames() && self.bins() == other.bins() && self.hop == other.hop
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexSpectrogram {
        Self {
            data: self.data.mapv(f),
            sample_rate: self.sample_rate,
            hop: self.hop,
        }
    }
}

/// Short-time Fourier transform of every channel, keeping the `n_fft/2 + 1` non-negative bins.
pub fn stft(wave: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    if wave.is_empty() {
        return Err(Error::EmptyInput("stft input waveform"));
    }
    let n_fft = cfg.n_fft;
    let bins = cfg.num_bins();
    let frames = cfg.num_frames(wave.len());
    let pad = cfg.left_pad();
    let window = cfg.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut data = Array3::<Complex64>::zeros((frames, bins, wave.num_channels()));
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (c, samples) in wave.channels().iter().enumerate() {
        for t in 0..frames {
            let start = t * cfg.hop;
            for (n, slot) in buf.iter_mut().enumerate() {
                let idx = (start + n).checked_sub(pad);
                let x = idx.and_then(|i| samples.get(i)).copied().unwrap_or(0.0);
                *slot = Complex64::new(x * window[n], 0.0);
            }
            fft.process(&mut buf);
            for k in 0..bins {
                data[[t, k, c]] = buf[k];
            }
            data[[t, 0, c]].im = 0.0;
            data[[t, bins - 1, c]].im = 0.0;
        }
    }
    ComplexSpectrogram::new(data, wave.sample_rate(), cfg.hop)
}

/// Inverse STFT by weighted overlap-add, normalized by the squared-window sum.
pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, out_length: usize) -> Result<Waveform> {
    cfg.validate()?;
    if spec.bins() != cfg.num_bins() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, config expects {}",
            spec.bins(),
            cfg.num_bins()
        )));
    }
    let (offset, min_sum) = cfg.min_window_sum();
    if min_sum < WINDOW_SUM_FLOOR {
        return Err(Error::WindowSumUnderflow {
            offset,
            floor: WINDOW_SUM_FLOOR,
        });
    }
    let n_fft = cfg.n_fft;
    let bins = cfg.num_bins();
    let frames = spec.frames();
    let pad = cfg.left_pad();
    let window = cfg.window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let total = (frames.max(1) - 1) * cfg.hop + n_fft;

    let mut wsum = vec![0.0; total];
    for t in 0..frames {
        for (n, w) in window.iter().enumerate() {
            wsum[t * cfg.hop + n] += w * w;
        }
    }

    let mut channels = Vec::with_capacity(spec.channels());
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for c in 0..spec.channels() {
        let mut acc = vec![0.0; total];
        for t in 0..frames {
            for k in 0..bins {
                buf[k] = spec.data()[[t, k, c]];
            }
            for k in bins..n_fft {
                buf[k] = buf[n_fft - k].conj();
            }
            buf[0].im = 0.0;
            buf[bins - 1].im = 0.0;
            ifft.process(&mut buf);
            let start = t * cfg.hop;
            for n in 0..n_fft {
                acc[start + n] += buf[n].re / n_fft as f64 * window[n];
            }
        }
        let out: Vec<f64> = (0..out_length)
            .map(|i| {
                let p = i + pad;
                if p < total {
                    acc[p] / wsum[p].max(WINDOW_SUM_FLOOR)
                } else {
                    0.0
                }
            })
            .collect();
        channels.push(out);
    }
    Waveform::new(channels, spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn zero_waveform_gives_zero_spectrogram() {
        let wave = Waveform::zeros(1, 16000, 16000).unwrap();
        let cfg = StftConfig::default();
        let spec = stft(&wave, &cfg).unwrap();
        assert_eq!(spec.bins(), 257);
        assert_eq!(spec.frames(), 1 + 16000 / 128);
        assert!(spec.data().iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec, &cfg, 16000).unwrap();
        assert!(back.channel(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bin_centered_tone_is_concentrated() {
        // Analytic DFT: a cosine at k*fs/N over a full rectangular frame lands only in bin k.
        let n_fft = 256;
        let k = 17;
        let samples: Vec<f64> = (0..n_fft * 4)
            .map(|n| (2.0 * PI * k as f64 * n as f64 / n_fft as f64).cos())
            .collect();
        let cfg = StftConfig {
            n_fft,
            hop: n_fft,
            win_length: n_fft,
            window: WindowKind::Rectangular,
            center: false,
        };
        let spec = stft(&Waveform::mono(samples, 16000).unwrap(), &cfg).unwrap();
        assert_eq!(spec.frames(), 4);
        for t in 0..spec.frames() {
            let peak = spec.data()[[t, k, 0]].norm();
            assert!((peak - n_fft as f64 / 2.0).abs() < 1e-8);
            for b in (0..spec.bins()).filter(|&b| b != k) {
                assert!(spec.data()[[t, b, 0]].norm() / peak < 1e-10);
            }
        }
    }

    #[test]
    fn dc_and_nyquist_are_real() {
        let spec = stft(&Waveform::mono(noise(3000, 1), 16000).unwrap(), &StftConfig::default()).unwrap();
        for t in 0..spec.frames() {
            assert_eq!(spec.data()[[t, 0, 0]].im, 0.0);
            assert_eq!(spec.data()[[t, 256, 0]].im, 0.0);
        }
    }

    #[test]
    fn round_trip_white_noise() {
        let x = noise(10_007, 2);
        for hop in [256, 128] {
            for window in [WindowKind::Hann, WindowKind::SqrtHann] {
                let cfg = StftConfig::new(512, hop).with_window(window);
                let wave = Waveform::mono(x.clone(), 16000).unwrap();
                let y = istft(&stft(&wave, &cfg).unwrap(), &cfg, x.len()).unwrap();
                assert!(rel_err(y.channel(0), &x) < 1e-6, "hop {hop} {window:?}");
            }
        }
    }

    #[test]
    fn multichannel_transform_is_per_channel() {
        let a = noise(2000, 3);
        let b = noise(2000, 4);
        let cfg = StftConfig::default();
        let both = stft(&Waveform::new(vec![a.clone(), b.clone()], 16000).unwrap(), &cfg).unwrap();
        let only_b = stft(&Waveform::mono(b, 16000).unwrap(), &cfg).unwrap();
        assert_eq!(both.channels(), 2);
        assert_eq!(both.select_channel(1), only_b);
    }

    #[test]
    fn rejects_empty_and_bad_hop() {
        let cfg = StftConfig::default();
        assert!(matches!(
            stft(&Waveform::mono(vec![], 16000).unwrap(), &cfg),
            Err(Error::EmptyInput(_))
        ));
        let bad = StftConfig {
            hop: 600,
            ..StftConfig::default()
        };
        assert!(stft(&Waveform::mono(vec![0.0; 1000], 16000).unwrap(), &bad).is_err());
        let not_pow2 = StftConfig::new(500, 100);
        assert!(not_pow2.validate().is_err());
    }

    #[test]
    fn hann_without_overlap_underflows() {
        let cfg = StftConfig::new(256, 256);
        let spec = ComplexSpectrogram::zeros(4, 129, 1, 16000, 256);
        assert!(matches!(
            istft(&spec, &cfg, 512),
            Err(Error::WindowSumUnderflow { .. })
        ));
    }

    #[test]
    fn istft_output_length_is_exact() {
        let cfg = StftConfig::default();
        let spec = stft(&Waveform::mono(noise(1000, 5), 16000).unwrap(), &cfg).unwrap();
        assert_eq!(istft(&spec, &cfg, 700).unwrap().len(), 700);
        let long = istft(&spec, &cfg, 5000).unwrap();
        assert_eq!(long.len(), 5000);
        assert!(long.channel(0)[2000..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn parseval_for_cola_configs() {
        // Energy away from the padded edges, so every sample sees the steady-state window sum.
        let n_fft = 512;
        let mut x = vec![0.0; n_fft];
        x.extend(noise(8192, 6));
        x.extend(vec![0.0; n_fft]);
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        for (cfg, cola) in [
            (StftConfig::new(n_fft, n_fft / 4), 1.5),
            (StftConfig::new(n_fft, n_fft / 2).with_window(WindowKind::SqrtHann), 1.0),
        ] {
            let spec = stft(&Waveform::mono(x.clone(), 16000).unwrap(), &cfg).unwrap();
            let bins = spec.bins();
            let mut freq_energy = 0.0;
            for t in 0..spec.frames() {
                for k in 0..bins {
                    let weight = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                    freq_energy += weight * spec.data()[[t, k, 0]].norm_sqr();
                }
            }
            let normalized = freq_energy / (n_fft as f64 * cola);
            assert!(((normalized - time_energy) / time_energy).abs() < 1e-4);
        }
    }
}
