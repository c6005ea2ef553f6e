//! AuxIVA with iterative source steering.
//!
//! Each sweep visits the steering index `k` in order. The auxiliary weights are refreshed
//! from the current outputs, then every bin gets the rank-1 update
//! `W ← W − v wₖᵀ`, `Z ← Z − v zₖ`. No matrix is ever inverted.

use log::warn;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::projection::projection_back;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::stft::{istft, stft, ComplexSpectrogram, Separator, StftConfig, Waveform};

pub const BSS_N_FFT: usize = 1024;
pub const BSS_HOP: usize = 256;
/// Demixing matrices with a smaller determinant magnitude count as singular.
pub const MIN_ABS_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuxIvaConfig {
    pub n_iter: usize,
    pub contrast_eps: f64,
    /// Defaults to the channel count; fewer sources keep only the first channels.
    pub num_sources: Option<usize>,
}

impl Default for AuxIvaConfig {
    fn default() -> Self {
        Self {
            n_iter: 50,
            contrast_eps: 1e-8,
            num_sources: None,
        }
    }
}

impl AuxIvaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_eps > 0.0 && self.contrast_eps.is_finite()) {
            return Err(Error::Config(format!(
                "contrast_eps must be positive, got {}",
                self.contrast_eps
            )));
        }
        if let Some(s) = self.num_sources {
            if s < 2 {
                return Err(Error::Config(format!("num_sources must be at least 2, got {s}")));
            }
        }
        Ok(())
    }

    pub fn stft_config() -> StftConfig {
        StftConfig::new(BSS_N_FFT, BSS_HOP)
    }
}

#[derive(Debug, Clone)]
pub struct DemixingState {
    demixing: Vec<CMatrix>,
    separated: ComplexSpectrogram,
    iteration: usize,
    objective: Vec<f64>,
}

impl DemixingState {
    /// One S×S demixing matrix per bin.
    pub fn demixing(&self) -> &[CMatrix] {
        &self.demixing
    }

    /// `Z = W Y` with one channel per source.
    pub fn separated(&self) -> &ComplexSpectrogram {
        &self.separated
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Surrogate objective before the first sweep and after each one.
    pub fn objective_history(&self) -> &[f64] {
        &self.objective
    }

    pub fn min_abs_det(&self) -> f64 {
        self.demixing
            .iter()
            .map(|w| w.determinant().norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|Z − W Y|` with `W Y` recomputed from the mixture.
    pub fn consistency_error(&self, mixture: &ComplexSpectrogram) -> Result<f64> {
        let s = self.separated.channels();
        if mixture.frames() != self.separated.frames() || mixture.bins() != self.separated.bins() || mixture.channels() < s
        {
            return Err(Error::ShapeMismatch("mixture does not match demixing state".into()));
        }
        let mut worst: f64 = 0.0;
        for (f, w) in self.demixing.iter().enumerate() {
            for t in 0..mixture.frames() {
                for i in 0..s {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..s {
                        acc += w[(i, j)] * mixture.data()[[t, f, j]];
                    }
                    worst = worst.max((acc - self.separated.data()[[t, f, i]]).norm());
                }
            }
        }
        Ok(worst)
    }
}

struct Bin {
    w: CMatrix,
    /// Sources × frames.
    z: Array2<Complex64>,
}

/// Frame-wise source norms `r_s(t) = sqrt(Σ_f |z_s(t,f)|²)`, shape (sources, frames).
fn source_norms(bins: &[Bin], sources: usize, frames: usize) -> Array2<f64> {
    let mut r = bins
        .par_iter()
        .map(|b| b.z.mapv(|z| z.norm_sqr()))
        .reduce(|| Array2::zeros((sources, frames)), |a, b| a + b);
    r.mapv_inplace(f64::sqrt);
    r
}

fn objective(bins: &[Bin], norms: &Array2<f64>, frames: usize) -> f64 {
    let log_det: f64 = bins.iter().map(|b| b.w.determinant().norm_sqr().ln()).sum();
    norms.sum() - frames as f64 * log_det
}

/// One ISS step for steering index `k` in one bin. `phi` is (sources, frames).
fn steer(bin: &mut Bin, k: usize, phi: &Array2<f64>) -> std::result::Result<(), &'static str> {
    let (sources, frames) = bin.z.dim();
    let zk = bin.z.row(k).to_owned();
    let mut v = vec![Complex64::new(0.0, 0.0); sources];
    let mut scale_k = 0.0;
    for s in 0..sources {
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0;
        for t in 0..frames {
            let p = phi[[s, t]];
            num += bin.z[[s, t]] * zk[t].conj() * p;
            den += zk[t].norm_sqr() * p;
        }
        if den == 0.0 {
            // This bin of source k carries no energy; there is nothing to steer.
            return Ok(());
        }
        if s == k {
            scale_k = den;
        } else {
            v[s] = num / den;
        }
    }
    v[k] = Complex64::new(1.0 - (scale_k / frames as f64).powf(-0.5), 0.0);
    if v.iter().any(|x| !x.is_finite()) {
        return Err("non-finite steering coefficient");
    }
    let wk = bin.w.row(k).into_owned();
    for s in 0..sources {
        if v[s] == Complex64::new(0.0, 0.0) {
            continue;
        }
        for j in 0..sources {
            let delta = v[s] * wk[j];
            bin.w[(s, j)] -= delta;
        }
        for t in 0..frames {
            let delta = v[s] * zk[t];
            bin.z[[s, t]] -= delta;
        }
    }
    Ok(())
}

/// Separates an M-channel mixture into `num_sources` (default M) outputs.
///
/// The returned per-source spectrograms are the raw `Z` rows; apply [`projection_back`]
/// to restore a physical scale.
pub fn auxiva_iss(
    mixture: &ComplexSpectrogram,
    cfg: &AuxIvaConfig,
) -> Result<(Vec<ComplexSpectrogram>, DemixingState)> {
    cfg.validate()?;
    let channels = mixture.channels();
    let sources = cfg.num_sources.unwrap_or(channels);
    if sources < 2 {
        return Err(Error::InvalidArgument(format!(
            "AuxIVA needs at least 2 channels, got {channels}"
        )));
    }
    if sources > channels {
        return Err(Error::InvalidArgument(format!(
            "{sources} sources requested from {channels} channels (underdetermined)"
        )));
    }
    if sources < channels {
        warn!("AuxIVA is determined only: using the first {sources} of {channels} channels");
    }
    let (frames, num_bins) = (mixture.frames(), mixture.bins());
    if frames < sources {
        return Err(Error::TooShort(format!(
            "{frames} frames for {sources} sources"
        )));
    }
    if frames < 10 * sources {
        warn!("only {frames} frames for {sources} sources; statistics will be poor");
    }

    let mut bins: Vec<Bin> = (0..num_bins)
        .map(|f| Bin {
            w: CMatrix::identity(sources, sources),
            z: Array2::from_shape_fn((sources, frames), |(s, t)| mixture.data()[[t, f, s]]),
        })
        .collect();

    let mut history = vec![objective(&bins, &source_norms(&bins, sources, frames), frames)];
    for iteration in 0..cfg.n_iter {
        for k in 0..sources {
            let norms = source_norms(&bins, sources, frames);
            if norms.row(k).iter().all(|&r| r == 0.0) {
                return Err(Error::NonFinite(format!(
                    "AuxIVA iteration {iteration}: source {k} is all zero"
                )));
            }
            let phi = norms.mapv(|r| 0.5 / r.max(cfg.contrast_eps));
            bins.par_iter_mut()
                .enumerate()
                .try_for_each(|(f, bin)| {
                    steer(bin, k, &phi).map_err(|what| {
                        Error::NonFinite(format!("AuxIVA iteration {iteration}, bin {f}: {what}"))
                    })
                })?;
        }
        history.push(objective(&bins, &source_norms(&bins, sources, frames), frames));
    }

    let mut data = Array3::zeros((frames, num_bins, sources));
    for (f, bin) in bins.iter().enumerate() {
        for s in 0..sources {
            for t in 0..frames {
                data[[t, f, s]] = bin.z[[s, t]];
            }
        }
    }
    let separated = ComplexSpectrogram::new(data, mixture.sample_rate(), mixture.hop())?;
    let outputs = (0..sources).map(|s| separated.select_channel(s)).collect();
    let state = DemixingState {
        demixing: bins.into_iter().map(|b| b.w).collect(),
        separated,
        iteration: cfg.n_iter,
        objective: history,
    };
    Ok((outputs, state))
}

/// STFT, AuxIVA-ISS, projection back onto `ref_channel`, inverse STFT.
pub fn separate_waveform(mixture: &Waveform, cfg: &AuxIvaConfig, ref_channel: usize) -> Result<Vec<Waveform>> {
    let stft_cfg = AuxIvaConfig::stft_config();
    let spec = stft(mixture, &stft_cfg)?;
    let sep = AuxIvaSeparator {
        config: cfg.clone(),
        ref_channel,
        num_sources: cfg.num_sources.unwrap_or(mixture.num_channels()),
    };
    sep.separate(&spec)?
        .iter()
        .map(|s| istft(s, &stft_cfg, mixture.len()))
        .collect()
}

/// AuxIVA-ISS followed by projection back, as a pipeline separator.
#[derive(Debug, Clone)]
pub struct AuxIvaSeparator {
    pub config: AuxIvaConfig,
    pub ref_channel: usize,
    pub num_sources: usize,
}

impl Separator for AuxIvaSeparator {
    fn num_sources(&self) -> usize {
        self.num_sources
    }

    fn separate(&self, mixture: &ComplexSpectrogram) -> Result<Vec<ComplexSpectrogram>> {
        let cfg = AuxIvaConfig {
            num_sources: Some(self.num_sources),
            ..self.config.clone()
        };
        let (outputs, _) = auxiva_iss(mixture, &cfg)?;
        projection_back(&outputs, mixture, self.ref_channel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::si_snr;
    use crate::synth::{laplacian_source, speech_like};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: u32 = 16000;

    fn sdr(r: &[f64], e: &[f64]) -> f64 {
        si_snr(r, e, 1e-8).unwrap()
    }

    fn best_pair_si_snr(refs: &[Vec<f64>], ests: &[Waveform]) -> (f64, bool) {
        let direct = (sdr(&refs[0], ests[0].channel(0)) + sdr(&refs[1], ests[1].channel(0))) / 2.0;
        let swapped = (sdr(&refs[0], ests[1].channel(0)) + sdr(&refs[1], ests[0].channel(0))) / 2.0;
        (direct.max(swapped), direct >= swapped)
    }

    fn mix(sources: &[Vec<f64>], a: [[f64; 2]; 2]) -> Waveform {
        let n = sources[0].len();
        let chans = (0..2)
            .map(|m| (0..n).map(|i| a[m][0] * sources[0][i] + a[m][1] * sources[1][i]).collect())
            .collect();
        Waveform::new(chans, FS).unwrap()
    }

    #[test]
    fn zero_iterations_is_identity() {
        let srcs = vec![laplacian_source(8000, FS, 1), laplacian_source(8000, FS, 2)];
        let spec = stft(&mix(&srcs, [[1.0, 0.5], [0.3, 1.0]]), &AuxIvaConfig::stft_config()).unwrap();
        let cfg = AuxIvaConfig { n_iter: 0, ..Default::default() };
        let (out, state) = auxiva_iss(&spec, &cfg).unwrap();
        assert_eq!(state.iteration(), 0);
        assert!(state.demixing().iter().all(|w| *w == CMatrix::identity(2, 2)));
        assert_eq!(out[1].channel_view(0), spec.channel_view(1));
    }

    #[test]
    fn already_separated_input_stays_separated() {
        let srcs = vec![laplacian_source(3 * FS as usize, FS, 3), laplacian_source(3 * FS as usize, FS, 4)];
        let wave = mix(&srcs, [[1.0, 0.0], [0.0, 1.0]]);
        let cfg = AuxIvaConfig { n_iter: 20, ..Default::default() };
        // Projection back onto each channel in turn recovers that channel's source.
        let out0 = separate_waveform(&wave, &cfg, 0).unwrap();
        let out1 = separate_waveform(&wave, &cfg, 1).unwrap();
        let (score, identity) = best_pair_si_snr(&srcs, &[out0[0].clone(), out1[1].clone()]);
        assert!(identity);
        assert!(score >= 30.0, "{score}");
    }

    #[test]
    fn orthogonal_mixture_of_speech_like_sources_is_unmixed() {
        let n = 5 * FS as usize;
        let srcs = vec![speech_like(n, FS, 5), speech_like(n, FS, 6)];
        let th: f64 = 0.6;
        let wave = mix(&srcs, [[th.cos(), -th.sin()], [th.sin(), th.cos()]]);
        let out = separate_waveform(&wave, &AuxIvaConfig::default(), 0).unwrap();
        let (after, _) = best_pair_si_snr(&srcs, &out);
        let before = (sdr(&srcs[0], wave.channel(0)) + sdr(&srcs[1], wave.channel(0))) / 2.0;
        assert!(after - before >= 10.0, "before {before} after {after}");
    }

    fn random_spec(seed: u64, frames: usize, bins: usize, channels: usize) -> ComplexSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array3::from_shape_fn((frames, bins, channels), |_| {
            // Heavy-tailed magnitudes give the contrast something to work with.
            let g: f64 = rng.random_range(0.01f64..1.0).powi(3);
            Complex64::new(rng.random_range(-1.0..1.0) * g, rng.random_range(-1.0..1.0) * g)
        });
        ComplexSpectrogram::new(data, FS, BSS_HOP).unwrap()
    }

    #[test]
    fn objective_is_monotone_and_state_consistent() {
        for seed in 0..4 {
            let spec = random_spec(seed, 200, 17, 3);
            let cfg = AuxIvaConfig { n_iter: 100, ..Default::default() };
            let (_, state) = auxiva_iss(&spec, &cfg).unwrap();
            for pair in state.objective_history().windows(2) {
                assert!(pair[1] <= pair[0] + 1e-6 * pair[0].abs().max(1.0), "{pair:?}");
            }
            assert!(state.min_abs_det() > MIN_ABS_DET);
            assert!(state.consistency_error(&spec).unwrap() < 1e-8);
        }
    }

    #[test]
    fn overdetermined_input_uses_leading_channels() {
        let spec = random_spec(9, 80, 5, 4);
        let cfg = AuxIvaConfig { n_iter: 3, num_sources: Some(2), ..Default::default() };
        let (out, state) = auxiva_iss(&spec, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(state.demixing()[0].nrows(), 2);
        assert!(state.consistency_error(&spec).unwrap() < 1e-8);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let mut spec = random_spec(10, 50, 4, 2);
        spec.data_mut().slice_mut(ndarray::s![.., .., 1]).fill(Complex64::new(0.0, 0.0));
        let err = auxiva_iss(&spec, &AuxIvaConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite(ref m) if m.contains("iteration 0")), "{err}");
        let mono = random_spec(11, 50, 4, 1);
        assert!(auxiva_iss(&mono, &AuxIvaConfig::default()).is_err());
        let cfg = AuxIvaConfig { num_sources: Some(3), ..Default::default() };
        assert!(auxiva_iss(&random_spec(12, 50, 4, 2), &cfg).is_err());
    }
}
