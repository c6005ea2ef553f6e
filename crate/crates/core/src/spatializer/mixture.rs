//! Rendering one noisy-reverberant mixture from a sampled scene.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diffuse::gen_diffuse;
use super::rir::{simulate_rir, RirOptions};
use super::scene::SceneSpec;
use crate::dsp::fft_convolve;
use crate::error::{Error, Result};
use crate::stft::Waveform;
use crate::wav::read_wav_at;

/// Crossfade used when a point-noise clip has to be looped.
pub const LOOP_CROSSFADE_SECS: f64 = 0.05;
pub const REFERENCE_MIC: usize = 0;
const POINT_STREAM: u64 = 1;
const DIFFUSE_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct NoiseClip {
    pub name: String,
    pub samples: Vec<f64>,
}

/// A set of mono noise clips at one sample rate.
#[derive(Debug, Clone)]
pub struct NoiseBank {
    clips: Vec<NoiseClip>,
    sample_rate: u32,
}

impl NoiseBank {
    pub fn new(clips: Vec<NoiseClip>, sample_rate: u32) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::EmptyInput("noise bank"));
        }
        if let Some(c) = clips.iter().find(|c| c.samples.is_empty()) {
            return Err(Error::EmptyInput(if c.name.is_empty() { "noise clip" } else { "named noise clip" }));
        }
        Ok(Self { clips, sample_rate })
    }

    /// Loads every `.wav` in `dir` (sorted by file name); multichannel files keep channel 0.
    pub fn load_dir(dir: &Path, sample_rate: u32) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingInput(format!("noise directory {} does not exist", dir.display())));
        }
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::MissingInput(format!("no .wav files in {}", dir.display())));
        }
        let clips = paths
            .iter()
            .map(|p| {
                let wave = read_wav_at(p, sample_rate)?;
                Ok(NoiseClip {
                    name: p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
                    samples: wave.channel(0).to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(clips, sample_rate)
    }

    pub fn clips(&self) -> &[NoiseClip] {
        &self.clips
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipUse {
    pub clip: String,
    pub offset: usize,
    pub looped: bool,
    pub gain: f64,
}

#[derive(Debug, Clone)]
pub struct MixtureRecord {
    pub utterance_id: String,
    pub mixture: Waveform,
    pub target_reverberant: Waveform,
    /// Direct-path target at the reference mic.
    pub target_anechoic: Waveform,
    /// Sum of the scaled point-noise images.
    pub point_noise: Waveform,
    pub diffuse_noise: Waveform,
    pub noise_sum: Waveform,
    pub scene: SceneSpec,
    pub point_clips: Vec<ClipUse>,
    pub diffuse_clip: ClipUse,
}

/// Gain that puts `noise` at `snr_db` below `signal`: `sqrt(P_s / (P_n 10^(snr/10)))`.
pub fn snr_gain(signal: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    let (ps, pn) = (power(signal), power(noise));
    if pn <= 0.0 {
        return Err(Error::InvalidArgument("noise has zero power".into()));
    }
    if ps <= 0.0 {
        return Err(Error::InvalidArgument("signal has zero power".into()));
    }
    Ok((ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Crops a random window from a long clip, or loops a short one with a linear crossfade.
pub fn fit_length(clip: &[f64], len: usize, fs: u32, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, usize, bool)> {
    if clip.len() >= len {
        let offset = rng.random_range(0..=clip.len() - len);
        return Ok((clip[offset..offset + len].to_vec(), offset, false));
    }
    let fade = ((LOOP_CROSSFADE_SECS * fs as f64).round() as usize).max(1);
    if clip.len() <= 2 * fade {
        return Err(Error::TooShort(format!(
            "noise clip of {} samples cannot be looped with a {fade}-sample crossfade",
            clip.len()
        )));
    }
    let mut out = clip.to_vec();
    while out.len() < len {
        let start = out.len() - fade;
        for k in 0..fade {
            let w = (k as f64 + 0.5) / fade as f64;
            out[start + k] = out[start + k] * (1.0 - w) + clip[k] * w;
        }
        out.extend_from_slice(&clip[fade..]);
    }
    out.truncate(len);
    Ok((out, 0, true))
}

fn convolve_all(signal: &[f64], responses: &[Vec<f64>], fs: u32) -> Result<Waveform> {
    let len = signal.len();
    let chans: Vec<Vec<f64>> = responses
        .par_iter()
        .map(|h| {
            let mut y = fft_convolve(signal, h);
            y.truncate(len);
            y
        })
        .collect();
    Waveform::new(chans, fs)
}

/// Renders the mixture for `scene`: reverberant target, point noises at their SNRs and a
/// diffuse field at its SNR, all measured against the reverberant target at mic 0.
pub fn build_mixture(
    utterance_id: &str,
    utterance: &Waveform,
    scene: &SceneSpec,
    point_bank: &NoiseBank,
    diffuse_bank: &NoiseBank,
) -> Result<MixtureRecord> {
    let fs = utterance.sample_rate();
    for rate in [point_bank.sample_rate(), diffuse_bank.sample_rate()] {
        if rate != fs {
            return Err(Error::SampleRateMismatch { expected: fs, actual: rate });
        }
    }
    if utterance.num_channels() != 1 {
        return Err(Error::InvalidArgument(format!(
            "utterance {utterance_id} has {} channels, expected mono",
            utterance.num_channels()
        )));
    }
    if scene.snr_point.len() != scene.noise_positions.len() {
        return Err(Error::InvalidArgument("one point SNR per noise position is required".into()));
    }
    let clean = utterance.channel(0);
    let len = clean.len();

    let target_rir = simulate_rir(&scene.room, &scene.target_pos, &scene.array, fs, RirOptions::default())?;
    let target_reverberant = convolve_all(clean, target_rir.responses(), fs)?;
    let direct = simulate_rir(&scene.room, &scene.target_pos, &scene.array, fs, RirOptions::direct())?;
    let target_anechoic = convolve_all(clean, &direct.responses()[REFERENCE_MIC..=REFERENCE_MIC], fs)?;
    let reference = target_reverberant.channel(REFERENCE_MIC);

    let mut point_rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    point_rng.set_stream(POINT_STREAM);
    let mut point_noise = Waveform::zeros(scene.array.num_mics(), len, fs)?;
    let mut point_clips = Vec::with_capacity(scene.noise_positions.len());
    for (pos, &snr) in scene.noise_positions.iter().zip(&scene.snr_point) {
        let clip = &point_bank.clips()[point_rng.random_range(0..point_bank.clips().len())];
        let (signal, offset, looped) = fit_length(&clip.samples, len, fs, &mut point_rng)?;
        let rir = simulate_rir(&scene.room, pos, &scene.array, fs, RirOptions::default())?;
        let image = convolve_all(&signal, rir.responses(), fs)?;
        let gain = snr_gain(reference, image.channel(REFERENCE_MIC), snr)?;
        point_noise = point_noise.add(&image.scaled(gain))?;
        point_clips.push(ClipUse {
            clip: clip.name.clone(),
            offset,
            looped,
            gain,
        });
    }

    let mut diffuse_rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    diffuse_rng.set_stream(DIFFUSE_STREAM);
    let need = scene.array.num_mics() * len;
    let eligible: Vec<&NoiseClip> =
        diffuse_bank.clips().iter().filter(|c| c.samples.len() >= need).collect();
    if eligible.is_empty() {
        return Err(Error::TooShort(format!(
            "no diffuse clip has the {need} samples needed for {} disjoint segments",
            scene.array.num_mics()
        )));
    }
    let clip = eligible[diffuse_rng.random_range(0..eligible.len())];
    let offset = diffuse_rng.random_range(0..=clip.samples.len() - need);
    let field = gen_diffuse(&clip.samples[offset..offset + need], &scene.array, fs, len, scene.room.sound_speed)?;
    let gain = snr_gain(reference, field.channel(REFERENCE_MIC), scene.snr_diffuse)?;
    let diffuse_noise = field.scaled(gain);
    let diffuse_clip = ClipUse {
        clip: clip.name.clone(),
        offset,
        looped: false,
        gain,
    };

    let noise_sum = point_noise.add(&diffuse_noise)?;
    let mixture = target_reverberant.add(&noise_sum)?;
    Ok(MixtureRecord {
        utterance_id: utterance_id.to_string(),
        mixture,
        target_reverberant,
        target_anechoic,
        point_noise,
        diffuse_noise,
        noise_sum,
        scene: scene.clone(),
        point_clips,
        diffuse_clip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::si_snr;
    use crate::spatializer::{sample_scene, SceneConstraints};
    use crate::synth::{speech_like, white_noise};

    const FS: u32 = 16000;

    fn banks() -> (NoiseBank, NoiseBank) {
        let point = NoiseBank::new(
            (0..3)
                .map(|i| NoiseClip {
                    name: format!("p{i}"),
                    samples: white_noise(12000 + 9000 * i, 100 + i as u64),
                })
                .collect(),
            FS,
        )
        .unwrap();
        let diffuse = NoiseBank::new(
            vec![NoiseClip {
                name: "d0".into(),
                samples: white_noise(4 * 2 * FS as usize + 500, 7),
            }],
            FS,
        )
        .unwrap();
        (point, diffuse)
    }

    fn db(signal: &[f64], noise: &[f64]) -> f64 {
        let p = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        10.0 * (p(signal) / p(noise)).log10()
    }

    #[test]
    fn snr_gain_formula() {
        let s = vec![1.0, -1.0, 1.0, -1.0];
        assert!((snr_gain(&s, &s, 10.0).unwrap() - 0.316227766).abs() < 1e-8);
        assert!((snr_gain(&s, &s, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let n = white_noise(1000, 3);
        let g = snr_gain(&s.repeat(250), &n, 7.5).unwrap();
        let scaled: Vec<f64> = n.iter().map(|v| v * g).collect();
        assert!((db(&s.repeat(250), &scaled) - 7.5).abs() < 1e-6);
        assert!(snr_gain(&s, &[0.0; 4], 3.0).is_err());
    }

    #[test]
    fn looping_crossfades_and_cropping_stays_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clip: Vec<f64> = (0..3000).map(|i| i as f64).collect();
        let (crop, offset, looped) = fit_length(&clip, 1000, FS, &mut rng).unwrap();
        assert!(!looped);
        assert_eq!(crop[0], offset as f64);
        let (long, _, looped) = fit_length(&clip, 10000, FS, &mut rng).unwrap();
        assert!(looped && long.len() == 10000);
        assert_eq!(long[..2200], clip[..2200]);
        assert!(fit_length(&clip[..1500], 10000, FS, &mut rng).is_err());
    }

    #[test]
    fn mixture_decomposes_and_snrs_are_met() {
        let (point, diffuse) = banks();
        let scene = sample_scene(3, &SceneConstraints::default()).unwrap();
        let utt = Waveform::mono(speech_like(2 * FS as usize, FS, 11), FS).unwrap();
        let rec = build_mixture("u1", &utt, &scene, &point, &diffuse).unwrap();
        for m in 0..4 {
            let rebuilt: Vec<f64> = rec
                .target_reverberant
                .channel(m)
                .iter()
                .zip(rec.noise_sum.channel(m))
                .map(|(a, b)| a + b)
                .collect();
            let err: f64 = rebuilt.iter().zip(rec.mixture.channel(m)).map(|(a, b)| (a - b).powi(2)).sum();
            let norm: f64 = rec.mixture.channel(m).iter().map(|v| v * v).sum();
            assert!((err / norm).sqrt() < 1e-6);
        }
        let reference = rec.target_reverberant.channel(0);
        assert!((db(reference, rec.diffuse_noise.channel(0)) - scene.snr_diffuse).abs() < 0.01);
        // Re-render each point noise alone and re-measure its SNR.
        for (k, _) in scene.noise_positions.iter().enumerate() {
            let mut solo = scene.clone();
            solo.noise_positions.truncate(k + 1);
            solo.snr_point.truncate(k + 1);
            let upto = build_mixture("u1", &utt, &solo, &point, &diffuse).unwrap();
            let single = if k == 0 {
                upto.point_noise.channel(0).to_vec()
            } else {
                let mut prev = scene.clone();
                prev.noise_positions.truncate(k);
                prev.snr_point.truncate(k);
                let before = build_mixture("u1", &utt, &prev, &point, &diffuse).unwrap();
                upto.point_noise.channel(0).iter().zip(before.point_noise.channel(0)).map(|(a, b)| a - b).collect()
            };
            assert!((db(reference, &single) - scene.snr_point[k]).abs() < 0.01, "noise {k}");
        }
        assert_eq!(rec.target_anechoic.num_channels(), 1);
    }

    #[test]
    fn near_noiseless_control_is_limited_by_reverberation_only() {
        let (point, diffuse) = banks();
        let mut scene = sample_scene(4, &SceneConstraints::default()).unwrap();
        scene.snr_point.iter_mut().for_each(|s| *s = 60.0);
        scene.snr_diffuse = 60.0;
        let utt = Waveform::mono(speech_like(2 * FS as usize, FS, 12), FS).unwrap();
        let rec = build_mixture("u2", &utt, &scene, &point, &diffuse).unwrap();
        let vs_reverb = si_snr(rec.target_reverberant.channel(0), rec.mixture.channel(0), 1e-8).unwrap();
        assert!(vs_reverb > 50.0, "{vs_reverb}");
        let vs_dry = si_snr(rec.target_anechoic.channel(0), rec.mixture.channel(0), 1e-8).unwrap();
        assert!(vs_dry < vs_reverb);
    }

    #[test]
    fn rendering_is_deterministic_and_diffuse_swap_is_isolated() {
        let (point, diffuse) = banks();
        let scene = sample_scene(5, &SceneConstraints::default()).unwrap();
        let utt = Waveform::mono(speech_like(FS as usize, FS, 13), FS).unwrap();
        let a = build_mixture("u", &utt, &scene, &point, &diffuse).unwrap();
        let b = build_mixture("u", &utt, &scene, &point, &diffuse).unwrap();
        assert_eq!(a.mixture, b.mixture);
        let other = NoiseBank::new(
            vec![NoiseClip {
                name: "alt".into(),
                samples: white_noise(4 * FS as usize + 10, 99),
            }],
            FS,
        )
        .unwrap();
        let c = build_mixture("u", &utt, &scene, &point, &other).unwrap();
        assert_eq!(a.point_noise, c.point_noise);
        assert_eq!(a.target_reverberant, c.target_reverberant);
        assert_ne!(a.diffuse_noise, c.diffuse_noise);
    }
}
