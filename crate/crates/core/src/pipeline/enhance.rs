//! Corpus-level enhancement: beamformers, AuxIVA-ISS and passthrough.

use std::path::{Path, PathBuf};

use log::info;
use ndarray::Array2;
use ndarray_npy::{ReadNpyError, ReadNpyExt};
use rayon::prelude::*;

use super::config::{EnhanceMethod, EnhancementConfig, MaskSource};
use crate::beamforming::{beamform, ideal_ratio_mask, TfMask};
use crate::bss::separate_waveform;
use crate::criteria::{si_snr, DEFAULT_EPS};
use crate::manifest::{Manifest, ID_COLUMN};
use crate::wav::{read_wav, write_wav, WavFormat};
use crate::{istft, stft, Error, Result, Waveform};

pub const ENHANCED_COLUMNS: [&str; 3] = [ID_COLUMN, "enhanced", "source_index"];
pub const TARGET_COLUMN: &str = "target_reverberant";
pub const NOISE_COLUMN: &str = "noise";
pub const MIXTURE_COLUMN: &str = "mixture";
pub const REF_CHANNEL_COLUMN: &str = "ref_channel";

/// Oracle components at the array, aligned with the mixture.
#[derive(Debug, Clone, Copy)]
pub struct Oracle<'a> {
    pub target: Option<&'a Waveform>,
    pub noise: Option<&'a Waveform>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub output: Vec<f64>,
    /// Every separated source, for methods that produce several.
    pub sources: Vec<Vec<f64>>,
    pub selected: Option<usize>,
}

/// Index of the source with the highest SI-SNR against `target`, or else the most energetic.
pub fn select_source(sources: &[Vec<f64>], target: Option<&[f64]>) -> Result<usize> {
    if sources.is_empty() {
        return Err(Error::EmptyInput("separated sources"));
    }
    let scores: Vec<f64> = match target {
        Some(t) => sources.iter().map(|s| si_snr(t, s, DEFAULT_EPS)).collect::<Result<_>>()?,
        None => sources.iter().map(|s| s.iter().map(|v| v * v).sum()).collect(),
    };
    let mut best = 0;
    for (k, v) in scores.iter().enumerate() {
        if *v > scores[best] {
            best = k;
        }
    }
    Ok(best)
}

fn oracle_masks(
    cfg: &EnhancementConfig,
    oracle: &Oracle<'_>,
    ref_channel: usize,
    method: EnhanceMethod,
) -> Result<(TfMask, TfMask)> {
    let missing = |what: &str| Error::MissingInput(format!("{} with oracle masks needs the {what} component", method.name()));
    let target = oracle.target.ok_or_else(|| missing(TARGET_COLUMN))?;
    let noise = oracle.noise.ok_or_else(|| missing(NOISE_COLUMN))?;
    let s = stft(target, &cfg.stft)?;
    let n = stft(noise, &cfg.stft)?;
    Ok((ideal_ratio_mask(&s, &n, ref_channel)?, ideal_ratio_mask(&n, &s, ref_channel)?))
}

/// Enhances one multichannel mixture. `masks` overrides the oracle masks when given.
pub fn enhance_utterance(
    cfg: &EnhancementConfig,
    mixture: &Waveform,
    ref_channel: usize,
    oracle: Oracle<'_>,
    masks: Option<(TfMask, TfMask)>,
) -> Result<Enhanced> {
    if ref_channel >= mixture.num_channels() {
        return Err(Error::InvalidArgument(format!(
            "reference channel {ref_channel} out of {} channels",
            mixture.num_channels()
        )));
    }
    for part in [oracle.target, oracle.noise].into_iter().flatten() {
        mixture.check_compatible(part)?;
    }
    let len = mixture.len();
    match cfg.method {
        EnhanceMethod::Passthrough => Ok(Enhanced {
            output: mixture.channel(ref_channel).to_vec(),
            sources: Vec::new(),
            selected: None,
        }),
        EnhanceMethod::AuxivaIss => {
            let sources: Vec<Vec<f64>> = separate_waveform(mixture, &cfg.bss, ref_channel)?
                .into_iter()
                .map(|w| w.into_channels().swap_remove(0))
                .collect();
            let target = oracle.target.map(|t| t.channel(ref_channel));
            let best = select_source(&sources, target)?;
            Ok(Enhanced { output: sources[best].clone(), sources, selected: Some(best) })
        }
        EnhanceMethod::Beamformer(variant) => {
            let bf = cfg.beamformer.to_config(variant, ref_channel);
            let x = stft(mixture, &cfg.stft)?;
            let (speech, noise) = match masks {
                Some(m) => m,
                None => oracle_masks(cfg, &oracle, ref_channel, cfg.method)?,
            };
            let target_spec = match (variant.name(), oracle.target) {
                ("mfmcwf", Some(t)) => Some(stft(&t.select_channel(ref_channel)?, &cfg.stft)?),
                ("mfmcwf", None) => {
                    return Err(Error::MissingInput("mfmcwf needs the target_reverberant component".into()))
                }
                _ => None,
            };
            let y = beamform(&bf, &x, &speech, &noise, target_spec.as_ref())?;
            let out = istft(&y, &cfg.stft, len)?;
            Ok(Enhanced { output: out.into_channels().swap_remove(0), sources: Vec::new(), selected: None })
        }
    }
}

fn read_mask(path: &Path) -> Result<Array2<f64>> {
    let open = || std::fs::File::open(path).map_err(|e| Error::MissingInput(format!("mask {}: {e}", path.display())));
    let bad = |e: ReadNpyError| Error::InvalidArgument(format!("mask {}: {e}", path.display()));
    match Array2::<f64>::read_npy(open()?) {
        Ok(m) => Ok(m),
        Err(ReadNpyError::WrongDescriptor(_)) => Array2::<f32>::read_npy(open()?).map(|m| m.mapv(f64::from)).map_err(bad),
        Err(e) => Err(bad(e)),
    }
}

/// Precomputed masks keyed by utterance id; the noise mask defaults to `1 - speech`.
pub struct MaskFiles {
    manifest: Manifest,
}

impl MaskFiles {
    pub fn open(path: &Path) -> Result<Self> {
        let manifest = Manifest::read(path)?;
        manifest.column_index("speech_mask")?;
        Ok(MaskFiles { manifest })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn load(&self, id: &str) -> Result<(TfMask, TfMask)> {
        let row = self
            .manifest
            .row_of(id)
            .ok_or_else(|| Error::MissingInput(format!("no mask for utterance {id}")))?;
        let speech = TfMask::new(read_mask(&self.manifest.path(row, "speech_mask")?)?)?;
        let noise = if self.manifest.column_index("noise_mask").is_ok() {
            TfMask::new(read_mask(&self.manifest.path(row, "noise_mask")?)?)?
        } else {
            speech.complement()
        };
        Ok((speech, noise))
    }
}

fn load_optional(manifest: &Manifest, row: usize, column: &str) -> Result<Option<Waveform>> {
    if manifest.column_index(column).is_err() {
        return Ok(None);
    }
    read_wav(manifest.path(row, column)?).map(Some)
}

/// Enhances every row of a mixture manifest into `out_dir`, returning the path of the
/// enhanced manifest (`utterance_id`, `enhanced`, `source_index`).
pub fn enhance_corpus(
    manifest: &Manifest,
    cfg: &EnhancementConfig,
    mask_files: Option<&MaskFiles>,
    out_dir: &Path,
) -> Result<PathBuf> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("mixture manifest"));
    }
    manifest.column_index(MIXTURE_COLUMN)?;
    let needs_masks = matches!(cfg.method, EnhanceMethod::Beamformer(_));
    if needs_masks && cfg.mask_source == MaskSource::FromFiles {
        let files = mask_files.ok_or_else(|| Error::MissingInput("mask manifest".into()))?;
        manifest.check_aligned(files.manifest(), "mask manifest")?;
    }
    if needs_masks && cfg.mask_source == MaskSource::OracleIrm {
        for col in [TARGET_COLUMN, NOISE_COLUMN] {
            manifest.column_index(col).map_err(|_| {
                Error::MissingInput(format!("{} with oracle masks needs a {col} column", cfg.method.name()))
            })?;
        }
    }
    let has_channel = manifest.column_index(REF_CHANNEL_COLUMN).is_ok();

    let rows: Vec<Vec<String>> = (0..manifest.len())
        .into_par_iter()
        .map(|r| {
            let id = manifest.get(r, ID_COLUMN)?.to_string();
            let ref_channel = if has_channel {
                let raw = manifest.get(r, REF_CHANNEL_COLUMN)?;
                raw.parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("{id}: bad reference channel {raw:?}")))?
            } else {
                0
            };
            let mixture = read_wav(manifest.path(r, MIXTURE_COLUMN)?)?;
            let target = load_optional(manifest, r, TARGET_COLUMN)?;
            let noise = load_optional(manifest, r, NOISE_COLUMN)?;
            let masks = match (needs_masks, cfg.mask_source, mask_files) {
                (true, MaskSource::FromFiles, Some(files)) => Some(files.load(&id)?),
                _ => None,
            };
            let oracle = Oracle { target: target.as_ref(), noise: noise.as_ref() };
            let result = enhance_utterance(cfg, &mixture, ref_channel, oracle, masks).map_err(|e| match e {
                Error::NonFinite(m) => Error::NonFinite(format!("{id}: {m}")),
                Error::MissingInput(m) => Error::MissingInput(format!("{id}: {m}")),
                other => other,
            })?;
            let fs = mixture.sample_rate();
            let rel = format!("wav/{id}.wav");
            write_wav(out_dir.join(&rel), &Waveform::mono(result.output, fs)?, WavFormat::Float32)?;
            for (k, src) in result.sources.into_iter().enumerate() {
                write_wav(out_dir.join(format!("wav/{id}/src{k}.wav")), &Waveform::mono(src, fs)?, WavFormat::Float32)?;
            }
            info!("enhanced {id} with {}", cfg.method);
            let selected = result.selected.map(|k| k.to_string()).unwrap_or_else(|| "-".into());
            Ok(vec![id, rel, selected])
        })
        .collect::<Result<_>>()?;

    let mut out = Manifest::new(ENHANCED_COLUMNS.iter().map(|s| s.to_string()).collect(), out_dir)?;
    for row in rows {
        out.push(row)?;
    }
    let path = out_dir.join(crate::spatializer::MANIFEST_FILE);
    out.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::BeamformerVariant;
    use crate::synth::{laplacian_source, speech_like, white_noise};

    fn two_channel(a: &[f64], b: &[f64]) -> Waveform {
        Waveform::new(vec![a.to_vec(), b.to_vec()], 16_000).unwrap()
    }

    #[test]
    fn passthrough_copies_reference_channel() {
        let a = white_noise(4000, 1);
        let b = white_noise(4000, 2);
        let cfg = EnhancementConfig { method: EnhanceMethod::Passthrough, ..Default::default() };
        let out = enhance_utterance(&cfg, &two_channel(&a, &b), 1, Oracle { target: None, noise: None }, None).unwrap();
        assert_eq!(out.output, b);
    }

    #[test]
    fn oracle_methods_need_components() {
        let a = white_noise(4000, 1);
        let cfg = EnhancementConfig::default();
        let err = enhance_utterance(&cfg, &two_channel(&a, &a), 0, Oracle { target: None, noise: None }, None).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }

    #[test]
    fn auxiva_selects_source_matching_target() {
        let n = 32_000;
        let s1 = laplacian_source(n, 16_000, 3);
        let s2 = laplacian_source(n, 16_000, 4);
        let x0: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + 0.6 * b).collect();
        let x1: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 0.5 * a - b).collect();
        let mixture = two_channel(&x0, &x1);
        let cfg = EnhancementConfig { method: EnhanceMethod::AuxivaIss, ..Default::default() };
        for (target, other) in [(&s1, &s2), (&s2, &s1)] {
            let t = two_channel(target, target);
            let out = enhance_utterance(&cfg, &mixture, 0, Oracle { target: Some(&t), noise: None }, None).unwrap();
            assert_eq!(out.sources.len(), 2);
            let k = out.selected.unwrap();
            let best = si_snr(target, &out.sources[k], DEFAULT_EPS).unwrap();
            let rest = si_snr(target, &out.sources[1 - k], DEFAULT_EPS).unwrap();
            assert!(best > rest + 10.0, "{best} vs {rest}");
            assert!(si_snr(other, &out.sources[1 - k], DEFAULT_EPS).unwrap() > 10.0);
        }
    }

    #[test]
    fn beamformer_improves_on_oracle_toy() {
        let n = 32_000;
        let s = speech_like(n, 16_000, 5);
        let v0 = white_noise(n, 6);
        let v1 = white_noise(n, 7);
        let s1: Vec<f64> = std::iter::once(0.0).chain(s.iter().copied()).take(n).collect();
        let target = two_channel(&s, &s1);
        let noise = Waveform::new(vec![v0.iter().map(|v| 0.1 * v).collect(), v1.iter().map(|v| 0.1 * v).collect()], 16_000).unwrap();
        let mixture = target.add(&noise).unwrap();
        let base = si_snr(&s, mixture.channel(0), DEFAULT_EPS).unwrap();
        for variant in [BeamformerVariant::MvdrSouden, BeamformerVariant::Mfmcwf] {
            let cfg = EnhancementConfig { method: EnhanceMethod::Beamformer(variant), ..Default::default() };
            let out = enhance_utterance(&cfg, &mixture, 0, Oracle { target: Some(&target), noise: Some(&noise) }, None).unwrap();
            assert!(si_snr(&s, &out.output, DEFAULT_EPS).unwrap() > base + 2.0, "{variant:?}");
        }
    }

    #[test]
    fn select_falls_back_to_energy() {
        let a = vec![0.1; 10];
        let b = vec![1.0; 10];
        assert_eq!(select_source(&[a, b], None).unwrap(), 1);
    }
}
