//! Synthetic toy corpus: modulated-noise utterances, synthetic noise banks and a config.

use std::path::{Path, PathBuf};

use crate::manifest::{Manifest, ID_COLUMN};
use crate::spatializer::SceneConstraints;
use crate::synth::{derive_seed, speech_like, white_noise};
use crate::wav::{write_wav, WavFormat};
use crate::{Error, Result, Waveform};

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub clean_manifest: PathBuf,
    pub point_noise_dir: PathBuf,
    pub diffuse_noise_dir: PathBuf,
    pub alt_diffuse_dir: PathBuf,
    /// Ready-to-run pipeline config with `work_dir = "exp"` next to it.
    pub config: PathBuf,
}

fn one_pole(x: &[f64], a: f64) -> Vec<f64> {
    let mut y = 0.0;
    x.iter()
        .map(|v| {
            y = a * y + v;
            y * (1.0 - a)
        })
        .collect()
}

fn save(path: &Path, samples: Vec<f64>, fs: u32) -> Result<()> {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let scaled = samples.into_iter().map(|v| 0.5 * v / peak).collect();
    write_wav(path, &Waveform::mono(scaled, fs)?, WavFormat::Float32)
}

/// Writes `count` utterances of `secs` seconds under `dir`, with point, diffuse and
/// alternate diffuse noise banks and a `config.toml` using them.
pub fn write_toy_corpus(dir: &Path, count: usize, secs: f64, seed: u64, fs: u32) -> Result<ToyCorpus> {
    if count == 0 {
        return Err(Error::EmptyInput("toy corpus"));
    }
    if !(secs > 0.5) {
        return Err(Error::InvalidArgument(format!("utterances must be longer than 0.5 s, got {secs}")));
    }
    let len = (secs * fs as f64).round() as usize;
    let rate = fs as f64;
    let mut stream = 0u64;
    let mut next_seed = || {
        stream += 1;
        derive_seed(seed, stream)
    };

    let mut manifest = Manifest::new(vec![ID_COLUMN.into(), "path".into()], dir)?;
    for i in 0..count {
        let id = format!("toy{i:03}");
        let rel = format!("clean/{id}.wav");
        save(&dir.join(&rel), speech_like(len, fs, next_seed()), fs)?;
        manifest.push(vec![id, rel])?;
    }
    let clean_manifest = dir.join("clean.tsv");
    manifest.write(&clean_manifest)?;

    let noise_len = (4.0 * rate) as usize;
    let point_dir = dir.join("noise_point");
    save(&point_dir.join("white.wav"), white_noise(noise_len, next_seed()), fs)?;
    save(&point_dir.join("brown.wav"), one_pole(&white_noise(noise_len, next_seed()), 0.98), fs)?;
    let mut babble = vec![0.0; noise_len];
    for _ in 0..4 {
        for (b, v) in babble.iter_mut().zip(speech_like(noise_len, fs, next_seed())) {
            *b += v;
        }
    }
    save(&point_dir.join("babble.wav"), babble, fs)?;

    // the diffuse generator takes one disjoint segment per mic of the default array
    let mics = SceneConstraints::default().mic_count;
    let diffuse_len = (8.0 * rate).max((mics * len) as f64 + rate) as usize;
    let diffuse_dir = dir.join("noise_diffuse");
    let alt_dir = dir.join("noise_diffuse_alt");
    for k in 0..2 {
        save(&diffuse_dir.join(format!("white{k}.wav")), white_noise(diffuse_len, next_seed()), fs)?;
        save(&alt_dir.join(format!("lowpass{k}.wav")), one_pole(&white_noise(diffuse_len, next_seed()), 0.9), fs)?;
    }

    let config = dir.join("config.toml");
    let text = format!(
        "[io]\nwork_dir = \"exp\"\nclean_manifest = \"clean.tsv\"\nseed = {seed}\n\n\
         [spatializer]\nsample_rate = {fs}\npoint_noise_dir = \"noise_point\"\ndiffuse_noise_dir = \"noise_diffuse\"\n\n\
         [enhancement]\nmethod = \"mvdr_souden\"\nmask_source = \"oracle_irm\"\n\n\
         [metrics]\nlist = [\"stoi\", \"si_snr\", \"si_snri\", \"ci_sdr\"]\n"
    );
    std::fs::write(&config, text).map_err(|e| Error::io(&config, e))?;
    Ok(ToyCorpus {
        clean_manifest,
        point_noise_dir: point_dir,
        diffuse_noise_dir: diffuse_dir,
        alt_diffuse_dir: alt_dir,
        config,
    })
}
