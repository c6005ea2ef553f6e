//! Spatializing a whole manifest of clean utterances.

use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mixture::{build_mixture, ClipUse, MixtureRecord, NoiseBank, REFERENCE_MIC};
use super::scene::{sample_scene, SceneConstraints, SceneSpec};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ID_COLUMN};
use crate::synth::derive_seed;
use crate::wav::{read_wav_at, write_wav, WavFormat};

pub const MIXTURE_COLUMNS: [&str; 6] = [
    ID_COLUMN,
    "mixture",
    "target_reverberant",
    "target_anechoic",
    "noise",
    "ref_channel",
];
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const METADATA_FILE: &str = "metadata.jsonl";
/// Subdirectory holding the alternate-diffuse test set.
pub const ALT_DIR: &str = "alt";

pub struct CorpusRequest<'a> {
    pub manifest_in: &'a Path,
    pub point_bank: &'a NoiseBank,
    pub diffuse_bank: &'a NoiseBank,
    /// Renders a second copy of every mixture with only the diffuse bank swapped.
    pub alt_diffuse_bank: Option<&'a NoiseBank>,
    pub out_dir: &'a Path,
    pub seed: u64,
    pub count: Option<usize>,
    pub constraints: &'a SceneConstraints,
    pub sample_rate: u32,
}

#[derive(Debug, Clone)]
pub struct CorpusOutput {
    pub manifest: PathBuf,
    pub alt_manifest: Option<PathBuf>,
    pub utterances: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetadataRecord {
    pub utterance_id: String,
    pub index: usize,
    pub utterance_seed: u64,
    pub source: String,
    pub scene: SceneSpec,
    pub point_noises: Vec<ClipUse>,
    pub diffuse_noise: ClipUse,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("utterance id {id:?} is not a safe file name")))
    }
}

fn write_record(rec: &MixtureRecord, root: &Path) -> Result<Vec<String>> {
    let rel = |name: &str| format!("wav/{}/{name}.wav", rec.utterance_id);
    let parts = [
        ("mixture", &rec.mixture),
        ("target_reverberant", &rec.target_reverberant),
        ("target_anechoic", &rec.target_anechoic),
        ("noise", &rec.noise_sum),
    ];
    let mut row = vec![rec.utterance_id.clone()];
    for (name, wave) in parts {
        write_wav(root.join(rel(name)), wave, WavFormat::Float32)?;
        row.push(rel(name));
    }
    row.push(REFERENCE_MIC.to_string());
    Ok(row)
}

fn metadata_line(rec: &MixtureRecord, index: usize, source: &str) -> Result<String> {
    let meta = MetadataRecord {
        utterance_id: rec.utterance_id.clone(),
        index,
        utterance_seed: rec.scene.rng_seed,
        source: source.to_string(),
        scene: rec.scene.clone(),
        point_noises: rec.point_clips.clone(),
        diffuse_noise: rec.diffuse_clip.clone(),
    };
    serde_json::to_string(&meta).map_err(|e| Error::Config(format!("metadata serialization: {e}")))
}

struct Rendered {
    row: Vec<String>,
    meta: String,
    alt: Option<(Vec<String>, String)>,
}

fn write_outputs(dir: &Path, rows: Vec<Vec<String>>, meta: Vec<String>) -> Result<PathBuf> {
    let mut manifest = Manifest::new(MIXTURE_COLUMNS.iter().map(|s| s.to_string()).collect(), dir)?;
    for row in rows {
        manifest.push(row)?;
    }
    let path = dir.join(MANIFEST_FILE);
    manifest.write(&path)?;
    let mut text = meta.join("\n");
    text.push('\n');
    let meta_path = dir.join(METADATA_FILE);
    std::fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(path)
}

/// One mixture per manifest entry. Utterance `i` draws its scene and noises from a seed
/// derived from `(seed, i)`, so the result does not depend on thread scheduling.
pub fn spatialize_corpus(req: &CorpusRequest<'_>) -> Result<CorpusOutput> {
    let input = Manifest::read(req.manifest_in)?;
    let count = req.count.unwrap_or(input.len());
    if count > input.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {count} utterances, manifest has {}",
            input.len()
        )));
    }
    if count == 0 {
        return Err(Error::EmptyInput("input manifest"));
    }
    let path_col = input.columns().get(1).cloned().ok_or_else(|| Error::MissingInput("path column".into()))?;
    let alt_dir = req.out_dir.join(ALT_DIR);

    let rendered: Vec<Rendered> = (0..count)
        .into_par_iter()
        .map(|i| {
            let id = input.get(i, ID_COLUMN)?.to_string();
            check_id(&id)?;
            let source = input.path(i, &path_col)?;
            let utterance = read_wav_at(&source, req.sample_rate)?;
            let scene = sample_scene(derive_seed(req.seed, i as u64), req.constraints)?;
            let rec = build_mixture(&id, &utterance, &scene, req.point_bank, req.diffuse_bank)?;
            let source_name = input.get(i, &path_col)?;
            let row = write_record(&rec, req.out_dir)?;
            let meta = metadata_line(&rec, i, source_name)?;
            let alt = match req.alt_diffuse_bank {
                Some(bank) => {
                    let alt_rec = build_mixture(&id, &utterance, &scene, req.point_bank, bank)?;
                    Some((write_record(&alt_rec, &alt_dir)?, metadata_line(&alt_rec, i, source_name)?))
                }
                None => None,
            };
            info!("spatialized {id}");
            Ok(Rendered { row, meta, alt })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(count);
    let mut metas = Vec::with_capacity(count);
    let mut alt_rows = Vec::new();
    let mut alt_metas = Vec::new();
    for r in rendered {
        rows.push(r.row);
        metas.push(r.meta);
        if let Some((row, meta)) = r.alt {
            alt_rows.push(row);
            alt_metas.push(meta);
        }
    }
    let manifest = write_outputs(req.out_dir, rows, metas)?;
    let alt_manifest = match req.alt_diffuse_bank {
        Some(_) => Some(write_outputs(&alt_dir, alt_rows, alt_metas)?),
        None => None,
    };
    Ok(CorpusOutput {
        manifest,
        alt_manifest,
        utterances: count,
    })
}
