//! Staged batch runner: 1 simulate, 2 enhance, 3 score, 4 pack.
//!
//! Stages only talk through manifests on disk. Each stage directory gets a `.complete`
//! marker, written last, recording the settings hash and the fingerprint of its inputs;
//! a stage whose marker matches is skipped. Run logs go to `logs/`, one new file per run.

pub mod config;
pub mod enhance;
mod toy;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::criteria::{mtl_combine, LossBatch, MtlSpec};
use crate::manifest::{Manifest, ID_COLUMN};
use crate::metrics::{evaluate_corpus, evaluate_unprocessed, summary_table, EvalColumns, MetricTable};
use crate::spatializer::{spatialize_corpus, CorpusRequest, NoiseBank, ALT_DIR, MANIFEST_FILE};
use crate::wav::read_wav;
use crate::{Error, Result};

pub use config::{
    apply_overrides, BeamformerParams, EnhanceMethod, EnhancementConfig, IoConfig, MaskSource, MetricsConfig,
    PipelineConfig, SpatializerConfig, StageRange, BEAMFORMER_HOP, BEAMFORMER_N_FFT, ENV_PREFIX, LAST_STAGE,
};
pub use enhance::{enhance_corpus, enhance_utterance, select_source, Enhanced, MaskFiles, Oracle, ENHANCED_COLUMNS};
pub use toy::{write_toy_corpus, ToyCorpus};

pub const MARKER_FILE: &str = ".complete";
pub const DATA_DIR: &str = "data";
pub const ENHANCED_DIR: &str = "enhanced";
pub const SCORES_DIR: &str = "scores";
pub const RESULTS_DIR: &str = "results";
pub const LOG_DIR: &str = "logs";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const BASELINE_FILE: &str = "no_processing.tsv";
pub const LOSS_FILE: &str = "loss_eval.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const RESULTS_FILE: &str = "results.json";

/// Process exit status for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        return 4;
    }
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::PartialOutput(_) => 2,
        Error::BudgetExceeded(_) => 4,
        _ => 3,
    }
}

pub fn stage_name(stage: u8) -> &'static str {
    match stage {
        1 => "simulate",
        2 => "enhance",
        3 => "score",
        4 => "pack",
        _ => "unknown",
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Replaces the configured stage range.
    pub stages: Option<StageRange>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u8,
    pub name: String,
    pub outcome: StageOutcome,
    pub dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub stages: Vec<StageRecord>,
    pub log: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Marker {
    stage: u8,
    settings: String,
    inputs: String,
    outputs: Vec<String>,
}

/// Paths of every stage's outputs under the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
    pub method: EnhanceMethod,
}

impl Layout {
    pub fn new(cfg: &PipelineConfig) -> Self {
        Layout { root: cfg.work_dir(), method: cfg.enhancement.method }
    }

    pub fn stage_dir(&self, stage: u8) -> PathBuf {
        match stage {
            1 => self.root.join(DATA_DIR),
            2 => self.root.join(ENHANCED_DIR).join(self.method.name()),
            3 => self.root.join(SCORES_DIR).join(self.method.name()),
            _ => self.root.join(RESULTS_DIR).join(self.method.name()),
        }
    }

    pub fn data_manifest(&self) -> PathBuf {
        self.stage_dir(1).join(MANIFEST_FILE)
    }

    pub fn alt_data_manifest(&self) -> PathBuf {
        self.stage_dir(1).join(ALT_DIR).join(MANIFEST_FILE)
    }

    /// `("", main set)` plus `("alt", ...)` when the alternate set was rendered.
    fn sets(&self) -> Vec<(&'static str, PathBuf)> {
        let mut sets = vec![("", self.data_manifest())];
        if self.alt_data_manifest().is_file() {
            sets.push((ALT_DIR, self.alt_data_manifest()));
        }
        sets
    }
}

fn sub(dir: &Path, set: &str) -> PathBuf {
    if set.is_empty() {
        dir.to_path_buf()
    } else {
        dir.join(set)
    }
}

fn sha_file(h: &mut Sha256, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    h.update(path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(&bytes);
    Ok(())
}

fn fingerprint(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        sha_file(&mut h, p)?;
    }
    Ok(config::hex(&h.finalize()))
}

fn sorted_wavs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::MissingInput(format!("noise directory {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    out.sort();
    Ok(out)
}

/// Files a stage reads; their contents make up the stage's input fingerprint.
fn stage_inputs(cfg: &PipelineConfig, layout: &Layout, stage: u8) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::new();
    match stage {
        1 => {
            let sp = &cfg.spatializer;
            let clean = cfg
                .io
                .clean_manifest
                .as_ref()
                .ok_or_else(|| Error::Config("io.clean_manifest: required for stage 1".into()))?;
            inputs.push(cfg.resolve(clean));
            for (key, dir) in [("spatializer.point_noise_dir", &sp.point_noise_dir), ("spatializer.diffuse_noise_dir", &sp.diffuse_noise_dir)] {
                let dir = dir.as_ref().ok_or_else(|| Error::Config(format!("{key}: required for stage 1")))?;
                inputs.extend(sorted_wavs(&cfg.resolve(dir))?);
            }
            if let Some(dir) = &sp.alt_diffuse_dir {
                inputs.extend(sorted_wavs(&cfg.resolve(dir))?);
            }
        }
        2 => {
            inputs.push(layout.stage_dir(1).join(MARKER_FILE));
            for (_, m) in layout.sets() {
                inputs.push(m);
            }
            if cfg.enhancement.mask_source == MaskSource::FromFiles {
                if let Some(m) = &cfg.enhancement.mask_manifest {
                    inputs.push(cfg.resolve(m));
                }
            }
        }
        3 => {
            inputs.push(layout.stage_dir(2).join(MARKER_FILE));
            for (set, m) in layout.sets() {
                inputs.push(m);
                inputs.push(sub(&layout.stage_dir(2), set).join(MANIFEST_FILE));
            }
        }
        _ => {
            inputs.push(layout.stage_dir(3).join(MARKER_FILE));
            for (set, _) in layout.sets() {
                let dir = sub(&layout.stage_dir(3), set);
                inputs.push(dir.join(METRICS_FILE));
                inputs.push(dir.join(BASELINE_FILE));
            }
        }
    }
    Ok(inputs)
}

fn read_marker(dir: &Path) -> Option<Marker> {
    let text = std::fs::read_to_string(dir.join(MARKER_FILE)).ok()?;
    serde_json::from_str(&text).ok()
}

fn list_outputs(dir: &Path) -> Result<Vec<String>> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else if path.file_name().is_some_and(|n| n != MARKER_FILE) {
                out.push(path.strip_prefix(base).expect("inside base").to_string_lossy().into_owned());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

enum Gate {
    Run,
    Skip,
}

fn gate(dir: &Path, expected: &Marker, force: bool) -> Result<Gate> {
    let has_content = dir.is_dir() && std::fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if !has_content {
        return Ok(Gate::Run);
    }
    if force {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        return Ok(Gate::Run);
    }
    let Some(marker) = read_marker(dir) else {
        return Err(Error::PartialOutput(format!(
            "{} has no completion marker (interrupted run?); rerun with --force",
            dir.display()
        )));
    };
    if marker.settings != expected.settings || marker.inputs != expected.inputs {
        return Err(Error::PartialOutput(format!(
            "{} was produced from different settings or inputs; rerun with --force",
            dir.display()
        )));
    }
    if let Some(missing) = marker.outputs.iter().find(|p| !dir.join(p).is_file()) {
        return Err(Error::PartialOutput(format!("{} is missing {missing}; rerun with --force", dir.display())));
    }
    Ok(Gate::Skip)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn simulate(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let sp = &cfg.spatializer;
    let dir = |d: &Option<PathBuf>| d.as_ref().map(|d| cfg.resolve(d));
    let point = NoiseBank::load_dir(&dir(&sp.point_noise_dir).expect("checked"), sp.sample_rate)?;
    let diffuse = NoiseBank::load_dir(&dir(&sp.diffuse_noise_dir).expect("checked"), sp.sample_rate)?;
    let alt = match dir(&sp.alt_diffuse_dir) {
        Some(d) => Some(NoiseBank::load_dir(&d, sp.sample_rate)?),
        None => None,
    };
    let clean = cfg.resolve(cfg.io.clean_manifest.as_ref().expect("checked"));
    spatialize_corpus(&CorpusRequest {
        manifest_in: &clean,
        point_bank: &point,
        diffuse_bank: &diffuse,
        alt_diffuse_bank: alt.as_ref(),
        out_dir: out,
        seed: cfg.io.seed,
        count: sp.count,
        constraints: &sp.scene,
        sample_rate: sp.sample_rate,
    })?;
    Ok(())
}

fn enhance(cfg: &PipelineConfig, layout: &Layout, out: &Path) -> Result<()> {
    let masks = match (&cfg.enhancement.mask_source, &cfg.enhancement.mask_manifest) {
        (MaskSource::FromFiles, Some(m)) => Some(MaskFiles::open(&cfg.resolve(m))?),
        _ => None,
    };
    for (set, manifest) in layout.sets() {
        let manifest = Manifest::read(&manifest)?;
        enhance_corpus(&manifest, &cfg.enhancement, masks.as_ref(), &sub(out, set))?;
    }
    Ok(())
}

fn loss_table(spec: &MtlSpec, refs: &Manifest, ests: &Manifest) -> Result<String> {
    let cols = EvalColumns::default();
    let mut ids: Vec<&str> = refs.ids().collect();
    ids.sort_unstable();
    let names: Vec<String> = spec.objectives.iter().map(|o| o.name()).collect();
    let mut out = format!("{ID_COLUMN}\ttotal\t{}\n", names.join("\t"));
    let mut sums = vec![0.0; names.len() + 1];
    for id in &ids {
        let r = refs.row_of(id).expect("aligned");
        let channel: usize = refs.get(r, &cols.ref_channel).ok().and_then(|c| c.parse().ok()).unwrap_or(0);
        let pick = |w: crate::Waveform, ch: usize| w.channel(if w.num_channels() == 1 { 0 } else { ch }).to_vec();
        let reference = pick(read_wav(refs.path(r, &cols.reference)?)?, channel);
        let mixture = pick(read_wav(refs.path(r, &cols.mixture)?)?, channel);
        let estimate = pick(read_wav(ests.path(ests.row_of(id).expect("aligned"), &cols.estimate)?)?, 0);
        let batch = LossBatch {
            references: vec![reference],
            estimates: vec![estimate],
            mixtures: vec![mixture],
            ..LossBatch::default()
        };
        let report = mtl_combine(spec, &batch)?;
        let mut values = vec![report.total];
        values.extend(report.breakdown.iter().map(|b| b.report.value));
        for (s, v) in sums.iter_mut().zip(&values) {
            *s += v;
        }
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&format!("{id}\t{}\n", cells.join("\t")));
    }
    let n = ids.len().max(1) as f64;
    let cells: Vec<String> = sums.iter().map(|v| format!("{:.6}", v / n)).collect();
    out.push_str(&format!("mean\t{}\n", cells.join("\t")));
    Ok(out)
}

fn score(cfg: &PipelineConfig, layout: &Layout, out: &Path) -> Result<()> {
    let cols = EvalColumns::default();
    for (set, manifest) in layout.sets() {
        let refs = Manifest::read(&manifest)?;
        let ests = Manifest::read(sub(&layout.stage_dir(2), set).join(MANIFEST_FILE))?;
        let table = evaluate_corpus(&refs, &ests, &refs, &cfg.metrics.list, &cols)?;
        let baseline = evaluate_unprocessed(&refs, &cfg.metrics.list, &cols)?;
        let dir = sub(out, set);
        write_text(&dir.join(METRICS_FILE), &table.to_tsv())?;
        write_text(&dir.join(BASELINE_FILE), &baseline.to_tsv())?;
        if let Some(spec) = &cfg.loss_eval {
            write_text(&dir.join(LOSS_FILE), &loss_table(spec, &refs, &ests)?)?;
        }
    }
    Ok(())
}

/// Reads a table written by [`MetricTable::to_tsv`] back, dropping the mean row.
pub fn read_metric_table(path: &Path) -> Result<MetricTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyInput("metric table"))?;
    let metrics = header
        .split('\t')
        .skip(1)
        .map(str::parse)
        .collect::<Result<Vec<crate::metrics::MetricKind>>>()?;
    let mut rows = Vec::new();
    for line in lines {
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        if id == "mean" {
            continue;
        }
        let values = cells
            .map(|c| c.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("{}: bad value {c:?}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(crate::metrics::MetricRow { utterance_id: id, values });
    }
    Ok(MetricTable { metrics, rows })
}

#[derive(Debug, Serialize)]
struct SetResult {
    set: String,
    utterances: usize,
    metrics: Vec<String>,
    no_processing: Vec<f64>,
    enhanced: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct PackedResults {
    method: String,
    seed: u64,
    settings: String,
    version: String,
    sets: Vec<SetResult>,
}

fn pack(cfg: &PipelineConfig, layout: &Layout, out: &Path) -> Result<()> {
    let mut summary = String::new();
    let mut sets = Vec::new();
    for (set, _) in layout.sets() {
        let dir = sub(&layout.stage_dir(3), set);
        let baseline = read_metric_table(&dir.join(BASELINE_FILE))?;
        let table = read_metric_table(&dir.join(METRICS_FILE))?;
        let title = if set.is_empty() { "test".to_string() } else { format!("test ({set})") };
        summary.push_str(&format!("== {title}: {} utterances ==\n", table.rows.len()));
        summary.push_str(&summary_table(&[
            ("No processing".to_string(), &baseline),
            (cfg.enhancement.method.name().to_string(), &table),
        ]));
        summary.push('\n');
        let round = |v: Vec<f64>| v.into_iter().map(|x| (x * 1e6).round() / 1e6).collect();
        sets.push(SetResult {
            set: if set.is_empty() { "test".into() } else { set.to_string() },
            utterances: table.rows.len(),
            metrics: table.metrics.iter().map(|m| m.name().to_string()).collect(),
            no_processing: round(baseline.means()),
            enhanced: round(table.means()),
        });
    }
    let packed = PackedResults {
        method: cfg.enhancement.method.name().to_string(),
        seed: cfg.io.seed,
        settings: cfg.stage_hash(4),
        version: env!("CARGO_PKG_VERSION").to_string(),
        sets,
    };
    write_text(&out.join(SUMMARY_FILE), &summary)?;
    let json = serde_json::to_string_pretty(&packed).map_err(|e| Error::Config(format!("results: {e}")))?;
    write_text(&out.join(RESULTS_FILE), &json)?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    Ok(())
}

fn run_stage(cfg: &PipelineConfig, layout: &Layout, stage: u8, force: bool) -> Result<StageRecord> {
    let dir = layout.stage_dir(stage);
    let inputs = stage_inputs(cfg, layout, stage)?;
    let expected = Marker {
        stage,
        settings: cfg.stage_hash(stage),
        inputs: fingerprint(&inputs)?,
        outputs: Vec::new(),
    };
    let record = |outcome| StageRecord { stage, name: stage_name(stage).to_string(), outcome, dir: dir.clone() };
    if let Gate::Skip = gate(&dir, &expected, force)? {
        info!("stage {stage} ({}) is complete, skipping", stage_name(stage));
        return Ok(record(StageOutcome::Skipped));
    }
    info!("stage {stage} ({}) -> {}", stage_name(stage), dir.display());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    match stage {
        1 => simulate(cfg, &dir)?,
        2 => enhance(cfg, layout, &dir)?,
        3 => score(cfg, layout, &dir)?,
        _ => pack(cfg, layout, &dir)?,
    }
    let marker = Marker { outputs: list_outputs(&dir)?, ..expected };
    let json = serde_json::to_string_pretty(&marker).map_err(|e| Error::Config(format!("marker: {e}")))?;
    write_text(&dir.join(MARKER_FILE), &json)?;
    Ok(record(StageOutcome::Ran))
}

#[derive(Debug, Serialize)]
struct RunLog<'a> {
    started_unix: u64,
    finished_unix: u64,
    config_hash: String,
    seed: u64,
    version: &'static str,
    jobs: usize,
    stages: &'a [StageRecord],
    error: Option<String>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_log(root: &Path, log: &RunLog<'_>) -> Result<PathBuf> {
    let dir = root.join(LOG_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut n = 0;
    let path = loop {
        let p = dir.join(format!("run-{}-{n}.json", log.started_unix));
        if !p.exists() {
            break p;
        }
        n += 1;
    };
    let json = serde_json::to_string_pretty(log).map_err(|e| Error::Config(format!("run log: {e}")))?;
    write_text(&path, &json)?;
    Ok(path)
}

/// Runs the selected stages in order inside a pool of `io.jobs` threads.
pub fn run(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let stages = opts.stages.unwrap_or(cfg.stages);
    stages.validate()?;
    let layout = Layout::new(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.io.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("io.jobs: {e}")))?;
    let started = unix_now();
    let mut records = Vec::new();
    let result = pool.install(|| -> Result<()> {
        for stage in stages.start..=stages.stop {
            records.push(run_stage(cfg, &layout, stage, opts.force)?);
        }
        Ok(())
    });
    if let Err(e) = &result {
        warn!("pipeline failed: {e}");
    }
    std::fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    let log = write_log(
        &layout.root,
        &RunLog {
            started_unix: started,
            finished_unix: unix_now(),
            config_hash: cfg.config_hash(),
            seed: cfg.io.seed,
            version: env!("CARGO_PKG_VERSION"),
            jobs: pool.current_num_threads(),
            stages: &records,
            error: result.as_ref().err().map(|e| e.to_string()),
        },
    )?;
    result?;
    Ok(RunReport { stages: records, log })
}
