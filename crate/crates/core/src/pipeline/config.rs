//! Pipeline configuration: one TOML file, strict keys, `SEPKIT__SECTION__KEY` overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamforming::{BeamformerConfig, BeamformerVariant};
use crate::bss::AuxIvaConfig;
use crate::criteria::MtlSpec;
use crate::metrics::MetricKind;
use crate::spatializer::SceneConstraints;
use crate::stft::StftConfig;
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "SEPKIT__";
pub const LAST_STAGE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageRange {
    pub start: u8,
    pub stop: u8,
}

impl Default for StageRange {
    fn default() -> Self {
        StageRange { start: 1, stop: LAST_STAGE }
    }
}

impl StageRange {
    /// Parses `3`, `2..4`, `2-4` or `2:4`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::Config(format!("stage range {text:?}: expected N or N..M"));
        let num = |s: &str| s.trim().parse::<u8>().map_err(|_| bad());
        let range = match text.split_once("..").or_else(|| text.split_once('-')).or_else(|| text.split_once(':')) {
            Some((a, b)) => StageRange { start: num(a)?, stop: num(b)? },
            None => {
                let n = num(text)?;
                StageRange { start: n, stop: n }
            }
        };
        range.validate()?;
        Ok(range)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.start && self.start <= self.stop && self.stop <= LAST_STAGE) {
            return Err(Error::Config(format!(
                "stages: need 1 <= start <= stop <= {LAST_STAGE}, got {}..{}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn contains(&self, stage: u8) -> bool {
        (self.start..=self.stop).contains(&stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    /// Root of every stage's outputs.
    pub work_dir: PathBuf,
    /// Clean utterances: `utterance_id<TAB>path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_manifest: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatializerConfig {
    pub sample_rate: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_noise_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffuse_noise_dir: Option<PathBuf>,
    /// Also render a test set with only the diffuse bank swapped for this one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_diffuse_dir: Option<PathBuf>,
    pub scene: SceneConstraints,
}

impl Default for SpatializerConfig {
    fn default() -> Self {
        SpatializerConfig {
            sample_rate: 16_000,
            count: None,
            point_noise_dir: None,
            diffuse_noise_dir: None,
            alt_diffuse_dir: None,
            scene: SceneConstraints::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnhanceMethod {
    Beamformer(BeamformerVariant),
    AuxivaIss,
    Passthrough,
}

impl EnhanceMethod {
    pub fn name(self) -> &'static str {
        match self {
            EnhanceMethod::Beamformer(v) => v.name(),
            EnhanceMethod::AuxivaIss => "auxiva_iss",
            EnhanceMethod::Passthrough => "passthrough",
        }
    }

    pub fn all() -> Vec<EnhanceMethod> {
        let mut all: Vec<_> = BeamformerVariant::ALL.into_iter().map(EnhanceMethod::Beamformer).collect();
        all.push(EnhanceMethod::AuxivaIss);
        all.push(EnhanceMethod::Passthrough);
        all
    }
}

impl fmt::Display for EnhanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnhanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnhanceMethod::all().into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<_> = EnhanceMethod::all().iter().map(|m| m.name()).collect();
            Error::Config(format!("enhancement.method: unknown method {s:?} (expected one of {})", names.join(", ")))
        })
    }
}

impl Serialize for EnhanceMethod {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EnhanceMethod {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e: Error| serde::de::Error::custom(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskSource {
    /// Ideal ratio masks from the simulated target and noise components.
    OracleIrm,
    /// Precomputed `.npy` masks listed in `enhancement.mask_manifest`.
    FromFiles,
}

/// Beamformer parameters; the variant comes from `enhancement.method` and the reference
/// channel from each utterance's manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformerParams {
    pub mu: f64,
    pub epsilon: f64,
    pub taps: usize,
    pub delay: usize,
    pub power_floor: f64,
    pub mask_floor: f64,
}

impl Default for BeamformerParams {
    fn default() -> Self {
        let d = BeamformerConfig::default();
        BeamformerParams {
            mu: d.mu,
            epsilon: d.epsilon,
            taps: d.taps,
            delay: d.delay,
            power_floor: d.power_floor,
            mask_floor: d.mask_floor,
        }
    }
}

impl BeamformerParams {
    pub fn to_config(&self, variant: BeamformerVariant, ref_channel: usize) -> BeamformerConfig {
        BeamformerConfig {
            variant,
            ref_channel,
            mu: self.mu,
            epsilon: self.epsilon,
            taps: self.taps,
            delay: self.delay,
            power_floor: self.power_floor,
            mask_floor: self.mask_floor,
        }
    }
}

/// 128 ms frames at 16 kHz: long enough for the per-bin rank-1 target model to hold
/// at the simulated reverberation times.
pub const BEAMFORMER_N_FFT: usize = 2048;
pub const BEAMFORMER_HOP: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnhancementConfig {
    pub method: EnhanceMethod,
    pub mask_source: MaskSource,
    /// `utterance_id<TAB>speech_mask[<TAB>noise_mask]`, `(frames, bins)` arrays.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_manifest: Option<PathBuf>,
    /// Beamformer analysis; defaults to [`BEAMFORMER_N_FFT`] / [`BEAMFORMER_HOP`].
    pub stft: StftConfig,
    pub beamformer: BeamformerParams,
    pub bss: AuxIvaConfig,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        EnhancementConfig {
            method: EnhanceMethod::Beamformer(BeamformerVariant::MvdrSouden),
            mask_source: MaskSource::OracleIrm,
            mask_manifest: None,
            stft: StftConfig::new(BEAMFORMER_N_FFT, BEAMFORMER_HOP),
            beamformer: BeamformerParams::default(),
            bss: AuxIvaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub list: Vec<MetricKind>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { list: MetricKind::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub stages: StageRange,
    pub io: IoConfig,
    #[serde(default)]
    pub spatializer: SpatializerConfig,
    #[serde(default)]
    pub enhancement: EnhancementConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Offline objective scoring of the enhanced outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_eval: Option<MtlSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `SEPKIT__A__B=value` pairs to `table` as `a.b = value`. Values are parsed as
/// TOML when possible and taken as strings otherwise.
pub fn apply_overrides<I, K, V>(table: &mut toml::Table, vars: I) -> Result<()>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            k.as_ref().strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v.as_ref().to_string()))
        })
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<&str> = key.split("__").collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!("{ENV_PREFIX}{}: empty key segment", key.to_ascii_uppercase())));
        }
        let (leaf, parents) = path.split_last().expect("non-empty split");
        let mut node = &mut *table;
        for p in parents {
            let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("{}: {p} is not a section", path.join("."))))?;
        }
        node.insert(leaf.to_string(), parse_value(&raw));
    }
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, applying overrides from `vars` before deserializing.
    pub fn parse_with<I, K, V>(text: &str, base_dir: impl Into<PathBuf>, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        apply_overrides(&mut table, vars)?;
        let mut cfg: PipelineConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        Self::parse_with(text, base_dir, std::iter::empty::<(String, String)>())
    }

    /// Reads `path`, applying `SEPKIT__*` variables from the environment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingInput(format!("config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with(&text, base, std::env::vars())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("serializing config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.stages.validate()?;
        if self.spatializer.sample_rate < crate::metrics::STOI_FS && self.metrics.list.contains(&MetricKind::Stoi) {
            return Err(Error::Config(format!(
                "spatializer.sample_rate: stoi needs at least {} Hz",
                crate::metrics::STOI_FS
            )));
        }
        self.spatializer.scene.validate()?;
        self.enhancement.stft.validate().map_err(|e| Error::Config(format!("enhancement.stft: {e}")))?;
        self.enhancement
            .beamformer
            .to_config(BeamformerVariant::MvdrSouden, 0)
            .validate()
            .map_err(|e| Error::Config(format!("enhancement.beamformer: {e}")))?;
        self.enhancement.bss.validate().map_err(|e| Error::Config(format!("enhancement.bss: {e}")))?;
        if self.enhancement.mask_source == MaskSource::FromFiles && self.enhancement.mask_manifest.is_none() {
            return Err(Error::Config("enhancement.mask_manifest: required when mask_source = \"from_files\"".into()));
        }
        if self.metrics.list.is_empty() {
            return Err(Error::Config("metrics.list: at least one metric is required".into()));
        }
        if let Some(spec) = &self.loss_eval {
            spec.validate().map_err(|e| Error::Config(format!("loss_eval: {e}")))?;
        }
        if self.io.jobs == Some(0) {
            return Err(Error::Config("io.jobs: must be at least 1".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.io.work_dir)
    }

    /// Hex SHA-256 of the settings that determine the outputs of stages up to `stage`.
    pub fn stage_hash(&self, stage: u8) -> String {
        let mut h = Sha256::new();
        let mut feed = |v: &dyn erased::Json| {
            h.update(v.json());
            h.update([0u8]);
        };
        feed(&self.io.seed);
        feed(&self.io.clean_manifest);
        feed(&self.spatializer);
        if stage >= 2 {
            feed(&self.enhancement);
        }
        if stage >= 3 {
            feed(&self.metrics);
            feed(&self.loss_eval);
        }
        hex(&h.finalize())
    }

    /// Hash of the whole normalized configuration.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex(&h.finalize())
    }
}

mod erased {
    pub trait Json {
        fn json(&self) -> Vec<u8>;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> Vec<u8> {
            serde_json::to_vec(self).expect("config serializes")
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[io]\nwork_dir = \"exp\"\n";

    #[test]
    fn defaults_and_round_trip() {
        let cfg = PipelineConfig::parse(MINIMAL, "/base").unwrap();
        assert_eq!(cfg.stages, StageRange { start: 1, stop: 4 });
        assert_eq!(cfg.enhancement.method.name(), "mvdr_souden");
        assert_eq!(cfg.work_dir(), PathBuf::from("/base/exp"));
        let text = cfg.to_toml().unwrap();
        let again = PipelineConfig::parse(&text, "/base").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = PipelineConfig::parse("[io]\nwork_dir = \"x\"\nbogus = 1\n", ".").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = PipelineConfig::parse("[io]\nwork_dir = \"x\"\n[enhancement.beamformer]\nvariant = \"mvdr_rtf\"\n", ".")
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("enhancement.beamformer") && msg.contains("variant"), "{msg}");
        let err = PipelineConfig::parse("[io]\nwork_dir = \"x\"\n[enhancement]\nmethod = \"gev\"\n", ".").unwrap_err();
        assert!(err.to_string().contains("gev"), "{err}");
    }

    #[test]
    fn env_overrides() {
        let vars = [
            ("SEPKIT__ENHANCEMENT__METHOD", "wpd_souden"),
            ("SEPKIT__IO__SEED", "7"),
            ("SEPKIT__ENHANCEMENT__BEAMFORMER__TAPS", "3"),
            ("SEPKIT__METRICS__LIST", "[\"stoi\"]"),
            ("OTHER", "ignored"),
        ];
        let cfg = PipelineConfig::parse_with(MINIMAL, ".", vars).unwrap();
        assert_eq!(cfg.enhancement.method, EnhanceMethod::Beamformer(BeamformerVariant::WpdSouden));
        assert_eq!(cfg.io.seed, 7);
        assert_eq!(cfg.enhancement.beamformer.taps, 3);
        assert_eq!(cfg.metrics.list, vec![MetricKind::Stoi]);
        let err = PipelineConfig::parse_with(MINIMAL, ".", [("SEPKIT__IO__TYPO", "1")]).unwrap_err();
        assert!(err.to_string().contains("typo"), "{err}");
    }

    #[test]
    fn stage_ranges() {
        assert_eq!(StageRange::parse("3").unwrap(), StageRange { start: 3, stop: 3 });
        assert_eq!(StageRange::parse("2..4").unwrap(), StageRange { start: 2, stop: 4 });
        assert_eq!(StageRange::parse("1-2").unwrap(), StageRange { start: 1, stop: 2 });
        assert!(StageRange::parse("3..2").is_err());
        assert!(StageRange::parse("0").is_err());
        assert!(StageRange::parse("5").is_err());
    }

    #[test]
    fn stage_hashes_track_relevant_sections() {
        let a = PipelineConfig::parse(MINIMAL, ".").unwrap();
        let mut b = a.clone();
        b.metrics.list = vec![MetricKind::SiSnr];
        assert_eq!(a.stage_hash(2), b.stage_hash(2));
        assert_ne!(a.stage_hash(3), b.stage_hash(3));
        let mut c = a.clone();
        c.io.seed = 1;
        assert_ne!(a.stage_hash(1), c.stage_hash(1));
        let mut d = a.clone();
        d.io.jobs = Some(3);
        assert_eq!(a.stage_hash(4), d.stage_hash(4));
    }

    #[test]
    fn from_files_needs_manifest() {
        let text = format!("{MINIMAL}[enhancement]\nmask_source = \"from_files\"\n");
        assert!(PipelineConfig::parse(&text, ".").unwrap_err().to_string().contains("mask_manifest"));
    }
}
