//! Signal-level evaluation and corpus tables.

pub mod stoi;

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{ci_sdr, si_snr, DEFAULT_CI_SDR_TAPS, DEFAULT_EPS};
use crate::manifest::Manifest;
use crate::wav::read_wav;
use crate::{Error, Result};

pub use stoi::{stoi, SEGMENT_FRAMES, STOI_FS};

/// `si_snr(reference, estimate) - si_snr(reference, mixture_channel)`.
pub fn si_snr_improvement(mixture_channel: &[f64], estimate: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(si_snr(reference, estimate, DEFAULT_EPS)? - si_snr(reference, mixture_channel, DEFAULT_EPS)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Stoi,
    SiSnr,
    SiSnri,
    CiSdr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Stoi, MetricKind::SiSnr, MetricKind::SiSnri, MetricKind::CiSdr];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Stoi => "stoi",
            MetricKind::SiSnr => "si_snr",
            MetricKind::SiSnri => "si_snri",
            MetricKind::CiSdr => "ci_sdr",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            MetricKind::Stoi => "STOI",
            MetricKind::SiSnr => "SI-SNR (dB)",
            MetricKind::SiSnri => "SI-SNRi (dB)",
            MetricKind::CiSdr => "CI-SDR (dB)",
        }
    }

    fn needs_mixture(self) -> bool {
        matches!(self, MetricKind::SiSnri)
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Scores of one utterance, in the order of the table's metric list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub utterance_id: String,
    pub values: Vec<f64>,
}

/// Scores one estimate. `mixture` is only read by mixture-relative metrics.
pub fn score(
    metrics: &[MetricKind],
    reference: &[f64],
    estimate: &[f64],
    mixture: Option<&[f64]>,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    metrics
        .iter()
        .map(|m| {
            let v = match m {
                MetricKind::Stoi => stoi(reference, estimate, sample_rate)?,
                MetricKind::SiSnr => si_snr(reference, estimate, DEFAULT_EPS)?,
                MetricKind::CiSdr => ci_sdr(reference, estimate, DEFAULT_CI_SDR_TAPS, DEFAULT_EPS)?,
                MetricKind::SiSnri => {
                    let mix = mixture.ok_or_else(|| Error::MissingInput("si_snri needs the mixture".into()))?;
                    si_snr_improvement(mix, estimate, reference)?
                }
            };
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{} evaluated to {v}", m.name())));
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub metrics: Vec<MetricKind>,
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn means(&self) -> Vec<f64> {
        let n = self.rows.len().max(1) as f64;
        (0..self.metrics.len())
            .map(|j| self.rows.iter().map(|r| r.values[j]).sum::<f64>() / n)
            .collect()
    }

    pub fn mean_of(&self, metric: MetricKind) -> Option<f64> {
        let j = self.metrics.iter().position(|m| *m == metric)?;
        Some(self.means()[j])
    }

    /// Tab-separated rows sorted by id, then a `mean` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("utterance_id");
        for m in &self.metrics {
            let _ = write!(out, "\t{}", m.name());
        }
        out.push('\n');
        let mut line = |id: &str, values: &[f64]| {
            out.push_str(id);
            for v in values {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        };
        for r in &self.rows {
            line(&r.utterance_id, &r.values);
        }
        line("mean", &self.means());
        out
    }
}

/// Model-rows by metric-columns text table. PESQ is listed but never computed.
pub fn summary_table(entries: &[(String, &MetricTable)]) -> String {
    let mut metrics: Vec<MetricKind> = Vec::new();
    for (_, t) in entries {
        for m in &t.metrics {
            if !metrics.contains(m) {
                metrics.push(*m);
            }
        }
    }
    let label_w = entries.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(14);
    let mut out = format!("{:<label_w$}  {:>6}", "Model", "PESQ");
    for m in &metrics {
        let _ = write!(out, "  {:>12}", m.heading());
    }
    out.push('\n');
    for (label, table) in entries {
        let _ = write!(out, "{:<label_w$}  {:>6}", label, "n/a");
        for m in &metrics {
            match table.mean_of(*m) {
                Some(v) if *m == MetricKind::Stoi => {
                    let _ = write!(out, "  {v:>12.3}");
                }
                Some(v) => {
                    let _ = write!(out, "  {v:>12.2}");
                }
                None => {
                    let _ = write!(out, "  {:>12}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Which manifest columns hold the signals being compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalColumns {
    pub reference: String,
    pub estimate: String,
    pub mixture: String,
    /// Integer column naming the reference channel; channel 0 when absent.
    pub ref_channel: String,
}

impl Default for EvalColumns {
    fn default() -> Self {
        EvalColumns {
            reference: "target_reverberant".into(),
            estimate: "enhanced".into(),
            mixture: "mixture".into(),
            ref_channel: "ref_channel".into(),
        }
    }
}

fn channel_of(manifest: &Manifest, row: usize, column: &str, channel: usize) -> Result<(Vec<f64>, u32)> {
    let wave = read_wav(manifest.path(row, column)?)?;
    let ch = if wave.num_channels() == 1 { 0 } else { channel };
    if ch >= wave.num_channels() {
        return Err(Error::InvalidArgument(format!(
            "{column} of row {row} has {} channels, reference channel is {ch}",
            wave.num_channels()
        )));
    }
    Ok((wave.channel(ch).to_vec(), wave.sample_rate()))
}

/// Per-utterance scores of `estimates` against `references`, sorted by utterance id.
///
/// The reference and mixture are read at the row's reference channel; estimates at channel 0.
pub fn evaluate_corpus(
    references: &Manifest,
    estimates: &Manifest,
    mixtures: &Manifest,
    metrics: &[MetricKind],
    columns: &EvalColumns,
) -> Result<MetricTable> {
    evaluate(references, estimates, mixtures, metrics, columns, false)
}

/// Scores the unprocessed mixture at the reference channel (the "No processing" row).
pub fn evaluate_unprocessed(references: &Manifest, metrics: &[MetricKind], columns: &EvalColumns) -> Result<MetricTable> {
    let cols = EvalColumns { estimate: columns.mixture.clone(), ..columns.clone() };
    evaluate(references, references, references, metrics, &cols, true)
}

fn evaluate(
    references: &Manifest,
    estimates: &Manifest,
    mixtures: &Manifest,
    metrics: &[MetricKind],
    columns: &EvalColumns,
    estimate_at_ref: bool,
) -> Result<MetricTable> {
    if metrics.is_empty() {
        return Err(Error::EmptyInput("metric list"));
    }
    references.check_aligned(estimates, "estimate manifest")?;
    let need_mix = metrics.iter().any(|m| m.needs_mixture());
    if need_mix {
        references.check_aligned(mixtures, "mixture manifest")?;
    }
    let has_channel = references.column_index(&columns.ref_channel).is_ok();

    let mut ids: Vec<&str> = references.ids().collect();
    ids.sort_unstable();
    let rows = ids
        .par_iter()
        .map(|id| {
            let r = references.row_of(id).expect("aligned");
            let channel = if has_channel {
                let raw = references.get(r, &columns.ref_channel)?;
                raw.parse::<usize>()
                    .map_err(|_| Error::InvalidArgument(format!("{id}: bad reference channel {raw:?}")))?
            } else {
                0
            };
            let (reference, fs) = channel_of(references, r, &columns.reference, channel)?;
            let est_channel = if estimate_at_ref { channel } else { 0 };
            let (estimate, fs_est) =
                channel_of(estimates, estimates.row_of(id).expect("aligned"), &columns.estimate, est_channel)?;
            if fs_est != fs {
                return Err(Error::SampleRateMismatch { expected: fs, actual: fs_est });
            }
            let mixture = if need_mix {
                let (m, fs_mix) =
                    channel_of(mixtures, mixtures.row_of(id).expect("aligned"), &columns.mixture, channel)?;
                if fs_mix != fs {
                    return Err(Error::SampleRateMismatch { expected: fs, actual: fs_mix });
                }
                Some(m)
            } else {
                None
            };
            let values = score(metrics, &reference, &estimate, mixture.as_deref(), fs)
                .map_err(|e| annotate(e, id))?;
            Ok(MetricRow { utterance_id: id.to_string(), values })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricTable { metrics: metrics.to_vec(), rows })
}

fn annotate(err: Error, id: &str) -> Error {
    match err {
        Error::ShapeMismatch(m) => Error::ShapeMismatch(format!("{id}: {m}")),
        Error::TooShort(m) => Error::TooShort(format!("{id}: {m}")),
        Error::NonFinite(m) => Error::NonFinite(format!("{id}: {m}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{speech_like, white_noise};
    use crate::wav::{write_wav, WavFormat};
    use crate::Waveform;

    #[test]
    fn improvement_of_identity_is_zero() {
        let s = speech_like(16_000, 16_000, 1);
        let n = white_noise(16_000, 2);
        let mix: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + 0.1 * b).collect();
        assert_eq!(si_snr_improvement(&mix, &mix, &s).unwrap(), 0.0);
        let gain = si_snr_improvement(&mix, &s, &s).unwrap();
        assert!((gain - (60.0 - si_snr(&s, &mix, DEFAULT_EPS).unwrap())).abs() < 1e-12);
        assert!(gain > 0.0);
    }

    #[test]
    fn metric_names_parse() {
        for m in MetricKind::ALL {
            assert_eq!(m.name().parse::<MetricKind>().unwrap(), m);
        }
        assert!("pesq".parse::<MetricKind>().is_err());
    }

    fn toy_corpus(dir: &std::path::Path, ids: &[&str]) -> (Manifest, Manifest) {
        let mut refs = Manifest::new(
            vec!["utterance_id".into(), "target_reverberant".into(), "mixture".into(), "ref_channel".into()],
            dir,
        )
        .unwrap();
        let mut ests = Manifest::new(vec!["utterance_id".into(), "enhanced".into()], dir).unwrap();
        for (i, id) in ids.iter().enumerate() {
            let s = speech_like(24_000, 16_000, i as u64);
            let n = white_noise(24_000, 100 + i as u64);
            let two = |a: &[f64]| Waveform::new(vec![a.iter().map(|v| 0.5 * v).collect(), a.to_vec()], 16_000).unwrap();
            let mix: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + 0.05 * b).collect();
            let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + 0.01 * b).collect();
            write_wav(dir.join(format!("{id}_ref.wav")), &two(&s), WavFormat::Float32).unwrap();
            write_wav(dir.join(format!("{id}_mix.wav")), &two(&mix), WavFormat::Float32).unwrap();
            write_wav(dir.join(format!("{id}_est.wav")), &Waveform::mono(est, 16_000).unwrap(), WavFormat::Float32)
                .unwrap();
            refs.push(vec![id.to_string(), format!("{id}_ref.wav"), format!("{id}_mix.wav"), "1".into()]).unwrap();
            ests.push(vec![id.to_string(), format!("{id}_est.wav")]).unwrap();
        }
        (refs, ests)
    }

    #[test]
    fn corpus_rows_sorted_with_mean() {
        let dir = tempfile::tempdir().unwrap();
        let (refs, ests) = toy_corpus(dir.path(), &["c", "a", "b"]);
        let metrics = [MetricKind::SiSnr, MetricKind::SiSnri, MetricKind::Stoi];
        let table = evaluate_corpus(&refs, &ests, &refs, &metrics, &EvalColumns::default()).unwrap();
        let ids: Vec<&str> = table.rows.iter().map(|r| r.utterance_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let means = table.means();
        for j in 0..metrics.len() {
            let direct = table.rows.iter().map(|r| r.values[j]).sum::<f64>() / 3.0;
            assert!((means[j] - direct).abs() < 1e-12);
        }
        assert!(means[1] > 10.0);
        let tsv = table.to_tsv();
        assert_eq!(tsv.lines().count(), 5);
        assert!(tsv.lines().last().unwrap().starts_with("mean\t"));
        let again = evaluate_corpus(&refs, &ests, &refs, &metrics, &EvalColumns::default()).unwrap();
        assert_eq!(again.to_tsv(), tsv);
    }

    #[test]
    fn reference_against_itself() {
        let dir = tempfile::tempdir().unwrap();
        let (refs, _) = toy_corpus(dir.path(), &["a", "b"]);
        let cols = EvalColumns { estimate: "target_reverberant".into(), ..EvalColumns::default() };
        let table = evaluate_corpus(&refs, &refs, &refs, &[MetricKind::Stoi, MetricKind::SiSnr], &cols).unwrap();
        // estimates are read at channel 0, references at channel 1 (a scaled copy)
        let means = table.means();
        assert!((means[0] - 1.0).abs() < 1e-3);
        assert_eq!(means[1], 60.0);
        let summary = summary_table(&[("No processing".into(), &table)]);
        assert!(summary.contains("n/a"));
        assert!(summary.contains("No processing"));
    }

    #[test]
    fn unprocessed_has_zero_improvement() {
        let dir = tempfile::tempdir().unwrap();
        let (refs, _) = toy_corpus(dir.path(), &["a", "b"]);
        let table = evaluate_unprocessed(&refs, &[MetricKind::SiSnri], &EvalColumns::default()).unwrap();
        assert!(table.rows.iter().all(|r| r.values[0] == 0.0));
    }

    #[test]
    fn misaligned_ids_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let (refs, _) = toy_corpus(dir.path(), &["a", "b"]);
        let (_, ests) = toy_corpus(dir.path(), &["a", "z"]);
        let err = evaluate_corpus(&refs, &ests, &refs, &[MetricKind::SiSnr], &EvalColumns::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[b]") && msg.contains("[z]"), "{msg}");
    }
}
