use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    fixed_wrap, mixit_wrap, pit_wrap, CriterionKind, CriterionParams, CriterionSpec, LossReport,
};
use crate::error::{Error, Result};
use crate::stft::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WrapperKind {
    Fixed,
    Pit,
    Mixit,
}

/// One weighted objective: `{wrapper, criterion, params, weight}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtlEntry {
    pub wrapper: WrapperKind,
    pub criterion: CriterionKind,
    #[serde(default)]
    pub params: CriterionParams,
    pub weight: f64,
}

impl MtlEntry {
    pub fn spec(&self) -> CriterionSpec {
        CriterionSpec {
            kind: self.criterion,
            params: self.params,
        }
    }

    pub fn name(&self) -> String {
        let wrapper = match self.wrapper {
            WrapperKind::Fixed => "fixed",
            WrapperKind::Pit => "pit",
            WrapperKind::Mixit => "mixit",
        };
        format!("{wrapper}:{}", self.criterion.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtlSpec {
    pub objectives: Vec<MtlEntry>,
}

impl MtlSpec {
    pub fn validate(&self) -> Result<()> {
        if self.objectives.is_empty() {
            return Err(Error::Config("loss spec needs at least one objective".into()));
        }
        for entry in &self.objectives {
            if !entry.weight.is_finite() || entry.weight < 0.0 {
                return Err(Error::Config(format!(
                    "objective {} has invalid weight {}",
                    entry.name(),
                    entry.weight
                )));
            }
            entry.spec().validate()?;
        }
        Ok(())
    }
}

/// Everything an objective may need; each criterion reads the fields of its own domain.
#[derive(Debug, Clone, Default)]
pub struct LossBatch {
    pub references: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
    /// Input mixtures, for the MixIT wrapper.
    pub mixtures: Vec<Vec<f64>>,
    pub reference_spectra: Vec<ComplexSpectrogram>,
    pub estimate_spectra: Vec<ComplexSpectrogram>,
    pub reference_masks: Vec<Array2<f64>>,
    pub estimate_masks: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveResult {
    pub name: String,
    pub weight: f64,
    pub report: LossReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtlReport {
    /// `sum_i weight_i * value_i`, lower is better.
    pub total: f64,
    pub breakdown: Vec<ObjectiveResult>,
}

fn evaluate(entry: &MtlEntry, batch: &LossBatch) -> Result<LossReport> {
    let spec = entry.spec();
    match (entry.criterion, entry.wrapper) {
        (CriterionKind::SiSnr | CriterionKind::Snr | CriterionKind::CiSdr, WrapperKind::Fixed) => {
            fixed_wrap::<[f64], _, _>(&spec, &batch.references, &batch.estimates)
        }
        (CriterionKind::SiSnr | CriterionKind::Snr | CriterionKind::CiSdr, WrapperKind::Pit) => {
            pit_wrap::<[f64], _, _>(&spec, &batch.references, &batch.estimates)
        }
        (CriterionKind::SiSnr | CriterionKind::Snr | CriterionKind::CiSdr, WrapperKind::Mixit) => {
            mixit_wrap(&spec, &batch.mixtures, &batch.estimates)
        }
        (CriterionKind::MseSpectrum, WrapperKind::Fixed) => {
            fixed_wrap::<ComplexSpectrogram, _, _>(&spec, &batch.reference_spectra, &batch.estimate_spectra)
        }
        (CriterionKind::MseSpectrum, WrapperKind::Pit) => {
            pit_wrap::<ComplexSpectrogram, _, _>(&spec, &batch.reference_spectra, &batch.estimate_spectra)
        }
        (CriterionKind::MseMask, WrapperKind::Fixed) => {
            fixed_wrap::<Array2<f64>, _, _>(&spec, &batch.reference_masks, &batch.estimate_masks)
        }
        (CriterionKind::MseMask, WrapperKind::Pit) => {
            pit_wrap::<Array2<f64>, _, _>(&spec, &batch.reference_masks, &batch.estimate_masks)
        }
        (kind, WrapperKind::Mixit) => Err(Error::InvalidArgument(format!(
            "mixit wraps waveform criteria only, not {}",
            kind.name()
        ))),
    }
}

/// Weighted sum of every objective in `spec`, with the per-objective reports.
pub fn mtl_combine(spec: &MtlSpec, batch: &LossBatch) -> Result<MtlReport> {
    spec.validate()?;
    let mut total = 0.0;
    let mut breakdown = Vec::with_capacity(spec.objectives.len());
    for entry in &spec.objectives {
        let report = evaluate(entry, batch)?;
        total += entry.weight * report.value;
        breakdown.push(ObjectiveResult {
            name: entry.name(),
            weight: entry.weight,
            report,
        });
    }
    Ok(MtlReport { total, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::white_noise;

    fn mask_batch(diff: f64) -> LossBatch {
        LossBatch {
            reference_masks: vec![Array2::zeros((4, 5))],
            estimate_masks: vec![Array2::from_elem((4, 5), diff)],
            ..LossBatch::default()
        }
    }

    fn entry(wrapper: WrapperKind, criterion: CriterionKind, weight: f64) -> MtlEntry {
        MtlEntry {
            wrapper,
            criterion,
            params: CriterionParams::default(),
            weight,
        }
    }

    #[test]
    fn single_entry_equals_objective() {
        let batch = LossBatch {
            references: vec![white_noise(300, 1)],
            estimates: vec![white_noise(300, 2)],
            ..LossBatch::default()
        };
        let spec = MtlSpec {
            objectives: vec![entry(WrapperKind::Pit, CriterionKind::SiSnr, 1.0)],
        };
        let rep = mtl_combine(&spec, &batch).unwrap();
        let direct = pit_wrap::<[f64], _, _>(&spec.objectives[0].spec(), &batch.references, &batch.estimates).unwrap();
        assert_eq!(rep.total, direct.value);
    }

    #[test]
    fn weighted_sum_of_constructed_values() {
        // Mask differences of sqrt(2) and sqrt(3) give MSE 2.0 and 3.0.
        let mut batch = mask_batch(2f64.sqrt());
        batch.reference_spectra = vec![ComplexSpectrogram::zeros(4, 5, 1, 16000, 128)];
        batch.estimate_spectra = vec![ComplexSpectrogram::zeros(4, 5, 1, 16000, 128)
            .map(|_| num_complex::Complex64::new(3f64.sqrt(), 0.0))];
        let spec = MtlSpec {
            objectives: vec![
                entry(WrapperKind::Fixed, CriterionKind::MseMask, 0.5),
                entry(WrapperKind::Fixed, CriterionKind::MseSpectrum, 2.0),
            ],
        };
        let rep = mtl_combine(&spec, &batch).unwrap();
        assert!((rep.breakdown[0].report.value - 2.0).abs() < 1e-12);
        assert!((rep.breakdown[1].report.value - 3.0).abs() < 1e-12);
        assert!((rep.total - 7.0).abs() < 1e-12);

        let zeroed = MtlSpec {
            objectives: vec![
                entry(WrapperKind::Fixed, CriterionKind::MseMask, 1.0),
                entry(WrapperKind::Fixed, CriterionKind::MseSpectrum, 0.0),
            ],
        };
        assert!((mtl_combine(&zeroed, &batch).unwrap().total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors_propagate_and_spec_is_validated() {
        let spec = MtlSpec {
            objectives: vec![entry(WrapperKind::Fixed, CriterionKind::SiSnr, 1.0)],
        };
        assert!(mtl_combine(&spec, &LossBatch::default()).is_err());
        assert!(mtl_combine(&MtlSpec { objectives: vec![] }, &LossBatch::default()).is_err());
        let bad = MtlSpec {
            objectives: vec![entry(WrapperKind::Fixed, CriterionKind::MseMask, f64::NAN)],
        };
        assert!(bad.validate().is_err());
        let mixit_mask = MtlSpec {
            objectives: vec![entry(WrapperKind::Mixit, CriterionKind::MseMask, 1.0)],
        };
        assert!(mtl_combine(&mixit_mask, &mask_batch(1.0)).is_err());
    }

    #[test]
    fn parses_from_config_text() {
        let text = r#"
            [[objectives]]
            wrapper = "pit"
            criterion = "ci_sdr"
            params = { filter_taps = 64 }
            weight = 0.7

            [[objectives]]
            wrapper = "fixed"
            criterion = "mse_mask"
            weight = 0.3
        "#;
        let spec: MtlSpec = toml::from_str(text).unwrap();
        assert_eq!(spec.objectives[0].params.filter_taps, 64);
        assert_eq!(spec.objectives[1].params, CriterionParams::default());
        assert!(toml::from_str::<MtlSpec>("[[objectives]]\nwrapper='pit'\ncriterion='snr'\nweight=1\nbogus=2").is_err());
    }
}
