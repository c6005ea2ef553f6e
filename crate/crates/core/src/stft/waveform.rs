use crate::error::{Error, Result};

/// Multichannel real-valued audio at a fixed sample rate.
///
/// All channels share one length and every sample is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("waveform needs at least one channel".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::ShapeMismatch(format!(
                "channel {bad} has {} samples, channel 0 has {len}",
                channels[bad].len()
            )));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(num_channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; num_channels.max(1)], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// A mono waveform holding a copy of one channel.
    pub fn select_channel(&self, index: usize) -> Result<Waveform> {
        let ch = self.channels.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "channel {index} requested from a {}-channel waveform",
                self.num_channels()
            ))
        })?;
        Ok(Waveform {
            channels: vec![ch.clone()],
            sample_rate: self.sample_rate,
        })
    }

    /// Keeps the first `n` channels.
    pub fn take_channels(&self, n: usize) -> Result<Waveform> {
        if n == 0 || n > self.num_channels() {
            return Err(Error::InvalidArgument(format!(
                "cannot take {n} channels from {}",
                self.num_channels()
            )));
        }
        Ok(Waveform {
            channels: self.channels[..n].to_vec(),
            sample_rate: self.sample_rate,
        })
    }

    /// Elementwise sum; shapes and rates must agree.
    pub fn add(&self, other: &Waveform) -> Result<Waveform> {
        self.check_compatible(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Waveform {
            channels,
            sample_rate: self.sample_rate,
        })
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|x| x * gain).collect())
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Mean power of one channel.
    pub fn channel_power(&self, index: usize) -> f64 {
        let ch = &self.channels[index];
        if ch.is_empty() {
            return 0.0;
        }
        ch.iter().map(|x| x * x).sum::<f64>() / ch.len() as f64
    }

    pub fn check_compatible(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: self.sample_rate,
                actual: other.sample_rate,
            });
        }
        if self.num_channels() != other.num_channels() || self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.num_channels(),
                self.len(),
                other.num_channels(),
                other.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_ragged_channels() {
        let err = Waveform::new(vec![vec![0.0; 3], vec![0.0; 2]], 16000).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)));
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(Waveform::mono(vec![f64::NAN], 16000).is_err());
        assert!(Waveform::mono(vec![0.0], 0).is_err());
        assert!(Waveform::new(vec![], 16000).is_err());
    }

    #[test]
    fn add_requires_same_rate() {
        let a = Waveform::mono(vec![1.0, 2.0], 16000).unwrap();
        let b = Waveform::mono(vec![1.0, 2.0], 8000).unwrap();
        assert!(matches!(a.add(&b), Err(Error::SampleRateMismatch { .. })));
        let c = a.add(&a).unwrap();
        assert_eq!(c.channel(0), &[2.0, 4.0]);
    }
}
