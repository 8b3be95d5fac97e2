use crate::error::{Error, Result};

/// A finite real-valued sample sequence, one block of `len()` samples per
/// channel. SISO signals have a single channel. The storage is
/// channel-major: channel `i` occupies `data[i*len .. (i+1)*len]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    channels: usize,
    data: Vec<f64>,
}

impl Signal {
    /// Builds a signal from channel-major samples; every sample must be finite.
    pub fn new(channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Domain("signal needs at least one channel".into()));
        }
        if data.is_empty() || data.len() % channels != 0 {
            return Err(Error::Dimension {
                context: "Signal::new",
                expected: channels,
                got: data.len(),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("signal contains a non-finite sample".into()));
        }
        Ok(Self { channels, data })
    }

    /// Single-channel signal.
    pub fn siso(data: Vec<f64>) -> Result<Self> {
        Self::new(1, data)
    }

    pub(crate) fn from_raw(channels: usize, data: Vec<f64>) -> Self {
        debug_assert!(channels > 0 && !data.is_empty() && data.len() % channels == 0);
        Self { channels, data }
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self::from_raw(channels, vec![0.0; channels * len])
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// All samples, channel-major.
    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.data[i * n..(i + 1) * n]
    }

    pub(crate) fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Euclidean norm over all channels' samples concatenated.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Signal) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        debug_assert_eq!(self.channels, other.channels);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Per-channel time reversal: sample order within each channel reversed.
    pub fn reversed(&self) -> Signal {
        let n = self.len();
        let mut data = Vec::with_capacity(self.data.len());
        for ch in 0..self.channels {
            data.extend(self.channel(ch).iter().rev());
        }
        debug_assert_eq!(data.len(), n * self.channels);
        Signal::from_raw(self.channels, data)
    }

    pub fn scaled(&self, a: f64) -> Signal {
        Signal::from_raw(self.channels, self.data.iter().map(|x| a * x).collect())
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Signal) -> Signal {
        debug_assert_eq!(self.data.len(), other.data.len());
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x + a * y)
            .collect();
        Signal::from_raw(self.channels, data)
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        self.axpy(-1.0, other)
    }

    /// Projection onto the unit sphere; errors on the zero vector.
    pub fn normalized(&self) -> Result<Signal> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain(
                "cannot normalize a zero or non-finite signal".into(),
            ));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Retraction onto the unit sphere: `(u + step) / ||u + step||`.
///
/// Valid for any `step` with `u + step != 0`; radial steps collapse back
/// onto `u`'s direction.
pub fn retract(u: &Signal, step: &Signal) -> Result<Signal> {
    u.axpy(1.0, step).normalized()
}
