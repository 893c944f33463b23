//! Uniformly sampled complex time series.

use num_complex::Complex64;

/// Complex samples at a fixed rate, with the time of the first sample.
///
/// Used for both baseband and carrier-shifted signals; the module that
/// produces a signal documents which one it is.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    /// Samples per second.
    pub sample_rate: f64,
    /// Time of `samples[0]` in seconds.
    pub start_time: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate: f64, start_time: f64) -> Self {
        Self {
            samples,
            sample_rate,
            start_time,
        }
    }

    pub fn zeros(len: usize, sample_rate: f64, start_time: f64) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate, start_time)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Span covered by the samples, `len / sample_rate`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Time of sample `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    /// Mean of `|x[k]|^2`, zero for an empty signal.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// Rounds every sample through single precision, matching what the
    /// complex64 file format stores.
    pub fn quantized(mut self) -> Self {
        quantize_in_place(&mut self.samples);
        self
    }
}

pub(crate) fn quantize_in_place(values: &mut [Complex64]) {
    for v in values {
        *v = Complex64::new(v.re as f32 as f64, v.im as f32 as f64);
    }
}
