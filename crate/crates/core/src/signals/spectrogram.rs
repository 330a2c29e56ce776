use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::record::SignalRecord;
use crate::diffcore::Array;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub segment_length: usize,
    pub fft_length: usize,
    pub hop: usize,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            segment_length: 1024,
            fft_length: 64,
            hop: 30,
        }
    }
}

impl SpectrogramConfig {
    pub fn frequency_bins(&self) -> usize {
        self.fft_length / 2 + 1
    }

    pub fn frames(&self) -> usize {
        (self.segment_length - self.fft_length) / self.hop + 1
    }

    /// Image extents `[bins, frames, 1]`.
    pub fn image_extents(&self) -> [usize; 3] {
        [self.frequency_bins(), self.frames(), 1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_length < 2 || self.fft_length % 2 != 0 {
            return Err(Error::validation("data.spectrogram.fft_length", "must be even and >= 2"));
        }
        if self.hop == 0 {
            return Err(Error::validation("data.spectrogram.hop", "must be positive"));
        }
        if self.segment_length < self.fft_length {
            return Err(Error::validation(
                "data.spectrogram.segment_length",
                "must be at least fft_length",
            ));
        }
        Ok(())
    }
}

/// Non-overlapping consecutive segments; a trailing remainder is dropped.
pub fn segment_signal(record: &SignalRecord, segment_length: usize) -> Result<Vec<Array>> {
    if segment_length < 2 {
        return Err(Error::contract("segment_length must be >= 2"));
    }
    Ok(record
        .samples
        .data()
        .chunks_exact(segment_length)
        .map(|c| Array::from_vec(c.to_vec()))
        .collect())
}

/// Affine map of `[min, max]` onto `[-1, 1]`; constant input maps to zeros.
pub fn scale_to_unit_range(values: &Array) -> Array {
    let (lo, hi) = values
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return values.map(|_| 0.0);
    }
    let span = hi - lo;
    values.map(|v| {
        if v == hi {
            1.0
        } else {
            (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0)
        }
    })
}

/// Global max minus global min over every sample of every segment.
pub fn peak_to_peak(segments: &[Array]) -> Result<f64> {
    let mut it = segments.iter().flat_map(|s| s.data().iter().copied()).peekable();
    if it.peek().is_none() {
        return Err(Error::contract("peak-to-peak of an empty collection"));
    }
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

/// Reusable STFT state for one configuration.
pub struct Spectrogram {
    config: SpectrogramConfig,
    window: Vec<f64>,
    fft: std::sync::Arc<dyn Fft<f64>>,
}

impl Spectrogram {
    pub fn new(config: SpectrogramConfig) -> Result<Self> {
        config.validate()?;
        let n = config.fft_length;
        // Periodic Hann.
        let window = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Spectrogram { config, window, fft })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    /// `log1p` of the one-sided STFT magnitude; row = frequency bin,
    /// column = frame. Not yet scaled.
    pub fn log_magnitude(&self, segment: &Array) -> Result<Array> {
        let c = &self.config;
        if segment.len() != c.segment_length {
            return Err(Error::shape(format!(
                "segment has {} samples, expected {}",
                segment.len(),
                c.segment_length
            )));
        }
        let (bins, frames) = (c.frequency_bins(), c.frames());
        let mut img = vec![0.0; bins * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); c.fft_length];
        for f in 0..frames {
            let start = f * c.hop;
            for (j, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(segment.data()[start + j] * self.window[j], 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..bins {
                img[k * frames + f] = buf[k].norm().ln_1p();
            }
        }
        Array::new(vec![bins, frames, 1], img)
    }

    /// Spectrogram image scaled to `[-1, 1]`.
    pub fn image(&self, segment: &Array) -> Result<Array> {
        Ok(scale_to_unit_range(&self.log_magnitude(segment)?))
    }
}

/// One-off spectrogram image with the default configuration.
pub fn stft_image(segment: &Array) -> Result<Array> {
    Spectrogram::new(SpectrogramConfig::default())?.image(segment)
}
