use std::f64::consts::TAU;

use ndarray::Array2;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Short-time analysis parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramingConfig {
    pub window_ms: f64,
    pub step_ms: f64,
    pub fft_size: usize,
}

impl Default for FramingConfig {
    /// 25 ms Hamming windows every 10 ms, 512-point FFT (16 kHz audio).
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            step_ms: 10.0,
            fft_size: 512,
        }
    }
}

impl FramingConfig {
    pub fn window_samples(&self, sample_rate_hz: u32) -> usize {
        (self.window_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn step_samples(&self, sample_rate_hz: u32) -> usize {
        (self.step_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
    }

    /// Number of spectral bins per frame, `fft_size / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if !(self.window_ms > 0.0 && self.step_ms > 0.0) {
            return Err(Error::Config("window and step must be positive".into()));
        }
        if self.step_ms > self.window_ms {
            return Err(Error::Config(format!(
                "step {} ms exceeds window {} ms",
                self.step_ms, self.window_ms
            )));
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!("fft size {} is not a power of two", self.fft_size)));
        }
        let win = self.window_samples(sample_rate_hz);
        if win == 0 || self.step_samples(sample_rate_hz) == 0 {
            return Err(Error::Config("window or step rounds to zero samples".into()));
        }
        if self.fft_size < win {
            return Err(Error::Config(format!(
                "fft size {} is shorter than the {win}-sample window",
                self.fft_size
            )));
        }
        Ok(())
    }

    /// Frame count for a signal of `len` samples; the trailing partial frame is dropped.
    pub fn frame_count(&self, len: usize, sample_rate_hz: u32) -> usize {
        let win = self.window_samples(sample_rate_hz);
        let step = self.step_samples(sample_rate_hz);
        if len < win {
            0
        } else {
            (len - win) / step + 1
        }
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (TAU * n as f64 / denom).cos())
        .collect()
}

/// Splits a signal into Hamming-windowed frames, one per row.
pub fn frame_signal(signal: &AudioSignal, cfg: &FramingConfig) -> Result<Array2<f64>> {
    let sr = signal.sample_rate_hz();
    cfg.validate(sr)?;
    let win = cfg.window_samples(sr);
    let step = cfg.step_samples(sr);
    let samples = signal.samples();
    if samples.len() < win {
        return Err(Error::TooShort {
            len: samples.len(),
            window: win,
        });
    }

    let window = hamming(win);
    let n_frames = cfg.frame_count(samples.len(), sr);
    Ok(Array2::from_shape_fn((n_frames, win), |(f, n)| {
        samples[f * step + n] * window[n]
    }))
}
