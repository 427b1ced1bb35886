use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::spectrum::POWER_FLOOR;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub n_mel_filters: usize,
    pub n_coeffs_total: usize,
    /// First kept coefficient, 1-based.
    pub keep_first: usize,
    /// Last kept coefficient, 1-based and inclusive.
    pub keep_last: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
}

impl Default for MfccConfig {
    /// 26 filters over 0–8 kHz, coefficients 2 through 14.
    fn default() -> Self {
        Self {
            n_mel_filters: 26,
            n_coeffs_total: 14,
            keep_first: 2,
            keep_last: 14,
            mel_low_hz: 0.0,
            mel_high_hz: 8000.0,
        }
    }
}

impl MfccConfig {
    pub fn n_kept(&self) -> usize {
        self.keep_last + 1 - self.keep_first
    }

    pub fn validate(&self) -> Result<()> {
        if self.keep_first < 1 || self.keep_first > self.keep_last || self.keep_last > self.n_coeffs_total {
            return Err(Error::Config(format!(
                "keep range {}..={} outside 1..={}",
                self.keep_first, self.keep_last, self.n_coeffs_total
            )));
        }
        if self.n_coeffs_total > self.n_mel_filters {
            return Err(Error::Config(format!(
                "{} cepstral coefficients from {} filters",
                self.n_coeffs_total, self.n_mel_filters
            )));
        }
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < self.mel_high_hz) {
            return Err(Error::Config(format!(
                "mel band {}..{} Hz is empty",
                self.mel_low_hz, self.mel_high_hz
            )));
        }
        Ok(())
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Precomputed mel filterbank and DCT basis for one `(config, sample rate, fft size)`.
#[derive(Debug, Clone)]
pub struct Mfcc {
    cfg: MfccConfig,
    /// `n_mel_filters × n_bins`, each row summing to one.
    filters: Array2<f64>,
    /// Orthonormal DCT-II rows for the kept coefficients, `n_kept × n_mel_filters`.
    dct: Array2<f64>,
}

impl Mfcc {
    pub fn new(cfg: MfccConfig, sample_rate_hz: u32, fft_size: usize) -> Result<Self> {
        cfg.validate()?;
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        if cfg.mel_high_hz > nyquist {
            return Err(Error::Config(format!(
                "mel upper bound {} Hz exceeds Nyquist {nyquist} Hz",
                cfg.mel_high_hz
            )));
        }

        let n_bins = fft_size / 2 + 1;
        let bin_hz = f64::from(sample_rate_hz) / fft_size as f64;
        let mel_lo = hz_to_mel(cfg.mel_low_hz);
        let mel_hi = hz_to_mel(cfg.mel_high_hz);
        let edges: Vec<f64> = (0..cfg.n_mel_filters + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mel_filters + 1) as f64))
            .collect();

        let mut filters = Array2::zeros((cfg.n_mel_filters, n_bins));
        for (m, mut row) in filters.rows_mut().into_iter().enumerate() {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                *w = if f >= lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f <= hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
            }
            let area = row.sum();
            if area <= 0.0 {
                return Err(Error::Config(format!(
                    "mel filter {m} ({lo:.1}–{hi:.1} Hz) covers no FFT bin at {sample_rate_hz} Hz / {fft_size} points"
                )));
            }
            row /= area;
        }

        let n = cfg.n_mel_filters as f64;
        let dct = Array2::from_shape_fn((cfg.n_kept(), cfg.n_mel_filters), |(r, j)| {
            let k = (cfg.keep_first - 1 + r) as f64;
            let norm = if k == 0.0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            norm * (PI * k * (j as f64 + 0.5) / n).cos()
        });

        Ok(Self { cfg, filters, dct })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn n_coeffs(&self) -> usize {
        self.cfg.n_kept()
    }

    /// Kept cepstral coefficients of one linear power spectrum.
    pub fn compute(&self, power: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let batch = self.compute_batch(power.insert_axis(Axis(0)))?;
        Ok(batch.row(0).to_owned())
    }

    /// One row of kept coefficients per power-spectrum row.
    pub fn compute_batch(&self, power: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if power.ncols() != self.filters.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.filters.ncols(),
                found: power.ncols(),
            });
        }
        let mut log_energy = power.dot(&self.filters.t()).mapv(|e| e.max(POWER_FLOOR).ln());
        if self.cfg.keep_first > 1 {
            // DCT rows k >= 1 sum to zero, so a per-frame offset can be removed
            // first; constant log energies then give exact zeros.
            for mut row in log_energy.rows_mut() {
                let offset = row[0];
                row.mapv_inplace(|v| v - offset);
            }
        }
        Ok(log_energy.dot(&self.dct.t()))
    }
}

/// Convenience wrapper that infers the FFT size from the spectrum length.
pub fn mfcc(power: ArrayView1<'_, f64>, cfg: &MfccConfig, sample_rate_hz: u32) -> Result<Array1<f64>> {
    if power.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: power.len(),
        });
    }
    Mfcc::new(*cfg, sample_rate_hz, 2 * (power.len() - 1))?.compute(power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioSignal;
    use crate::dsp::{frame_signal, power_spectrum, FramingConfig};
    use approx::assert_abs_diff_eq;

    fn bank() -> Mfcc {
        Mfcc::new(MfccConfig::default(), 16000, 512).unwrap()
    }

    #[test]
    fn thirteen_coefficients() {
        assert_eq!(bank().n_coeffs(), 13);
        let out = bank().compute(Array1::ones(257).view()).unwrap();
        assert_eq!(out.len(), 13);
    }

    #[test]
    fn flat_spectrum_has_vanishing_cepstrum() {
        let out = bank().compute(Array1::ones(257).view()).unwrap();
        assert_abs_diff_eq!(out, Array1::zeros(13), epsilon = 1e-12);
    }

    #[test]
    fn zero_spectrum_gives_exact_zeros() {
        let out = bank().compute(Array1::zeros(257).view()).unwrap();
        assert!(out.iter().all(|&c| c == 0.0), "{out}");
    }

    #[test]
    fn spectral_gain_only_moves_the_excluded_coefficient() {
        let power = Array1::from_shape_fn(257, |k| 1.0 + (k as f64 * 0.1).sin().powi(2) * 50.0);
        let a = bank().compute(power.view()).unwrap();
        let b = bank().compute((&power * 100.0).view()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    #[test]
    fn signal_gain_invariance() {
        let samples: Vec<f64> = (0..4000)
            .map(|n| (n as f64 * 0.05).sin() * 0.3 + (n as f64 * 0.71).sin() * 0.1)
            .collect();
        let sig = AudioSignal::new(samples, 16000).unwrap();
        let louder = sig.scaled(100.0).unwrap();
        let cfg = FramingConfig::default();
        let pa = power_spectrum(frame_signal(&sig, &cfg).unwrap().view(), 512).unwrap();
        let pb = power_spectrum(frame_signal(&louder, &cfg).unwrap().view(), 512).unwrap();
        let a = bank().compute_batch(pa.view()).unwrap();
        let b = bank().compute_batch(pb.view()).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-8);
    }

    #[test]
    fn filters_are_area_normalized() {
        let m = bank();
        for row in m.filters.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn keeping_c0_matches_plain_dct() {
        let cfg = MfccConfig { keep_first: 1, keep_last: 3, ..Default::default() };
        let m = Mfcc::new(cfg, 16000, 512).unwrap();
        let out = m.compute(Array1::from_elem(257, std::f64::consts::E).view()).unwrap();
        // log energy is 1 everywhere; c0 = sqrt(26)
        assert_abs_diff_eq!(out[0], 26f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bounds_above_nyquist() {
        assert!(Mfcc::new(MfccConfig::default(), 8000, 256).is_err());
        let narrow = MfccConfig { mel_high_hz: 4000.0, ..Default::default() };
        assert!(Mfcc::new(narrow, 8000, 256).is_ok());
    }

    #[test]
    fn rejects_bad_keep_range() {
        let cfg = MfccConfig { keep_last: 15, ..Default::default() };
        assert!(Mfcc::new(cfg, 16000, 512).is_err());
    }

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert_abs_diff_eq!(mel_to_hz(hz_to_mel(hz)), hz, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(hz_to_mel(700.0), 2595.0 * 2f64.log10(), epsilon = 1e-12);
    }
}
