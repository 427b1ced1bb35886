use ndarray::{Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Power floor applied before taking logarithms.
pub const POWER_FLOOR: f64 = 1e-10;

/// One-sided power spectrum `|X_k|^2`, `k = 0..=fft_size/2`, of each frame.
///
/// Frames are zero-padded to `fft_size`. The transform is unnormalized, so
/// `P_0 + 2 * sum(P_1..P_{N/2-1}) + P_{N/2} = N * sum(x^2)`.
pub fn power_spectrum(frames: ArrayView2<'_, f64>, fft_size: usize) -> Result<Array2<f64>> {
    if !fft_size.is_power_of_two() {
        return Err(Error::Config(format!("fft size {fft_size} is not a power of two")));
    }
    if frames.ncols() > fft_size {
        return Err(Error::DimensionMismatch {
            expected: fft_size,
            found: frames.ncols(),
        });
    }
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let n_bins = fft_size / 2 + 1;
    let mut out = Array2::zeros((frames.nrows(), n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    for (frame, mut row) in frames.rows().into_iter().zip(out.rows_mut()) {
        buf.fill(Complex::new(0.0, 0.0));
        for (b, &x) in buf.iter_mut().zip(frame.iter()) {
            b.re = x;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in row.iter_mut().zip(&buf[..n_bins]) {
            *p = c.norm_sqr();
        }
    }
    Ok(out)
}

/// Natural-log power, floored at [`POWER_FLOOR`].
pub fn log_power(power: ArrayView2<'_, f64>) -> Array2<f64> {
    power.mapv(|p| p.max(POWER_FLOOR).ln())
}

/// Log-power spectrogram: one row of `fft_size/2 + 1` log powers per frame.
pub fn spectrogram(frames: ArrayView2<'_, f64>, fft_size: usize) -> Result<Array2<f64>> {
    Ok(log_power(power_spectrum(frames, fft_size)?.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::framing::hamming;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use std::f64::consts::TAU;

    #[test]
    fn zero_frame_hits_the_floor() {
        let frames = Array2::zeros((1, 400));
        let spec = spectrogram(frames.view(), 512).unwrap();
        assert_eq!(spec.ncols(), 257);
        assert!(spec.iter().all(|&v| v == POWER_FLOOR.ln()));
    }

    #[test]
    fn bin_centered_sinusoid_peaks_at_its_bin() {
        let fs = 16000.0;
        for k in [5usize, 40, 100, 200] {
            let f = k as f64 * fs / 512.0;
            let window = hamming(400);
            let frame = Array1::from_shape_fn(400, |n| (TAU * f * n as f64 / fs).sin() * window[n]);
            let spec = spectrogram(frame.insert_axis(ndarray::Axis(0)).view(), 512).unwrap();
            let argmax = spec
                .row(0)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn parseval() {
        let window = hamming(400);
        let frame = Array1::from_shape_fn(400, |n| {
            ((n as f64 * 0.37).sin() + 0.3 * (n as f64 * 1.91).cos()) * window[n]
        });
        let energy: f64 = frame.iter().map(|x| x * x).sum();
        let power = power_spectrum(frame.insert_axis(ndarray::Axis(0)).view(), 512).unwrap();
        let p = power.row(0);
        let weighted = p[0] + p[256] + 2.0 * p.slice(ndarray::s![1..256]).sum();
        assert_relative_eq!(weighted, 512.0 * energy, max_relative = 1e-6);
    }

    #[test]
    fn frame_longer_than_fft() {
        let frames = Array2::zeros((1, 600));
        assert!(power_spectrum(frames.view(), 512).is_err());
    }

    #[test]
    fn log_power_is_always_finite() {
        let power = Array2::from_shape_vec((1, 4), vec![0.0, 1e-300, 1.0, 1e300]).unwrap();
        assert!(log_power(power.view()).iter().all(|v| v.is_finite()));
    }
}
