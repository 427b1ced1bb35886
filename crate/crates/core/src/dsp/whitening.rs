use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// PCA whitening map `x -> scales ⊙ (components · (x - mean))`.
///
/// `components` holds one unit-norm principal direction per row, ordered by
/// descending eigenvalue. Directions are sign-normalized so that the entry of
/// largest magnitude is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaWhitener {
    pub mean: Array1<f64>,
    pub components: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub scales: Array1<f64>,
    pub epsilon: f64,
}

impl PcaWhitener {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn whiten(&self, frame: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_dim(frame.len())?;
        let centered = &frame - &self.mean;
        Ok(self.components.dot(&centered) * &self.scales)
    }

    /// Whitens every row of `frames`.
    pub fn whiten_batch(&self, frames: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(frames.ncols())?;
        let centered = &frames - &self.mean;
        Ok(centered.dot(&self.components.t()) * &self.scales)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Fits a whitener on the rows of `frames`, keeping the top `n_components` directions.
///
/// Uses the population covariance (divide by N), so whitening the fitting set
/// itself yields covariance `diag(λ / (λ + epsilon))`.
pub fn fit_whitener(
    frames: ArrayView2<'_, f64>,
    n_components: usize,
    epsilon: f64,
) -> Result<PcaWhitener> {
    let (n, dim) = frames.dim();
    if n <= n_components {
        return Err(Error::RankDeficient {
            needed: n_components,
            got: n,
        });
    }
    if n_components == 0 || n_components > dim {
        return Err(Error::Config(format!(
            "cannot keep {n_components} components of {dim}-dimensional frames"
        )));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("invalid whitening epsilon {epsilon}")));
    }

    let mean = frames.sum_axis(Axis(0)) / n as f64;
    let centered = &frames - &mean;
    let cov = centered.t().dot(&centered) / n as f64;

    let eigen = SymmetricEigen::new(DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut components = Array2::zeros((n_components, dim));
    let mut eigenvalues = Array1::zeros(n_components);
    for (row, &idx) in order.iter().take(n_components).enumerate() {
        let v = eigen.eigenvectors.column(idx);
        let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs()));
        let sign = if pivot.unwrap_or(1.0) < 0.0 { -1.0 } else { 1.0 };
        for (c, &x) in components.row_mut(row).iter_mut().zip(v.iter()) {
            *c = sign * x;
        }
        // tiny negative eigenvalues are round-off
        eigenvalues[row] = eigen.eigenvalues[idx].max(0.0);
    }

    let scales = eigenvalues.mapv(|l: f64| 1.0 / (l + epsilon).sqrt());
    if let Some(i) = scales.iter().position(|s| !s.is_finite()) {
        return Err(Error::RankDeficient {
            needed: n_components,
            got: i,
        });
    }

    Ok(PcaWhitener {
        mean,
        components,
        eigenvalues,
        scales,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use approx::assert_abs_diff_eq;
    use ndarray::{concatenate, s};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, dim: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_for(seed, 0);
        Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(&mut rng))
    }

    fn covariance(x: &Array2<f64>) -> Array2<f64> {
        let mean = x.mean_axis(Axis(0)).unwrap();
        let c = x - &mean;
        c.t().dot(&c) / x.nrows() as f64
    }

    #[test]
    fn axis_aligned_variance() {
        // Columns with std (2, 1, 0.5): axis 0 carries variance 4.
        let mut x = gaussian(5000, 3, 1);
        x.column_mut(0).mapv_inplace(|v| 2.0 * v);
        x.column_mut(2).mapv_inplace(|v| 0.5 * v);
        let w = fit_whitener(x.view(), 2, 1e-12).unwrap();
        let first = w.components.row(0);
        assert!(first[0] > 0.99, "{first}");
        assert!((w.scales[0] - 0.5).abs() < 0.02, "{}", w.scales[0]);
    }

    #[test]
    fn components_are_orthonormal_and_sign_fixed() {
        let w = fit_whitener(gaussian(400, 20, 2).view(), 10, 1e-9).unwrap();
        let gram = w.components.dot(&w.components.t());
        assert_abs_diff_eq!(gram, Array2::eye(10), epsilon = 1e-6);
        for row in w.components.rows() {
            let pivot = row.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap();
            assert!(pivot > 0.0);
        }
        assert!(w.eigenvalues.windows(2).into_iter().all(|p| p[0] >= p[1]));
    }

    #[test]
    fn whitened_fitting_set_has_identity_covariance() {
        // Correlated data: random mixing of independent gaussians.
        let z = gaussian(3000, 30, 3);
        let mix = gaussian(30, 30, 4);
        let x = z.dot(&mix);
        let w = fit_whitener(x.view(), 20, 0.0).unwrap();
        let eps = 1e-8 * w.eigenvalues[0];
        let w = fit_whitener(x.view(), 20, eps).unwrap();
        let out = w.whiten_batch(x.view()).unwrap();
        assert_abs_diff_eq!(covariance(&out), Array2::eye(20), epsilon = 1e-4);
    }

    #[test]
    fn duplication_invariance() {
        let x = gaussian(300, 12, 5);
        let doubled = concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let a = fit_whitener(x.view(), 6, 1e-6).unwrap();
        let b = fit_whitener(doubled.view(), 6, 1e-6).unwrap();
        assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(a.components, b.components, epsilon = 1e-12);
        assert_abs_diff_eq!(a.scales, b.scales, epsilon = 1e-12);
    }

    #[test]
    fn mean_maps_to_zero_and_first_axis_to_unit() {
        let x = gaussian(500, 8, 6);
        let w = fit_whitener(x.view(), 4, 1e-12).unwrap();
        assert_abs_diff_eq!(w.whiten(w.mean.view()).unwrap(), Array1::zeros(4), epsilon = 1e-12);

        let probe = &w.mean + &(&w.components.row(0) * w.eigenvalues[0].sqrt());
        let mut expected = Array1::zeros(4);
        expected[0] = 1.0;
        assert_abs_diff_eq!(w.whiten(probe.view()).unwrap(), expected, epsilon = 1e-6);
    }

    #[test]
    fn whitening_is_affine() {
        let x = gaussian(200, 6, 7);
        let w = fit_whitener(x.view(), 3, 1e-9).unwrap();
        let a = x.row(0);
        let b = x.row(1);
        let sum = &a + &b - &w.mean;
        let lhs = w.whiten(sum.view()).unwrap();
        let rhs = w.whiten(a).unwrap() + w.whiten(b).unwrap();
        assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn batch_matches_single() {
        let x = gaussian(200, 6, 8);
        let w = fit_whitener(x.view(), 3, 1e-9).unwrap();
        let batch = w.whiten_batch(x.slice(s![..5, ..])).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(batch.row(i), w.whiten(x.row(i)).unwrap().view(), epsilon = 1e-12);
        }
    }

    #[test]
    fn too_few_frames() {
        let err = fit_whitener(gaussian(128, 200, 9).view(), 128, 1e-6).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { needed: 128, got: 128 }));
    }

    #[test]
    fn dimension_mismatch() {
        let w = fit_whitener(gaussian(50, 6, 10).view(), 3, 1e-9).unwrap();
        assert!(matches!(
            w.whiten(Array1::zeros(5).view()),
            Err(Error::DimensionMismatch { expected: 6, found: 5 })
        ));
    }
}
