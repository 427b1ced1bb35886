//! Diagonal-covariance Gaussian mixtures fit by EM, and log-likelihood-ratio
//! scoring of speaker models against a universal background model.

mod em;
mod scoring;

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub use em::{em_fit, train_ubm, EmConfig, EmFit, UBM_COMPONENTS};
pub use scoring::{rank_scores, ScoreNormalization, SpeakerModelSet, VerificationDecision};

use crate::error::{Error, Result};

/// `p(x) = Σ_i w_i N(x; μ_i, diag(σ²_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    weights: Array1<f64>,
    means: Array2<f64>,
    variances: Array2<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-10;

impl GmmModel {
    pub fn new(weights: Array1<f64>, means: Array2<f64>, variances: Array2<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(Error::Config("a mixture needs at least one component".into()));
        }
        for rows in [means.nrows(), variances.nrows()] {
            if rows != m {
                return Err(Error::DimensionMismatch { expected: m, found: rows });
            }
        }
        if means.ncols() != variances.ncols() {
            return Err(Error::DimensionMismatch {
                expected: means.ncols(),
                found: variances.ncols(),
            });
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (weights.sum() - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config(format!("mixture weights must be nonnegative and sum to 1, got {weights}")));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("variances must be positive and finite".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("means must be finite".into()));
        }
        Ok(Self { weights, means, variances })
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn variances(&self) -> &Array2<f64> {
        &self.variances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found });
        }
        Ok(())
    }

    /// `log p(x)`, summing `(x - μ)²/σ²` directly for each component.
    pub fn logpdf(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let d = self.dim() as f64;
        let terms = self
            .means
            .rows()
            .into_iter()
            .zip(self.variances.rows())
            .zip(&self.weights)
            .map(|((mu, var), &w)| {
                let mahal: f64 = x.iter().zip(mu).zip(var).map(|((xi, m), v)| (xi - m) * (xi - m) / v).sum();
                let log_det: f64 = var.iter().map(|v| v.ln()).sum();
                w.ln() - 0.5 * (d * (2.0 * PI).ln() + log_det + mahal)
            });
        Ok(log_sum_exp(terms))
    }

    /// `log w_i + log N(x_t; μ_i, σ²_i)` for every frame (rows) and component (columns).
    pub(crate) fn weighted_log_densities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let precision = self.variances.mapv(|v| 1.0 / v);
        let scaled_means = &self.means * &precision;
        let d = self.dim() as f64;
        let constants: Array1<f64> = self
            .weights
            .iter()
            .zip(self.means.rows())
            .zip(self.variances.rows())
            .zip(scaled_means.rows())
            .map(|(((&w, mu), var), smu)| {
                let log_det: f64 = var.iter().map(|v| v.ln()).sum();
                w.ln() - 0.5 * (d * (2.0 * PI).ln() + log_det + mu.dot(&smu))
            })
            .collect();
        let squares = x.mapv(|v| v * v);
        let mut out = x.dot(&scaled_means.t());
        out.scaled_add(-0.5, &squares.dot(&precision.t()));
        out += &constants;
        Ok(out)
    }

    /// `log p(x_t)` for every row of `x`.
    pub fn log_likelihoods(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let dens = self.weighted_log_densities(x)?;
        Ok(dens.map_axis(Axis(1), |row| log_sum_exp(row.iter().copied())))
    }

    /// Mean of `log p(x_t)` over the rows of `x`.
    pub fn mean_log_likelihood(&self, x: ArrayView2<'_, f64>) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::EmptyFrames);
        }
        Ok(self.log_likelihoods(x)?.mean().unwrap_or(f64::NAN))
    }
}

pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}
