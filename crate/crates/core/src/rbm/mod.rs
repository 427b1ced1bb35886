//! Restricted Boltzmann machines with Bernoulli or Gaussian visible units and
//! Bernoulli or noisy-ReLU hidden units, trained by contrastive divergence.
//!
//! The energy of a joint configuration is
//!
//! ```text
//! E(v, h) = -bᵀv - cᵀh - vᵀWh               (Bernoulli visibles)
//! E(v, h) = ‖v - b‖²/2 - cᵀh - vᵀWh         (unit-variance Gaussian visibles)
//! ```
//!
//! with `W` stored as `n_visible × n_hidden`.

pub mod oracle;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub use train::{cd_gradient, CdConfig, CdGradient, RbmTrainer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisibleKind {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenKind {
    Bernoulli,
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub visible_kind: VisibleKind,
    pub hidden_kind: HiddenKind,
}

/// Means and samples of one conditional draw, one row per input vector.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub means: Array2<f64>,
    pub samples: Array2<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl RbmParams {
    pub fn zeros(n_visible: usize, n_hidden: usize, visible: VisibleKind, hidden: HiddenKind) -> Self {
        Self {
            weights: Array2::zeros((n_visible, n_hidden)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            visible_kind: visible,
            hidden_kind: hidden,
        }
    }

    /// Gaussian weights with the given std, zero biases.
    pub fn random<R: Rng + ?Sized>(
        n_visible: usize,
        n_hidden: usize,
        visible: VisibleKind,
        hidden: HiddenKind,
        weight_std: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, weight_std).expect("finite weight std");
        let mut params = Self::zeros(n_visible, n_hidden, visible, hidden);
        params.weights.mapv_inplace(|_| normal.sample(rng));
        params
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (nv, nh) = self.weights.dim();
        if nv != self.n_visible() {
            return Err(Error::DimensionMismatch { expected: nv, found: self.n_visible() });
        }
        if nh != self.n_hidden() {
            return Err(Error::DimensionMismatch { expected: nh, found: self.n_hidden() });
        }
        if !self.is_finite() {
            return Err(Error::Divergence("non-finite RBM parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.visible_bias).chain(&self.hidden_bias).all(|x| x.is_finite())
    }

    pub fn energy(&self, v: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> Result<f64> {
        check_len(self.n_visible(), v.len())?;
        check_len(self.n_hidden(), h.len())?;
        let visible_term = match self.visible_kind {
            VisibleKind::Bernoulli => -self.visible_bias.dot(&v),
            VisibleKind::Gaussian => 0.5 * (&v - &self.visible_bias).mapv(|d| d * d).sum(),
        };
        Ok(visible_term - self.hidden_bias.dot(&h) - v.dot(&self.weights.dot(&h)))
    }

    /// Pre-activations `c + vᵀW` for each row of `v`.
    pub fn hidden_input(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_len(self.n_visible(), v.ncols())?;
        Ok(v.dot(&self.weights) + &self.hidden_bias)
    }

    /// Means of `h | v`: sigmoid for Bernoulli units, `max(0, x)` for ReLU units.
    pub fn hidden_means(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut pre = self.hidden_input(v)?;
        match self.hidden_kind {
            HiddenKind::Bernoulli => pre.mapv_inplace(sigmoid),
            HiddenKind::Relu => pre.mapv_inplace(|x| x.max(0.0)),
        }
        Ok(pre)
    }

    /// Draws `h | v`. ReLU units use noisy-ReLU sampling,
    /// `max(0, x + N(0, sigmoid(x)))`.
    pub fn hidden_given_visible<R: Rng + ?Sized>(
        &self,
        v: ArrayView2<'_, f64>,
        rng: &mut R,
    ) -> Result<Conditional> {
        let pre = self.hidden_input(v)?;
        Ok(match self.hidden_kind {
            HiddenKind::Bernoulli => {
                let means = pre.mapv(sigmoid);
                let samples = means.mapv(|p| bernoulli(p, rng));
                Conditional { means, samples }
            }
            HiddenKind::Relu => {
                let means = pre.mapv(|x| x.max(0.0));
                let samples = pre.mapv(|x| {
                    let z: f64 = StandardNormal.sample(rng);
                    (x + sigmoid(x).sqrt() * z).max(0.0)
                });
                Conditional { means, samples }
            }
        })
    }

    /// Pre-activations `b + Wh` for each row of `h`.
    pub fn visible_input(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_len(self.n_hidden(), h.ncols())?;
        Ok(h.dot(&self.weights.t()) + &self.visible_bias)
    }

    /// Draws `v | h`: Bernoulli with sigmoid means, or unit-variance Gaussian.
    pub fn visible_given_hidden<R: Rng + ?Sized>(
        &self,
        h: ArrayView2<'_, f64>,
        rng: &mut R,
    ) -> Result<Conditional> {
        let pre = self.visible_input(h)?;
        Ok(match self.visible_kind {
            VisibleKind::Bernoulli => {
                let means = pre.mapv(sigmoid);
                let samples = means.mapv(|p| bernoulli(p, rng));
                Conditional { means, samples }
            }
            VisibleKind::Gaussian => {
                let samples = pre.mapv(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + z
                });
                Conditional { means: pre, samples }
            }
        })
    }

    /// Single-vector form of [`Self::hidden_given_visible`]: `(means, sample)`.
    pub fn hidden_given_visible_one<R: Rng + ?Sized>(
        &self,
        v: ArrayView1<'_, f64>,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let c = self.hidden_given_visible(v.insert_axis(Axis(0)), rng)?;
        Ok((c.means.row(0).to_owned(), c.samples.row(0).to_owned()))
    }

    /// Single-vector form of [`Self::visible_given_hidden`]: `(means, sample)`.
    pub fn visible_given_hidden_one<R: Rng + ?Sized>(
        &self,
        h: ArrayView1<'_, f64>,
        rng: &mut R,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let c = self.visible_given_hidden(h.insert_axis(Axis(0)), rng)?;
        Ok((c.means.row(0).to_owned(), c.samples.row(0).to_owned()))
    }
}

fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
