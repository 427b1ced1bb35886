use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::RbmParams;
use crate::error::{Error, Result};
use crate::seed::rng_for;

/// Contrastive-divergence hyperparameters.
///
/// Momentum starts at `momentum` and switches to `final_momentum` once
/// `momentum_switch_epoch` epochs have completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_epoch: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 64,
            momentum: 0.5,
            final_momentum: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 2e-4,
            seed: 0,
        }
    }
}

impl CdConfig {
    /// Defaults for a layer with Gaussian visible units.
    pub fn gaussian_visible() -> Self {
        Self {
            learning_rate: 0.001,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("CD needs at least one Gibbs step".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        for m in [self.momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return Err(Error::Config(format!("momentum {m} outside [0, 1)")));
            }
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!("invalid weight decay {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// CD-k estimate of the log-likelihood gradient for one batch, averaged over rows.
#[derive(Debug, Clone)]
pub struct CdGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    /// Mean over the batch of the squared reconstruction error per vector.
    pub reconstruction_error: f64,
}

impl CdGradient {
    /// Parameters flattened in `(W row-major, b, c)` order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .copied()
            .collect()
    }
}

/// Positive phase from hidden means given the data; negative phase from `k`
/// alternating Gibbs steps started at the data. The last step uses mean-field
/// visibles and hidden means for the model statistics.
pub fn cd_gradient<R: Rng + ?Sized>(
    params: &RbmParams,
    batch: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
) -> Result<CdGradient> {
    if batch.nrows() == 0 {
        return Err(Error::InsufficientData("empty CD batch".into()));
    }
    if k == 0 {
        return Err(Error::Config("CD needs at least one Gibbs step".into()));
    }
    let n = batch.nrows() as f64;

    let positive = params.hidden_given_visible(batch, rng)?;
    let mut hidden = positive.samples;
    let mut visible_means = Array2::zeros((0, 0));
    let mut hidden_means = Array2::zeros((0, 0));
    for step in 0..k {
        let v = params.visible_given_hidden(hidden.view(), rng)?;
        let last = step + 1 == k;
        let v_next = if last { v.means } else { v.samples };
        let h = params.hidden_given_visible(v_next.view(), rng)?;
        hidden = h.samples;
        if last {
            visible_means = v_next;
            hidden_means = h.means;
        }
    }

    let weights = (batch.t().dot(&positive.means) - visible_means.t().dot(&hidden_means)) / n;
    let visible_bias = (batch.sum_axis(Axis(0)) - visible_means.sum_axis(Axis(0))) / n;
    let hidden_bias = (positive.means.sum_axis(Axis(0)) - hidden_means.sum_axis(Axis(0))) / n;
    let reconstruction_error = (&batch - &visible_means).mapv(|d| d * d).sum() / n;

    Ok(CdGradient {
        weights,
        visible_bias,
        hidden_bias,
        reconstruction_error,
    })
}

/// Owns an RBM while it trains: parameters, momentum velocities and the RNG.
#[derive(Debug, Clone)]
pub struct RbmTrainer {
    params: RbmParams,
    cfg: CdConfig,
    velocity_w: Array2<f64>,
    velocity_b: Array1<f64>,
    velocity_c: Array1<f64>,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl RbmTrainer {
    pub fn new(params: RbmParams, cfg: CdConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let (nv, nh) = params.weights.dim();
        Ok(Self {
            velocity_w: Array2::zeros((nv, nh)),
            velocity_b: Array1::zeros(nv),
            velocity_c: Array1::zeros(nh),
            rng: rng_for(cfg.seed, 0),
            params,
            cfg,
            epochs_done: 0,
        })
    }

    pub fn params(&self) -> &RbmParams {
        &self.params
    }

    pub fn into_params(self) -> RbmParams {
        self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn current_momentum(&self) -> f64 {
        if self.epochs_done < self.cfg.momentum_switch_epoch {
            self.cfg.momentum
        } else {
            self.cfg.final_momentum
        }
    }

    /// One momentum step on `batch`; returns the batch reconstruction error.
    ///
    /// `ΔW = momentum·ΔW + lr·(grad − weight_decay·W)`, biases likewise
    /// without decay. Parameters are left untouched if the step is not finite.
    pub fn cd_update(&mut self, batch: ArrayView2<'_, f64>) -> Result<f64> {
        let grad = cd_gradient(&self.params, batch, self.cfg.k, &mut self.rng)?;
        let lr = self.cfg.learning_rate;
        let mom = self.current_momentum();
        let decay = self.cfg.weight_decay;

        let vw = &self.velocity_w * mom + &((&grad.weights - &(&self.params.weights * decay)) * lr);
        let vb = &self.velocity_b * mom + &(&grad.visible_bias * lr);
        let vc = &self.velocity_c * mom + &(&grad.hidden_bias * lr);
        let finite = vw.iter().chain(&vb).chain(&vc).all(|x| x.is_finite())
            && grad.reconstruction_error.is_finite();
        if !finite {
            return Err(Error::Divergence(format!(
                "non-finite CD update after {} epochs (learning rate {lr})",
                self.epochs_done
            )));
        }

        self.params.weights += &vw;
        self.params.visible_bias += &vb;
        self.params.hidden_bias += &vc;
        if !self.params.is_finite() {
            return Err(Error::Divergence("RBM parameters overflowed".into()));
        }
        self.velocity_w = vw;
        self.velocity_b = vb;
        self.velocity_c = vc;
        Ok(grad.reconstruction_error)
    }

    /// One pass over shuffled mini-batches; returns the mean reconstruction error per vector.
    pub fn train_epoch(&mut self, data: ArrayView2<'_, f64>) -> Result<f64> {
        let n = data.nrows();
        if n == 0 {
            return Err(Error::InsufficientData("no training vectors".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch = data.select(Axis(0), chunk);
            total += self.cd_update(batch.view())? * chunk.len() as f64;
        }
        self.epochs_done += 1;
        Ok(total / n as f64)
    }

    /// Runs `cfg.epochs` epochs; returns the per-epoch reconstruction errors.
    pub fn train(&mut self, data: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        (0..self.cfg.epochs).map(|_| self.train_epoch(data)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbm::oracle::ExactRbm;
    use crate::rbm::{HiddenKind, VisibleKind};
    use ndarray::array;

    fn tiny(seed: u64) -> RbmParams {
        let mut rng = rng_for(seed, 7);
        RbmParams::random(3, 2, VisibleKind::Bernoulli, HiddenKind::Bernoulli, 0.1, &mut rng)
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let params = tiny(1);
        let cfg = CdConfig { learning_rate: 0.0, batch_size: 2, epochs: 3, ..Default::default() };
        let mut trainer = RbmTrainer::new(params.clone(), cfg).unwrap();
        let data = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]];
        trainer.train(data.view()).unwrap();
        let after = trainer.params();
        let bits = |p: &RbmParams| p.weights.iter().chain(&p.visible_bias).chain(&p.hidden_bias).map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(after), bits(&params));
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let mut rng = rng_for(2, 0);
        let params = RbmParams::random(4, 3, VisibleKind::Gaussian, HiddenKind::Relu, 0.1, &mut rng);
        let cfg = CdConfig { learning_rate: 1e200, weight_decay: 0.0, epochs: 50, batch_size: 4, ..Default::default() };
        let mut trainer = RbmTrainer::new(params, cfg).unwrap();
        let data = Array2::from_shape_fn((8, 4), |(i, j)| (i as f64 - j as f64) * 3.0);
        let err = trainer.train(data.view()).unwrap_err();
        assert!(err.is_divergence(), "{err}");
    }

    #[test]
    fn deterministic_given_seed() {
        let data = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let cfg = CdConfig { learning_rate: 0.1, batch_size: 2, epochs: 5, seed: 11, ..Default::default() };
        let run = || {
            let mut t = RbmTrainer::new(tiny(3), cfg).unwrap();
            t.train(data.view()).unwrap();
            t.into_params()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_batch() {
        let mut rng = rng_for(0, 0);
        assert!(cd_gradient(&tiny(0), Array2::zeros((0, 3)).view(), 1, &mut rng).is_err());
    }

    /// A single repeated pattern: reconstruction error falls over the first
    /// ten epochs and the exact likelihood of the pattern rises.
    #[test]
    fn single_pattern_is_learned() {
        let data = Array2::from_shape_fn((512, 3), |(_, j)| [1.0, 0.0, 1.0][j]);
        let init = tiny(4);
        let before = ExactRbm::new(&init).unwrap().mean_log_likelihood(data.view()).unwrap();
        let cfg = CdConfig {
            learning_rate: 0.1,
            batch_size: 512,
            epochs: 200,
            momentum: 0.0,
            final_momentum: 0.0,
            weight_decay: 0.0,
            seed: 5,
            ..Default::default()
        };
        let mut trainer = RbmTrainer::new(init, cfg).unwrap();
        let errors = trainer.train(data.view()).unwrap();
        for w in errors[..10].windows(2) {
            assert!(w[1] < w[0], "{:?}", &errors[..10]);
        }
        let after = ExactRbm::new(trainer.params()).unwrap().mean_log_likelihood(data.view()).unwrap();
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn momentum_schedule() {
        let cfg = CdConfig { momentum_switch_epoch: 1, epochs: 2, batch_size: 1, ..Default::default() };
        let mut t = RbmTrainer::new(tiny(6), cfg).unwrap();
        assert_eq!(t.current_momentum(), 0.5);
        t.train_epoch(array![[1.0, 0.0, 0.0]].view()).unwrap();
        assert_eq!(t.current_momentum(), 0.9);
    }
}
