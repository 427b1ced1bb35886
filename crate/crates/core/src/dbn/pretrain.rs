use ndarray::{ArrayView2, Axis};

use super::{DbnModel, DenseLayer, Provenance};
use crate::error::{Error, Result};
use crate::rbm::{CdConfig, HiddenKind, RbmParams, RbmTrainer, VisibleKind};
use crate::seed::rng_for;

/// Frames below which pretraining still runs but logs a warning.
const MIN_FRAMES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub hidden: [usize; 2],
    pub rbm1: CdConfig,
    pub rbm2: CdConfig,
    pub weight_std: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: [200, 200],
            rbm1: CdConfig::gaussian_visible(),
            rbm2: CdConfig::gaussian_visible(),
            weight_std: 0.01,
        }
    }
}

/// A pretrained network with the per-epoch reconstruction errors of both RBMs.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub model: DbnModel,
    pub layer1_errors: Vec<f64>,
    pub layer2_errors: Vec<f64>,
}

/// Greedy layer-wise pretraining.
///
/// The first RBM (Gaussian visibles, noisy-ReLU hiddens) is trained on
/// `frames`; the second, of the same kind, on the first layer's hidden means.
/// Each RBM's hidden bias becomes the corresponding layer bias.
pub fn pretrain(frames: ArrayView2<'_, f64>, cfg: &PretrainConfig) -> Result<Pretrained> {
    if frames.nrows() == 0 {
        return Err(Error::InsufficientData("no frames to pretrain on".into()));
    }
    if cfg.hidden.contains(&0) {
        return Err(Error::Config("hidden layers must be non-empty".into()));
    }
    if !(cfg.weight_std > 0.0 && cfg.weight_std.is_finite()) {
        return Err(Error::Config(format!("invalid weight std {}", cfg.weight_std)));
    }
    if frames.nrows() < MIN_FRAMES {
        log::warn!("pretraining on only {} frames (fewer than {MIN_FRAMES})", frames.nrows());
    }

    let (rbm1, layer1_errors) = train_layer(frames, cfg.hidden[0], &cfg.rbm1, cfg.weight_std)?;
    let hidden1 = rbm1.hidden_means(frames)?;
    let (rbm2, layer2_errors) = train_layer(hidden1.view(), cfg.hidden[1], &cfg.rbm2, cfg.weight_std)?;

    let model = DbnModel::new(into_layer(rbm1), into_layer(rbm2), Provenance::Pretrained)?;
    Ok(Pretrained {
        model,
        layer1_errors,
        layer2_errors,
    })
}

/// Random initial weights for one layer, drawn from the layer's own seed.
pub(crate) fn initial_rbm(n_visible: usize, n_hidden: usize, cd: &CdConfig, weight_std: f64) -> RbmParams {
    let mut rng = rng_for(cd.seed, 1);
    RbmParams::random(n_visible, n_hidden, VisibleKind::Gaussian, HiddenKind::Relu, weight_std, &mut rng)
}

fn train_layer(
    data: ArrayView2<'_, f64>,
    n_hidden: usize,
    cd: &CdConfig,
    weight_std: f64,
) -> Result<(RbmParams, Vec<f64>)> {
    let mut init = initial_rbm(data.ncols(), n_hidden, cd, weight_std);
    init.visible_bias = data.mean_axis(Axis(0)).expect("non-empty");
    let mut trainer = RbmTrainer::new(init, *cd)?;
    let errors = trainer.train(data)?;
    Ok((trainer.into_params(), errors))
}

fn into_layer(rbm: RbmParams) -> DenseLayer {
    DenseLayer {
        weights: rbm.weights,
        bias: rbm.hidden_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::generate_synthetic_corpus;
    use crate::dsp::{fit_whitener, frame_signal, spectrogram, FramingConfig};
    use ndarray::{concatenate, Array2, Axis};

    fn small_cfg(epochs: usize) -> PretrainConfig {
        let mut cfg = PretrainConfig {
            hidden: [20, 10],
            ..Default::default()
        };
        cfg.rbm1.epochs = epochs;
        cfg.rbm2.epochs = epochs;
        cfg.rbm1.seed = 11;
        cfg.rbm2.seed = 12;
        cfg
    }

    fn whitened_frames(n_components: usize) -> Array2<f64> {
        let corpus = generate_synthetic_corpus(2, 2, 1.0, 9).unwrap();
        let fcfg = FramingConfig::default();
        let specs: Vec<Array2<f64>> = corpus
            .utterances()
            .iter()
            .map(|u| {
                let frames = frame_signal(&u.signal, &fcfg).unwrap();
                spectrogram(frames.view(), fcfg.fft_size).unwrap()
            })
            .collect();
        let views: Vec<_> = specs.iter().map(|s| s.view()).collect();
        let stacked = concatenate(Axis(0), &views).unwrap();
        let w = fit_whitener(stacked.view(), n_components, 1e-5).unwrap();
        w.whiten_batch(stacked.view()).unwrap()
    }

    #[test]
    fn zero_epochs_returns_the_initialisation() {
        let frames = Array2::from_shape_fn((50, 6), |(i, j)| ((i * 7 + j) % 5) as f64 - 2.0);
        let cfg = small_cfg(0);
        let out = pretrain(frames.view(), &cfg).unwrap();
        let r1 = initial_rbm(6, 20, &cfg.rbm1, cfg.weight_std);
        let r2 = initial_rbm(20, 10, &cfg.rbm2, cfg.weight_std);
        assert_eq!(out.model.layer1.weights, r1.weights);
        assert_eq!(out.model.layer2.weights, r2.weights);
        assert!(out.model.layer1.bias.iter().all(|&b| b == 0.0));
        assert!(out.layer1_errors.is_empty());
        assert_eq!(out.model.provenance, Provenance::Pretrained);
    }

    #[test]
    fn deterministic() {
        let frames = Array2::from_shape_fn((80, 6), |(i, j)| ((i * 3 + j * 5) % 7) as f64 / 3.0 - 1.0);
        let a = pretrain(frames.view(), &small_cfg(3)).unwrap();
        let b = pretrain(frames.view(), &small_cfg(3)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.layer1_errors, b.layer1_errors);
    }

    #[test]
    fn first_layer_error_falls_on_synthetic_speech() {
        let frames = whitened_frames(32);
        let mut cfg = small_cfg(30);
        cfg.hidden = [40, 20];
        let out = pretrain(frames.view(), &cfg).unwrap();
        let first = out.layer1_errors[0];
        let last = *out.layer1_errors.last().unwrap();
        assert!(last < first, "errors {:?}", out.layer1_errors);
    }

    #[test]
    fn rejects_empty_layer() {
        let frames = Array2::zeros((10, 3));
        let cfg = PretrainConfig { hidden: [0, 4], ..Default::default() };
        assert!(pretrain(frames.view(), &cfg).is_err());
    }
}
