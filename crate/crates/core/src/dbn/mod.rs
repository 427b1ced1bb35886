//! Two-layer deep belief network: greedy RBM pretraining, softmax fine-tuning
//! and extraction of the first- and second-layer activations as frame features.

mod finetune;
mod pretrain;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

pub use finetune::{
    backprop, compare_gradients, finetune, gradient_check, DbnGradient, FineTuneConfig, FineTuneOutcome,
};
pub use pretrain::{pretrain, PretrainConfig, Pretrained};

use crate::error::{Error, Result};

/// Affine map `x -> x·W + b` with `W` stored as `inputs × outputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.ncols(),
                found: bias.len(),
            });
        }
        if !weights.iter().chain(&bias).all(|x| x.is_finite()) {
            return Err(Error::Divergence("non-finite layer weights".into()));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Pre-activations for each row of `x`.
    pub fn affine(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(x.dot(&self.weights) + &self.bias)
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Pretrained,
    Finetuned,
}

/// Two ReLU layers plus the softmax head used while fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
    pub head: Option<DenseLayer>,
    pub provenance: Provenance,
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

impl DbnModel {
    pub fn new(layer1: DenseLayer, layer2: DenseLayer, provenance: Provenance) -> Result<Self> {
        if layer1.output_dim() != layer2.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: layer1.output_dim(),
                found: layer2.input_dim(),
            });
        }
        Ok(Self {
            layer1,
            layer2,
            head: None,
            provenance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn l1_dim(&self) -> usize {
        self.layer1.output_dim()
    }

    pub fn l2_dim(&self) -> usize {
        self.layer2.output_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layer1.is_finite() && self.layer2.is_finite() && self.head.as_ref().is_none_or(DenseLayer::is_finite)
    }

    /// L1 and L2 activations, one row per frame. The head is never applied.
    pub fn extract_features(&self, frames: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let l1 = self.layer1.affine(frames)?.mapv_into(relu);
        let l2 = self.layer2.affine(l1.view())?.mapv_into(relu);
        Ok((l1, l2))
    }

    pub fn extract_frame(&self, frame: ArrayView1<'_, f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let (l1, l2) = self.extract_features(frame.insert_axis(Axis(0)))?;
        Ok((l1.row(0).to_owned(), l2.row(0).to_owned()))
    }
}
