use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;

use super::{relu, DbnModel, DenseLayer, Provenance};
use crate::error::{Error, Result};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FineTuneConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs without a held-out accuracy improvement before stopping.
    pub patience: usize,
    /// Fraction of frames held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 64,
            seed: 0,
            patience: 5,
            validation_fraction: 0.1,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!(
                "validation fraction {} outside [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FineTuneOutcome {
    pub model: DbnModel,
    /// Mean training cross-entropy; entry 0 is before any update.
    pub losses: Vec<f64>,
    /// Held-out accuracy per epoch, entry 0 before any update. Empty without a held-out set.
    pub validation_accuracy: Vec<f64>,
    /// Epoch whose weights were kept (0 means the initial weights).
    pub best_epoch: usize,
}

/// Gradient of the mean cross-entropy for every parameter of a network with a head.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnGradient {
    pub layers: [DenseLayer; 3],
}

impl DbnGradient {
    /// Flattened as `(W1, b1, W2, b2, W3, b3)`, weights row-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

struct Forward {
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    probs: Array2<f64>,
}

fn head_of(model: &DbnModel) -> Result<&DenseLayer> {
    model
        .head
        .as_ref()
        .ok_or_else(|| Error::Config("network has no classification head".into()))
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row /= total;
    }
    logits
}

fn forward(model: &DbnModel, x: ArrayView2<'_, f64>) -> Result<Forward> {
    let head = head_of(model)?;
    let z1 = model.layer1.affine(x)?;
    let a1 = z1.mapv(relu);
    let z2 = model.layer2.affine(a1.view())?;
    let a2 = z2.mapv(relu);
    let probs = softmax_rows(head.affine(a2.view())?);
    Ok(Forward { z1, a1, z2, a2, probs })
}

fn cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs[[i, y]].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / labels.len() as f64
}

fn loss(model: &DbnModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    Ok(cross_entropy(&forward(model, x)?.probs, labels))
}

fn accuracy(model: &DbnModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let probs = forward(model, x)?.probs;
    let hits = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.iter().copied()) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// First index of the maximum.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn check_labels(model: &DbnModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("no labelled frames".into()));
    }
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: labels.len(),
        });
    }
    if let Some(head) = &model.head {
        if let Some(&bad) = labels.iter().find(|&&y| y >= head.output_dim()) {
            return Err(Error::Config(format!(
                "label {bad} outside a {}-class head",
                head.output_dim()
            )));
        }
    }
    Ok(())
}

/// Mean cross-entropy of `x` against `labels` and its exact gradient.
/// The model must carry a head; ReLU derivatives are taken as 0 at the kink.
pub fn backprop(model: &DbnModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<(f64, DbnGradient)> {
    check_labels(model, x, labels)?;
    let head = head_of(model)?;
    let fw = forward(model, x)?;
    let n = labels.len() as f64;
    let loss = cross_entropy(&fw.probs, labels);

    let mut d3 = fw.probs;
    for (i, &y) in labels.iter().enumerate() {
        d3[[i, y]] -= 1.0;
    }
    d3 /= n;

    let mut d2 = d3.dot(&head.weights.t());
    Zip::from(&mut d2).and(&fw.z2).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let mut d1 = d2.dot(&model.layer2.weights.t());
    Zip::from(&mut d1).and(&fw.z1).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });

    let layer = |input: ArrayView2<'_, f64>, delta: &Array2<f64>| DenseLayer {
        weights: input.t().dot(delta),
        bias: delta.sum_axis(Axis(0)),
    };
    let grad = DbnGradient {
        layers: [layer(x, &d1), layer(fw.a1.view(), &d2), layer(fw.a2.view(), &d3)],
    };
    Ok((loss, grad))
}

fn n_classes(labels: &[usize]) -> Result<usize> {
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(distinct.len()));
    }
    Ok(distinct.last().map_or(0, |&m| m + 1))
}

fn sgd_step(model: &mut DbnModel, grad: &DbnGradient, lr: f64) {
    let head = model.head.as_mut().expect("head attached before training");
    for (layer, g) in [&mut model.layer1, &mut model.layer2, head].into_iter().zip(&grad.layers) {
        layer.weights.scaled_add(-lr, &g.weights);
        layer.bias.scaled_add(-lr, &g.bias);
    }
}

/// Supervised fine-tuning with a freshly attached, zero-initialised softmax head.
///
/// Frames are split once into a training part and an optional held-out part.
/// Training runs mini-batch gradient descent on the mean cross-entropy; with a
/// held-out part it stops after `patience` epochs without an accuracy gain and
/// keeps the best weights seen.
pub fn finetune(
    model: &DbnModel,
    frames: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &FineTuneConfig,
) -> Result<FineTuneOutcome> {
    cfg.validate()?;
    let mut current = model.clone();
    current.head = None;
    check_labels(&current, frames, labels)?;
    let classes = n_classes(labels)?;
    current.head = Some(DenseLayer::zeros(current.l2_dim(), classes));
    current.provenance = Provenance::Finetuned;

    let mut rng = rng_for(cfg.seed, 0);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * labels.len() as f64).floor() as usize;
    let n_val = if n_val > 0 && n_val < labels.len() { n_val } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let pick = |idx: &[usize]| (frames.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    let (train_x, train_y) = pick(&train_idx);
    let (val_x, val_y) = pick(val_idx);

    let mut losses = vec![loss(&current, train_x.view(), &train_y)?];
    let mut validation_accuracy = Vec::new();
    let mut best = (0, f64::NEG_INFINITY, current.clone());
    if n_val > 0 {
        let acc = accuracy(&current, val_x.view(), &val_y)?;
        validation_accuracy.push(acc);
        best.1 = acc;
    }

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(cfg.batch_size) {
            let batch_x = frames.select(Axis(0), chunk);
            let batch_y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (_, grad) = backprop(&current, batch_x.view(), &batch_y)?;
            sgd_step(&mut current, &grad, cfg.learning_rate);
        }
        if !current.is_finite() {
            return Err(Error::Divergence(format!(
                "fine-tuning weights overflowed in epoch {epoch} (learning rate {})",
                cfg.learning_rate
            )));
        }
        losses.push(loss(&current, train_x.view(), &train_y)?);

        if n_val > 0 {
            let acc = accuracy(&current, val_x.view(), &val_y)?;
            validation_accuracy.push(acc);
            if acc > best.1 {
                best = (epoch, acc, current.clone());
            } else if epoch - best.0 >= cfg.patience {
                log::debug!("early stop after epoch {epoch}; best held-out accuracy {:.4} at {}", best.1, best.0);
                break;
            }
        }
    }

    let (best_epoch, model) = if n_val > 0 {
        (best.0, best.2)
    } else {
        (losses.len() - 1, current)
    };
    Ok(FineTuneOutcome {
        model,
        losses,
        validation_accuracy,
        best_epoch,
    })
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

const FD_STEP: f64 = 1e-5;

/// Largest relative error between `analytic` and central finite differences
/// of the mean cross-entropy, taken over every parameter.
pub fn compare_gradients(
    model: &DbnModel,
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    analytic: &DbnGradient,
) -> Result<f64> {
    check_labels(model, x, labels)?;
    let flat = analytic.flatten();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (idx, &a) in flat.iter().enumerate() {
        let base = *param(&mut probe, idx);
        *param(&mut probe, idx) = base + FD_STEP;
        let plus = loss(&probe, x, labels)?;
        *param(&mut probe, idx) = base - FD_STEP;
        let minus = loss(&probe, x, labels)?;
        *param(&mut probe, idx) = base;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

/// Backprop against finite differences (step 1e-5). A model without a head
/// gets a zero head sized to the labels.
pub fn gradient_check(model: &DbnModel, x: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    let mut model = model.clone();
    if model.head.is_none() {
        let classes = labels.iter().max().map_or(1, |&m| m + 1);
        model.head = Some(DenseLayer::zeros(model.l2_dim(), classes));
    }
    let (_, grad) = backprop(&model, x, labels)?;
    compare_gradients(&model, x, labels, &grad)
}

/// Mutable access to parameter `idx` in flattened `(W1, b1, W2, b2, W3, b3)` order.
fn param(model: &mut DbnModel, mut idx: usize) -> &mut f64 {
    let head = model.head.as_mut().expect("head checked by caller");
    for layer in [&mut model.layer1, &mut model.layer2, head] {
        if idx < layer.weights.len() {
            let cols = layer.weights.ncols();
            return &mut layer.weights[[idx / cols, idx % cols]];
        }
        idx -= layer.weights.len();
        if idx < layer.bias.len() {
            return &mut layer.bias[idx];
        }
        idx -= layer.bias.len();
    }
    panic!("parameter index out of range")
}

#[cfg(test)]
fn probabilities(model: &DbnModel, x: ArrayView2<'_, f64>) -> Array2<f64> {
    forward(model, x).unwrap().probs
}
