//! From-scratch feedforward classifier over the three-efficiency features.
//!
//! Architecture: 3 -> 128 -> 100 -> K dense layers, LeakyReLU hidden
//! activations, softmax output, categorical cross-entropy loss, trained with
//! mini-batch adaptive-moment gradient descent. Everything is deterministic
//! given the seed: initialization, shuffling, and updates run single-threaded
//! in a fixed order; only evaluation fans out over samples (with an
//! order-independent count reduction).

use crate::dataset::{DatasetSplit, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, salt};
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Hidden widths shared by every classifier in the study.
pub const HIDDEN_DIMS: [usize; 2] = [128, 100];
/// Negative-side slope of the hidden activation.
pub const LEAKY_ALPHA: f64 = 0.01;
/// Probability floor applied before the loss logarithm.
const PROB_CLAMP: f64 = 1e-12;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One dense layer, weights row-major (rows x cols = out x in).
#[derive(Debug, Clone)]
struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Layer {
    /// z = W y + b.
    fn affine(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = self.b[r];
            for (wi, yi) in row.iter().zip(y) {
                acc += wi * yi;
            }
            out.push(acc);
        }
    }
}

/// The classifier's parameters.
#[derive(Debug, Clone)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    leaky_alpha: f64,
}

/// Optimizer and schedule knobs; the defaults are the ones used throughout.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            early_stop_patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Everything measured during one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub test_accuracy: f64,
    /// Counts, rows = true class, columns = predicted class.
    pub confusion: Vec<Vec<usize>>,
}

/// Per-layer gradients, same shapes as the parameters (dw row-major).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl MlpModel {
    /// A model with the given layer widths (input first), He-style uniform
    /// weights U(-a, a) with a = sqrt(2 / fan_in) and zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer dims need at least input and output, all nonzero, got {dims:?}"
            )));
        }
        let mut rng = derive_rng(seed, &[salt::MLP_INIT]);
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (cols, rows) = (pair[0], pair[1]);
                let a = (2.0 / cols as f64).sqrt();
                Layer {
                    rows,
                    cols,
                    w: (0..rows * cols).map(|_| rng.random_range(-a..a)).collect(),
                    b: vec![0.0; rows],
                }
            })
            .collect();
        Ok(Self {
            layer_dims: dims.to_vec(),
            layers,
            leaky_alpha: LEAKY_ALPHA,
        })
    }

    /// Rebuild a model from explicit parameters, validating every shape.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<Vec<f64>>>,
        biases: Vec<Vec<f64>>,
        leaky_alpha: f64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "bad layer dims {layer_dims:?}"
            )));
        }
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers || biases.len() != n_layers {
            return Err(Error::ShapeMismatch(format!(
                "{n_layers} layers need {n_layers} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        if !(leaky_alpha.is_finite() && leaky_alpha >= 0.0) {
            return Err(Error::ShapeMismatch(format!(
                "bad activation slope {leaky_alpha}"
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (l, (wm, bv)) in weights.into_iter().zip(biases).enumerate() {
            let (cols, rows) = (layer_dims[l], layer_dims[l + 1]);
            if wm.len() != rows || bv.len() != rows {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: expected {rows} rows, got {} weight rows and {} biases",
                    wm.len(),
                    bv.len()
                )));
            }
            let mut w = Vec::with_capacity(rows * cols);
            for row in &wm {
                if row.len() != cols {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {l}: expected {cols} columns, got {}",
                        row.len()
                    )));
                }
                w.extend_from_slice(row);
            }
            if w.iter().chain(&bv).any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: non-finite parameter"
                )));
            }
            layers.push(Layer { rows, cols, w, b: bv });
        }
        Ok(Self {
            layer_dims,
            layers,
            leaky_alpha,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn leaky_alpha(&self) -> f64 {
        self.leaky_alpha
    }

    /// Weight matrices as nested row-major arrays (for serialization).
    pub fn weight_rows(&self) -> Vec<Vec<Vec<f64>>> {
        self.layers
            .iter()
            .map(|l| l.w.chunks(l.cols).map(<[f64]>::to_vec).collect())
            .collect()
    }

    pub fn bias_vectors(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.b.clone()).collect()
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} components, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut y = x.to_vec();
        let mut z = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.affine(&y, &mut z);
            if l + 1 == self.layers.len() {
                softmax_in_place(&mut z);
            } else {
                for v in &mut z {
                    if *v < 0.0 {
                        *v *= self.leaky_alpha;
                    }
                }
            }
            std::mem::swap(&mut y, &mut z);
        }
        Ok(y)
    }

    /// Forward pass keeping preactivations and activations per layer.
    /// Returns (z per layer, y per layer) with y[0] = input.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut zs = Vec::with_capacity(self.layers.len());
        let mut ys = Vec::with_capacity(self.layers.len() + 1);
        ys.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.affine(ys.last().unwrap(), &mut z);
            zs.push(z.clone());
            if l + 1 == self.layers.len() {
                softmax_in_place(&mut z);
            } else {
                for v in &mut z {
                    if *v < 0.0 {
                        *v *= self.leaky_alpha;
                    }
                }
            }
            ys.push(z);
        }
        (zs, ys)
    }

    /// Mean gradients of the cross-entropy over the batch, by backpropagation.
    pub fn backward(&self, inputs: &[Vec<f64>], targets: &[Vec<u8>]) -> Result<Gradients> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} inputs and {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let k = self.n_classes();
        let mut grads = Gradients {
            dw: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        };
        let scale = 1.0 / inputs.len() as f64;
        for (x, t) in inputs.iter().zip(targets) {
            if t.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "target has {} components, model has {k} classes",
                    t.len()
                )));
            }
            let (zs, ys) = self.forward_trace(x);
            // Softmax + one-hot cross-entropy: dL/dz_out = y - t.
            let mut delta: Vec<f64> = ys
                .last()
                .unwrap()
                .iter()
                .zip(t)
                .map(|(y, &ti)| y - f64::from(ti))
                .collect();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let y_prev = &ys[l];
                let dw = &mut grads.dw[l];
                for r in 0..layer.rows {
                    let d = delta[r] * scale;
                    grads.db[l][r] += d;
                    let row = &mut dw[r * layer.cols..(r + 1) * layer.cols];
                    for (g, yp) in row.iter_mut().zip(y_prev) {
                        *g += d * yp;
                    }
                }
                if l == 0 {
                    break;
                }
                let mut prev = vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let d = delta[r];
                    let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += wi * d;
                    }
                }
                for (p, z) in prev.iter_mut().zip(&zs[l - 1]) {
                    if *z < 0.0 {
                        *p *= self.leaky_alpha;
                    }
                }
                delta = prev;
            }
        }
        Ok(grads)
    }
}

/// Softmax with max-subtraction so large logits cannot overflow.
fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// The spec'd architecture for the study: 3 -> 128 -> 100 -> K.
pub fn init_model(k: usize, seed: u64) -> Result<MlpModel> {
    if !(k == 4 || k == 5) {
        return Err(Error::InvalidArgument(format!(
            "the classifier distinguishes 4 or 5 classes, got {k}"
        )));
    }
    MlpModel::new(&[3, HIDDEN_DIMS[0], HIDDEN_DIMS[1], k], seed)
}

/// Mean categorical cross-entropy, probabilities floored at 1e-12.
pub fn cross_entropy(predictions: &[Vec<f64>], targets: &[Vec<u8>]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != t.len() {
            return Err(Error::ShapeMismatch(format!(
                "prediction of length {} vs target of length {}",
                p.len(),
                t.len()
            )));
        }
        for (pi, &ti) in p.iter().zip(t) {
            if ti != 0 {
                // A plain f64::max would drop NaN here and hide divergence.
                let floored = if *pi >= PROB_CLAMP { *pi } else if pi.is_nan() { *pi } else { PROB_CLAMP };
                total -= f64::from(ti) * floored.ln();
            }
        }
    }
    Ok(total / predictions.len() as f64)
}

/// Index of the largest component, ties broken toward the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn unpack(samples: &[LabeledSample], k: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<u8>>)> {
    let mut xs = Vec::with_capacity(samples.len());
    let mut ts = Vec::with_capacity(samples.len());
    for s in samples {
        if s.label.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "sample labeled over {} classes, model has {k}",
                s.label.len()
            )));
        }
        xs.push(s.features.as_array().to_vec());
        ts.push(s.label.clone());
    }
    Ok((xs, ts))
}

/// Loss and accuracy of the model over a fixed set.
fn dataset_metrics(model: &MlpModel, xs: &[Vec<f64>], ts: &[Vec<u8>]) -> Result<(f64, f64)> {
    let preds: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| model.forward(x))
        .collect::<Result<_>>()?;
    let loss = cross_entropy(&preds, ts)?;
    let correct = preds
        .iter()
        .zip(ts)
        .filter(|(p, t)| t[argmax(p)] != 0)
        .count();
    Ok((loss, correct as f64 / xs.len() as f64))
}

/// Adam state per layer.
struct Moments {
    mw: Vec<Vec<f64>>,
    vw: Vec<Vec<f64>>,
    mb: Vec<Vec<f64>>,
    vb: Vec<Vec<f64>>,
}

/// Trains with mini-batch Adam, early-stops on validation loss, restores the
/// best parameters, and scores the held-out test set.
pub fn train(
    mut model: MlpModel,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if split.train.is_empty() || split.validation.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs non-empty train, validation and test sets".into(),
        ));
    }
    if cfg.batch_size > split.train.len() {
        return Err(Error::InvalidArgument(format!(
            "batch_size {} exceeds the training set of {}",
            cfg.batch_size,
            split.train.len()
        )));
    }
    let k = model.n_classes();
    let (train_x, train_t) = unpack(&split.train, k)?;
    let (val_x, val_t) = unpack(&split.validation, k)?;

    let mut moments = Moments {
        mw: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
        vw: model.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
        mb: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        vb: model.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
    };
    let mut step = 0u64;

    let mut report = TrainReport {
        train_loss: Vec::new(),
        train_accuracy: Vec::new(),
        val_loss: Vec::new(),
        val_accuracy: Vec::new(),
        best_epoch: 0,
        epochs_run: 0,
        test_accuracy: 0.0,
        confusion: vec![vec![0; k]; k],
    };
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut patience_left = cfg.early_stop_patience;
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut batch_x: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_t: Vec<Vec<u8>> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        {
            use rand::seq::SliceRandom;
            let mut rng = derive_rng(cfg.seed, &[salt::MLP_SHUFFLE, epoch as u64]);
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_t.clear();
            for &i in chunk {
                batch_x.push(train_x[i].clone());
                batch_t.push(train_t[i].clone());
            }
            let grads = model.backward(&batch_x, &batch_t)?;
            step += 1;
            adam_update(&mut model, &mut moments, &grads, cfg.learning_rate, step);
        }

        let (tl, ta) = dataset_metrics(&model, &train_x, &train_t)?;
        let (vl, va) = dataset_metrics(&model, &val_x, &val_t)?;
        if !(tl.is_finite() && vl.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                loss: if tl.is_finite() { vl } else { tl },
            });
        }
        report.train_loss.push(tl);
        report.train_accuracy.push(ta);
        report.val_loss.push(vl);
        report.val_accuracy.push(va);
        report.epochs_run = epoch;

        if vl < best.0 {
            best = (vl, model.clone(), epoch);
            patience_left = cfg.early_stop_patience;
        } else if patience_left <= 1 {
            break;
        } else {
            patience_left -= 1;
        }
    }

    let (_, best_model, best_epoch) = best;
    model = best_model;
    report.best_epoch = best_epoch;
    let (acc, confusion) = evaluate(&model, &split.test)?;
    report.test_accuracy = acc;
    report.confusion = confusion;
    Ok((model, report))
}

fn adam_update(
    model: &mut MlpModel,
    mo: &mut Moments,
    grads: &Gradients,
    lr: f64,
    step: u64,
) {
    let c1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(step as i32);
    for l in 0..model.layers.len() {
        let layer = &mut model.layers[l];
        for (i, g) in grads.dw[l].iter().enumerate() {
            let m = &mut mo.mw[l][i];
            let v = &mut mo.vw[l][i];
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            layer.w[i] -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
        for (i, g) in grads.db[l].iter().enumerate() {
            let m = &mut mo.mb[l][i];
            let v = &mut mo.vb[l][i];
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            layer.b[i] -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Accuracy and confusion matrix (rows = true class, columns = predicted).
/// Fans out over samples; the count reduction is order-independent, so the
/// result does not depend on the worker pool.
pub fn evaluate(model: &MlpModel, samples: &[LabeledSample]) -> Result<(f64, Vec<Vec<usize>>)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty set".into(),
        ));
    }
    let k = model.n_classes();
    let confusion = samples
        .par_iter()
        .map(|s| -> Result<(usize, usize)> {
            if s.label.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "sample labeled over {} classes, model has {k}",
                    s.label.len()
                )));
            }
            let truth = s.label_index();
            let probs = model.forward(&s.features.as_array())?;
            Ok((truth, argmax(&probs)))
        })
        .try_fold(
            || vec![vec![0usize; k]; k],
            |mut acc, pair| -> Result<Vec<Vec<usize>>> {
                let (t, p) = pair?;
                acc[t][p] += 1;
                Ok(acc)
            },
        )
        .try_reduce(
            || vec![vec![0usize; k]; k],
            |mut a, b| -> Result<Vec<Vec<usize>>> {
                for (ra, rb) in a.iter_mut().zip(&b) {
                    for (ca, cb) in ra.iter_mut().zip(rb) {
                        *ca += cb;
                    }
                }
                Ok(a)
            },
        )?;
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    Ok((correct as f64 / samples.len() as f64, confusion))
}

/// On-disk checkpoint: parameters plus the run that produced them.
#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    layer_dims: Vec<usize>,
    leaky_alpha: f64,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    seed: u64,
    config: TrainConfig,
    metrics: TrainReport,
}

pub fn save_model(
    path: &Path,
    model: &MlpModel,
    cfg: &TrainConfig,
    report: &TrainReport,
) -> Result<()> {
    let doc = Checkpoint {
        layer_dims: model.layer_dims.clone(),
        leaky_alpha: model.leaky_alpha,
        weights: model.weight_rows(),
        biases: model.bias_vectors(),
        seed: cfg.seed,
        config: *cfg,
        metrics: report.clone(),
    };
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer(&mut w, &doc)?;
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(MlpModel, TrainConfig, TrainReport)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
    let model = MlpModel::from_parts(doc.layer_dims, doc.weights, doc.biases, doc.leaky_alpha)?;
    Ok((model, doc.config, doc.metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::noise::NoiseSpec;

    fn sample(features: [f64; 3], label: Vec<u8>) -> LabeledSample {
        LabeledSample {
            features: FeatureVector {
                xi_eq: features[0],
                xi_pg: features[1],
                xi_pl: features[2],
            },
            label,
            provenance: NoiseSpec::quasistatic_correlated(1.0, 17.6).unwrap(),
        }
    }

    fn one_hot(k: usize, i: usize) -> Vec<u8> {
        let mut v = vec![0u8; k];
        v[i] = 1;
        v
    }

    /// Two linearly separable blobs in feature space, labels 0 and 1 of K=4.
    fn separable_split(n_per: usize) -> DatasetSplit {
        let make = |lo: f64, class: usize, n: usize| -> Vec<LabeledSample> {
            (0..n)
                .map(|i| {
                    let t = i as f64 / n as f64 * 0.2;
                    sample([lo + t, lo + 0.1 * t, 1.0 - lo - t], one_hot(4, class))
                })
                .collect()
        };
        let mut train = make(0.1, 0, n_per);
        train.extend(make(0.7, 1, n_per));
        let mut validation = make(0.12, 0, n_per / 4);
        validation.extend(make(0.72, 1, n_per / 4));
        let mut test = make(0.14, 0, n_per / 4);
        test.extend(make(0.74, 1, n_per / 4));
        DatasetSplit {
            train,
            validation,
            test,
        }
    }

    #[test]
    fn initialization_is_seeded_and_shaped() {
        let a = init_model(4, 7).unwrap();
        let b = init_model(4, 7).unwrap();
        let c = init_model(4, 8).unwrap();
        assert_eq!(a.layer_dims(), &[3, 128, 100, 4]);
        assert_eq!(a.weight_rows(), b.weight_rows());
        assert_ne!(a.weight_rows(), c.weight_rows());
        assert!(a.bias_vectors().iter().flatten().all(|&v| v == 0.0));
        let out = &a.weight_rows()[2];
        assert_eq!((out.len(), out[0].len()), (4, 100));
        assert!(init_model(6, 0).is_err());
        assert!(init_model(3, 0).is_err());
    }

    #[test]
    fn hidden_layer_weights_match_the_target_spread() {
        let m = init_model(5, 123).unwrap();
        let w: Vec<f64> = m.weight_rows()[1].iter().flatten().copied().collect();
        assert_eq!(w.len(), 12800);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
        let target = (2.0 / 128.0_f64).sqrt() / 3.0_f64.sqrt();
        let ratio = var.sqrt() / target;
        assert!((0.9..1.1).contains(&ratio), "stddev ratio {ratio}");
        let bound = (2.0 / 128.0_f64).sqrt();
        assert!(w.iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn forward_is_a_probability_vector() {
        let m = init_model(5, 3).unwrap();
        for x in [[0.1, 0.5, 0.9], [1.0, 0.0, 1.0], [0.33, 0.33, 0.33]] {
            let p = m.forward(&x).unwrap();
            assert_eq!(p.len(), 5);
            assert!(p.iter().all(|&v| v > 0.0));
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!(m.forward(&[0.1, 0.2]).is_err());
    }

    #[test]
    fn zero_parameters_give_the_uniform_output() {
        let dims = vec![3usize, 128, 100, 4];
        let weights = dims
            .windows(2)
            .map(|p| vec![vec![0.0; p[0]]; p[1]])
            .collect();
        let biases = dims.windows(2).map(|p| vec![0.0; p[1]]).collect();
        let m = MlpModel::from_parts(dims, weights, biases, LEAKY_ALPHA).unwrap();
        let p = m.forward(&[0.4, 0.2, 0.8]).unwrap();
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_shift_leaves_the_output_unchanged() {
        let m = init_model(4, 11).unwrap();
        let mut shifted = m.clone();
        for b in &mut shifted.layers.last_mut().unwrap().b {
            *b += 37.5;
        }
        let x = [0.3, 0.6, 0.9];
        let a = m.forward(&x).unwrap();
        let b = shifted.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn hidden_units_leak_on_the_negative_side() {
        // 1 -> 1 -> 2 toy: the hidden output is recovered from the logit gap
        // ln(p0 / p1) since the output row is (1, 0).
        let m = MlpModel::from_parts(
            vec![1, 1, 2],
            vec![vec![vec![-3.0]], vec![vec![1.0], vec![0.0]]],
            vec![vec![0.0], vec![0.0, 0.0]],
            0.01,
        )
        .unwrap();
        let hidden = |x: f64| {
            let p = m.forward(&[x]).unwrap();
            (p[0] / p[1]).ln()
        };
        assert!((hidden(2.0) - 0.01 * (-6.0)).abs() < 1e-12);
        assert!((hidden(-2.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_hand_values() {
        let uniform = vec![vec![0.25; 4]];
        let target = vec![one_hot(4, 2)];
        let l = cross_entropy(&uniform, &target).unwrap();
        assert!((l - 4.0_f64.ln()).abs() < 1e-12);

        let perfect = vec![vec![0.0, 0.0, 1.0, 0.0]];
        let lp = cross_entropy(&perfect, &target).unwrap();
        assert!((0.0..=1e-10).contains(&lp));

        let both = vec![uniform[0].clone(), perfect[0].clone()];
        let targets = vec![target[0].clone(), target[0].clone()];
        let lm = cross_entropy(&both, &targets).unwrap();
        assert!((lm - (l + lp) / 2.0).abs() < 1e-12);

        assert!(cross_entropy(&both, &target).is_err());
        assert!(cross_entropy(&[vec![1.0, 0.0]], &target).is_err());
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut worst: f64 = 0.0;
        for toy in 0..20 {
            let model = MlpModel::new(&[3, 5, 4], 1000 + toy).unwrap();
            let mut rng = derive_rng(9000 + toy, &[]);
            let xs: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let ts: Vec<Vec<u8>> = (0..8).map(|_| one_hot(4, rng.random_range(0..4))).collect();
            let grads = model.backward(&xs, &ts).unwrap();

            let loss_of = |m: &MlpModel| {
                let preds: Vec<Vec<f64>> = xs.iter().map(|x| m.forward(x).unwrap()).collect();
                cross_entropy(&preds, &ts).unwrap()
            };
            let h = 1e-5;
            for l in 0..model.layers.len() {
                for i in 0..model.layers[l].w.len() {
                    let mut plus = model.clone();
                    plus.layers[l].w[i] += h;
                    let mut minus = model.clone();
                    minus.layers[l].w[i] -= h;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let a = grads.dw[l][i];
                    let rel = (a - fd).abs() / (a.abs() + 1e-8);
                    worst = worst.max(rel);
                }
                for i in 0..model.layers[l].b.len() {
                    let mut plus = model.clone();
                    plus.layers[l].b[i] += h;
                    let mut minus = model.clone();
                    minus.layers[l].b[i] -= h;
                    let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                    let a = grads.db[l][i];
                    let rel = (a - fd).abs() / (a.abs() + 1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }

    #[test]
    fn degenerate_batches_have_the_expected_gradients() {
        let model = MlpModel::new(&[3, 5, 4], 55).unwrap();
        let zero_in = vec![vec![0.0; 3]; 4];
        let ts: Vec<Vec<u8>> = (0..4).map(|i| one_hot(4, i)).collect();
        let g = model.backward(&zero_in, &ts).unwrap();
        assert!(g.dw[0].iter().all(|&v| v == 0.0));

        let x = vec![vec![0.2, 0.7, 0.4]];
        let t = vec![one_hot(4, 1)];
        let single = model.backward(&x, &t).unwrap();
        let doubled = model
            .backward(&[x[0].clone(), x[0].clone()], &[t[0].clone(), t[0].clone()])
            .unwrap();
        for l in 0..single.dw.len() {
            for (a, b) in single.dw[l].iter().zip(&doubled.dw[l]) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn constant_label_problem_is_learned_within_five_epochs() {
        let k = 4;
        let make = |n: usize| -> Vec<LabeledSample> {
            (0..n)
                .map(|i| {
                    let t = i as f64 / n as f64;
                    sample([0.2 + 0.6 * t, 0.5, 0.9 - 0.5 * t], one_hot(k, 2))
                })
                .collect()
        };
        let split = DatasetSplit {
            train: make(64),
            validation: make(16),
            test: make(16),
        };
        let cfg = TrainConfig {
            epochs: 5,
            seed: 4,
            ..TrainConfig::default()
        };
        let (_, report) = train(init_model(k, 4).unwrap(), &split, &cfg).unwrap();
        assert_eq!(report.test_accuracy, 1.0);
        assert_eq!(report.confusion[2][2], 16);
    }

    #[test]
    fn separable_problem_training_loss_collapses() {
        let split = separable_split(64);
        let cfg = TrainConfig {
            epochs: 100,
            early_stop_patience: 1000,
            seed: 21,
            ..TrainConfig::default()
        };
        let (_, report) = train(init_model(4, 21).unwrap(), &split, &cfg).unwrap();
        assert_eq!(report.epochs_run, 100);
        assert!(
            report.train_loss[99] < 0.1 * report.train_loss[0],
            "epoch-1 loss {} vs epoch-100 loss {}",
            report.train_loss[0],
            report.train_loss[99]
        );
        assert_eq!(report.test_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let split = separable_split(32);
        let cfg = TrainConfig {
            epochs: 12,
            seed: 77,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(init_model(4, 77).unwrap(), &split, &cfg).unwrap();
        let (m2, r2) = train(init_model(4, 77).unwrap(), &split, &cfg).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m1.weight_rows(), m2.weight_rows());
        assert_eq!(m1.bias_vectors(), m2.bias_vectors());
    }

    #[test]
    fn non_finite_loss_aborts_with_a_diagnostic() {
        let mut split = separable_split(16);
        split.train[0].features.xi_eq = f64::NAN;
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..TrainConfig::default()
        };
        let err = train(init_model(4, 5).unwrap(), &split, &cfg).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 1, .. }), "{err}");
    }

    #[test]
    fn bad_training_inputs_are_rejected() {
        let split = separable_split(16);
        let empty = DatasetSplit {
            train: Vec::new(),
            validation: split.validation.clone(),
            test: split.test.clone(),
        };
        let cfg = TrainConfig::default();
        assert!(train(init_model(4, 0).unwrap(), &empty, &cfg).is_err());

        let too_big = TrainConfig {
            batch_size: 10_000,
            ..TrainConfig::default()
        };
        assert!(train(init_model(4, 0).unwrap(), &split, &too_big).is_err());

        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());

        // A 5-class model cannot consume 4-class labels.
        assert!(train(init_model(5, 0).unwrap(), &split, &cfg).is_err());
    }

    #[test]
    fn uniform_predictor_accuracy_follows_the_tie_break() {
        let dims = vec![3usize, 2, 4];
        let weights = dims
            .windows(2)
            .map(|p| vec![vec![0.0; p[0]]; p[1]])
            .collect();
        let biases = dims.windows(2).map(|p| vec![0.0; p[1]]).collect();
        let m = MlpModel::from_parts(dims, weights, biases, LEAKY_ALPHA).unwrap();
        let samples: Vec<LabeledSample> = (0..8)
            .map(|i| sample([0.1 * i as f64 / 8.0, 0.5, 0.9], one_hot(4, i % 4)))
            .collect();
        let (acc, confusion) = evaluate(&m, &samples).unwrap();
        // Equal logits everywhere: every prediction lands on index 0.
        assert!((acc - 0.25).abs() < 1e-12);
        for (r, row) in confusion.iter().enumerate() {
            assert_eq!(row[0], 2, "row {r}: {row:?}");
            assert_eq!(row.iter().sum::<usize>(), 2);
        }
        assert_eq!(argmax(&[1.0, 1.0, 1.0]), 0);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let split = separable_split(32);
        let cfg = TrainConfig {
            epochs: 8,
            seed: 9,
            ..TrainConfig::default()
        };
        let (model, report) = train(init_model(4, 9).unwrap(), &split, &cfg).unwrap();
        // Row sums count true-class occurrences in the test set.
        let rows: Vec<usize> = report.confusion.iter().map(|r| r.iter().sum()).collect();
        let mut truth = vec![0usize; 4];
        for s in &split.test {
            truth[s.label_index()] += 1;
        }
        assert_eq!(rows, truth);
        let (acc, conf) = evaluate(&model, &split.test).unwrap();
        assert_eq!(conf, report.confusion);
        assert!((acc - report.test_accuracy).abs() < 1e-15);
    }

    #[test]
    fn checkpoints_round_trip_and_reject_bad_shapes() {
        let split = separable_split(16);
        let cfg = TrainConfig {
            epochs: 4,
            seed: 31,
            ..TrainConfig::default()
        };
        let (model, report) = train(init_model(4, 31).unwrap(), &split, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model, &cfg, &report).unwrap();
        let (back, cfg2, report2) = load_model(&path).unwrap();
        assert_eq!(back.weight_rows(), model.weight_rows());
        assert_eq!(back.bias_vectors(), model.bias_vectors());
        assert_eq!(cfg2.seed, cfg.seed);
        assert_eq!(report2, report);
        let x = [0.3, 0.4, 0.5];
        assert_eq!(back.forward(&x).unwrap(), model.forward(&x).unwrap());

        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        doc["biases"][0].as_array_mut().unwrap().pop();
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(matches!(
            load_model(&bad),
            Err(Error::ShapeMismatch(_))
        ));

        assert!(MlpModel::from_parts(
            vec![3, 2],
            vec![vec![vec![0.0; 3]; 2]],
            vec![vec![0.0; 3]],
            0.01
        )
        .is_err());
        assert!(MlpModel::from_parts(
            vec![2, 2],
            vec![vec![vec![0.0, f64::INFINITY], vec![0.0, 0.0]]],
            vec![vec![0.0; 2]],
            0.01
        )
        .is_err());
    }
}
