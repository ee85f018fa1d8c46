//! The dense classifier: He initialization, forward pass, analytic
//! backprop, and Adam minibatch training. All math in f64; weights stored
//! row-major per layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clamp inside the cross-entropy log to keep the loss finite.
pub const LOSS_PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    /// Layer sizes `[input, hidden1, hidden2, output]`.
    pub dims: Vec<usize>,
    /// Per layer, `dims[l+1] × dims[l]` row-major: `weights[l][o * in + i]`.
    pub weights: Vec<Vec<f64>>,
    /// Per layer, length `dims[l+1]`.
    pub biases: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Zero learning rate is allowed (training becomes a deterministic
    /// no-op on the parameters), negative or non-finite values are not.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0
            || self.batch_size == 0
            || !self.learning_rate.is_finite()
            || self.learning_rate < 0.0
        {
            return Err(ModelError::InvalidTrainConfig);
        }
        Ok(())
    }
}

/// Per-epoch loss/accuracy measured after that epoch's updates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    /// CSV dump, shortest-round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dims must be four positive layer sizes")]
    InvalidDims,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid train config")]
    InvalidTrainConfig,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// He-initialized network: weights ~ N(0, 2/fan_in), biases zero.
pub fn init_mlp(dims: &[usize], seed: u64) -> Result<MlpModel, ModelError> {
    if dims.len() != 4 || dims.iter().any(|&d| d == 0) {
        return Err(ModelError::InvalidDims);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        weights.push((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect());
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpModel {
        dims: dims.to_vec(),
        weights,
        biases,
    })
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
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

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Activations for every layer: `[input, h1, h2, softmax output]`.
    fn forward_full(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let layers = self.weights.len();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let prev = &acts[l];
            let mut z = self.biases[l].clone();
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                let mut acc = z[o];
                for i in 0..n_in {
                    acc += row[i] * prev[i];
                }
                z[o] = acc;
            }
            if l + 1 < layers {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut z);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Softmax class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_full(x)?.pop().unwrap())
    }

    /// Argmax class and the probability vector; ties break toward the
    /// lowest class index.
    pub fn predict_label(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ModelError> {
        let probs = self.forward(x)?;
        Ok((argmax(&probs), probs))
    }
}

/// First index of the maximum value (ties toward the lowest index).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Cross-entropy of one prediction: −log(max(p_label, floor)).
pub fn loss_ce(probs: &[f64], label: usize) -> f64 {
    -probs[label].max(LOSS_PROB_FLOOR).ln()
}

/// Mean analytic gradients of the cross-entropy over a batch.
pub fn gradients(
    model: &MlpModel,
    inputs: &[Vec<f64>],
    labels: &[usize],
) -> Result<Gradients, ModelError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(ModelError::EmptyDataset);
    }
    let classes = model.output_dim();
    let layers = model.weights.len();
    let mut gw: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut gb: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let scale = 1.0 / inputs.len() as f64;

    for (x, &y) in inputs.iter().zip(labels) {
        if y >= classes {
            return Err(ModelError::LabelOutOfRange { label: y, classes });
        }
        let acts = model.forward_full(x)?;
        // Softmax + cross-entropy collapses to probs − onehot at the output.
        let mut delta: Vec<f64> = acts[layers].clone();
        delta[y] -= 1.0;
        for v in delta.iter_mut() {
            *v *= scale;
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (model.dims[l], model.dims[l + 1]);
            let prev = &acts[l];
            for o in 0..n_out {
                let d = delta[o];
                gb[l][o] += d;
                let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * prev[i];
                }
            }
            if l > 0 {
                // ReLU passes gradient only where the activation fired.
                let mut next = vec![0.0; n_in];
                for i in 0..n_in {
                    if prev[i] > 0.0 {
                        let mut acc = 0.0;
                        for o in 0..n_out {
                            acc += model.weights[l][o * n_in + i] * delta[o];
                        }
                        next[i] = acc;
                    }
                }
                delta = next;
            }
        }
    }
    Ok(Gradients {
        weights: gw,
        biases: gb,
    })
}

/// Mean loss and accuracy of `model` over a labelled set.
pub fn evaluate_set(
    model: &MlpModel,
    xs: &[Vec<f64>],
    ys: &[usize],
) -> Result<(f64, f64), ModelError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(ModelError::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        let probs = model.forward(x)?;
        loss += loss_ce(&probs, y);
        if argmax(&probs) == y {
            correct += 1;
        }
    }
    let n = xs.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct AdamState {
    mw: Vec<Vec<f64>>,
    vw: Vec<Vec<f64>>,
    mb: Vec<Vec<f64>>,
    vb: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    fn new(model: &MlpModel) -> AdamState {
        AdamState {
            mw: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            vw: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            mb: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            vb: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        };
        for l in 0..model.weights.len() {
            for (i, g) in grads.weights[l].iter().enumerate() {
                update(&mut model.weights[l][i], *g, &mut self.mw[l][i], &mut self.vw[l][i]);
            }
            for (i, g) in grads.biases[l].iter().enumerate() {
                update(&mut model.biases[l][i], *g, &mut self.mb[l][i], &mut self.vb[l][i]);
            }
        }
    }
}

/// Adam minibatch training. Deterministic for a fixed `cfg.seed`: one
/// shuffle stream drives every epoch, batches are taken in order, and the
/// epoch stats are measured after the epoch's last update.
pub fn train(
    mut model: MlpModel,
    train_x: &[Vec<f64>],
    train_y: &[usize],
    val_x: &[Vec<f64>],
    val_y: &[usize],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory), ModelError> {
    cfg.validate()?;
    if train_x.is_empty() || train_x.len() != train_y.len() || val_x.is_empty() || val_x.len() != val_y.len()
    {
        return Err(ModelError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut history = TrainHistory::default();
    let mut adam = AdamState::new(&model);
    let mut batch_x: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
    let mut batch_y: Vec<usize> = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        }
        for chunk in order.chunks(cfg.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.push(train_x[i].clone());
                batch_y.push(train_y[i]);
            }
            let grads = gradients(&model, &batch_x, &batch_y)?;
            adam.step(&mut model, &grads, cfg);
        }
        let (train_loss, train_acc) = evaluate_set(&model, train_x, train_y)?;
        let (val_loss, val_acc) = evaluate_set(&model, val_x, val_y)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
    }
    Ok((model, history))
}
