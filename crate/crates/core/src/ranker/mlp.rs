//! Fully connected network with ReLU hidden layers and a sigmoid output,
//! trained on mean squared error with Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RankerError;
use crate::features::ModelInput;

/// Hidden layer widths.
pub const HIDDEN: [usize; 3] = [128, 32, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows).map(|r| self.bias[r] + self.row(r).iter().zip(x).map(|(w, v)| w * v).sum::<f64>()));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Trace {
    /// Post-activation outputs per layer; the last entry holds the sigmoid.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-uniform initialisation; deterministic for a seed.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self, RankerError> {
        let mut m = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut m.layers {
            let bound = (6.0 / l.cols as f64).sqrt();
            l.weights.iter_mut().for_each(|w| *w = rng.random_range(-bound..bound));
        }
        Ok(m)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self, RankerError> {
        if sizes.len() < 2 || sizes.contains(&0) || sizes[sizes.len() - 1] != 1 {
            return Err(RankerError::InvalidModel(format!("layer sizes {sizes:?} must be positive and end in 1")));
        }
        Ok(Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect() })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, RankerError> {
        if layers.is_empty() {
            return Err(RankerError::InvalidModel("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(RankerError::InvalidModel(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].rows != l.cols {
                return Err(RankerError::InvalidModel(format!("layer {i} does not chain onto layer {}", i - 1)));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(RankerError::InvalidModel(format!("layer {i} has non-finite parameters")));
            }
        }
        if layers[layers.len() - 1].rows != 1 {
            return Err(RankerError::InvalidModel("output layer must have one unit".into()));
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].cols).chain(self.layers.iter().map(|l| l.rows)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    fn check(&self, x: &ModelInput) -> Result<(), RankerError> {
        let dim = self.input_dim();
        let offset = x.dense.len();
        if offset > dim || x.sparse.iter().any(|&(i, _)| offset + i >= dim) {
            let needed = x.sparse.iter().map(|&(i, _)| offset + i + 1).max().unwrap_or(0).max(offset);
            return Err(RankerError::DimensionMismatch { expected: dim, got: needed });
        }
        Ok(())
    }

    fn first_layer(&self, x: &ModelInput) -> Vec<f64> {
        let l = &self.layers[0];
        let offset = x.dense.len();
        (0..l.rows)
            .map(|r| {
                let row = l.row(r);
                let dense: f64 = row[..offset].iter().zip(&x.dense).map(|(w, v)| w * v).sum();
                let sparse: f64 = x.sparse.iter().map(|&(i, v)| row[offset + i] * v).sum();
                l.bias[r] + dense + sparse
            })
            .collect()
    }

    fn trace(&self, x: &ModelInput) -> Trace {
        let last = self.layers.len() - 1;
        let mut z = self.first_layer(x);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                let mut next = Vec::new();
                layer.apply(&acts[i - 1], &mut next);
                z = next;
            }
            if i == last {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(std::mem::take(&mut z));
        }
        Trace { acts }
    }

    /// Output in (0, 1).
    pub fn forward(&self, x: &ModelInput) -> Result<f64, RankerError> {
        self.check(x)?;
        Ok(self.trace(x).acts.last().expect("at least one layer")[0])
    }

    /// Adds the gradient of `(y - target)^2` to `grads`; returns the loss.
    fn backward(&self, x: &ModelInput, target: f64, grads: &mut [Layer]) -> f64 {
        let t = self.trace(x);
        let y = t.acts.last().unwrap()[0];
        let mut delta = vec![2.0 * (y - target) * y * (1.0 - y)];
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let g = &mut grads[i];
            for (r, d) in delta.iter().enumerate() {
                g.bias[r] += d;
            }
            if i == 0 {
                let offset = x.dense.len();
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut g.weights[r * g.cols..(r + 1) * g.cols];
                    for (w, v) in row[..offset].iter_mut().zip(&x.dense) {
                        *w += d * v;
                    }
                    for &(j, v) in &x.sparse {
                        row[offset + j] += d * v;
                    }
                }
                break;
            }
            let input = &t.acts[i - 1];
            for (r, &d) in delta.iter().enumerate() {
                let row = &mut g.weights[r * g.cols..(r + 1) * g.cols];
                for (w, v) in row.iter_mut().zip(input) {
                    *w += d * v;
                }
            }
            let mut prev = vec![0.0; layer.cols];
            for (r, &d) in delta.iter().enumerate() {
                for (p, w) in prev.iter_mut().zip(layer.row(r)) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        (y - target).powi(2)
    }

    /// Mean squared error over `(input, target)` pairs.
    pub fn mse<'a>(&self, data: impl IntoIterator<Item = (&'a ModelInput, f64)>) -> Result<f64, RankerError> {
        let (mut sum, mut n) = (0.0, 0usize);
        for (x, t) in data {
            sum += (self.forward(x)? - t).powi(2);
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { sum / n as f64 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of samples held out to report generalisation loss.
    pub holdout: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-5, epochs: 10, batch_size: 32, holdout: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub initial_holdout_mse: f64,
    pub final_holdout_mse: f64,
    pub final_train_mse: f64,
    pub steps: usize,
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: i32,
}

impl Adam {
    fn step(&mut self, model: &mut Mlp, grads: &[Layer], scale: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let params = p.weights.iter_mut().chain(p.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((w, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                let g = g * scale;
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.lr * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            }
        }
    }
}

fn zero_like(model: &Mlp) -> Vec<Layer> {
    model.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect()
}

/// Trains `model` in place on `(input, label)` pairs. Samples are split
/// into a training part and a held-out part after a seeded shuffle, and
/// minibatches are visited in a seeded order, so results are reproducible.
pub fn train(model: &mut Mlp, data: &[(&ModelInput, f64)], cfg: &TrainConfig) -> Result<TrainReport, RankerError> {
    if data.is_empty() {
        return Err(RankerError::NoSamples);
    }
    if cfg.batch_size == 0 || !(0.0..1.0).contains(&cfg.holdout) || cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(RankerError::InvalidConfig(format!("{cfg:?}")));
    }
    for (x, _) in data {
        model.check(x)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((data.len() as f64) * cfg.holdout).floor() as usize;
    let n_hold = if n_hold >= data.len() { 0 } else { n_hold };
    let (hold, mut fit) = (order[..n_hold].to_vec(), order[n_hold..].to_vec());
    let eval_set = if hold.is_empty() { fit.clone() } else { hold.clone() };
    let loss_on = |m: &Mlp, idx: &[usize]| m.mse(idx.iter().map(|&i| (data[i].0, data[i].1)));
    let initial = loss_on(model, &eval_set)?;

    let mut adam = Adam { m: zero_like(model), v: zero_like(model), t: 0 };
    let mut grads = zero_like(model);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        fit.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in fit.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.weights.iter_mut().for_each(|v| *v = 0.0);
                g.bias.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in batch {
                epoch_loss += model.backward(data[i].0, data[i].1, &mut grads);
            }
            adam.step(model, &grads, 1.0 / batch.len() as f64, cfg);
            steps += 1;
        }
        let epoch_loss = epoch_loss / fit.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(RankerError::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: train mse {epoch_loss:.6}");
    }
    Ok(TrainReport {
        train_samples: fit.len(),
        holdout_samples: hold.len(),
        initial_holdout_mse: initial,
        final_holdout_mse: loss_on(model, &eval_set)?,
        final_train_mse: loss_on(model, &fit)?,
        steps,
    })
}
