//! One-hidden-layer tanh network with a softmax output, trained by
//! mini-batch gradient descent on cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_HIDDEN: usize = 100;
pub const LEARNING_RATES: [f64; 3] = [0.1, 0.01, 0.001];
pub const EPOCHS: [usize; 2] = [50, 200];
const BATCH_SIZE: usize = 16;
const VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    /// hidden × inputs, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// outputs × hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
}

/// Grid point picked by [`train_mlp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingChoice {
    pub learning_rate: f64,
    pub epochs: usize,
    pub validation_accuracy: f64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, identity input scaling.
    pub fn new(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut uniform = |fan_in: usize, fan_out: usize, n: usize| -> Vec<f64> {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| r.gen_range(-limit..=limit)).collect()
        };
        let w1 = uniform(inputs, hidden, hidden * inputs);
        let w2 = uniform(hidden, outputs, outputs * hidden);
        Mlp {
            inputs,
            hidden,
            outputs,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; outputs],
            input_mean: vec![0.0; inputs],
            input_scale: vec![1.0; inputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Weights and biases flattened as w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let (w1, rest) = params.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.b1.len());
        let (w2, b2) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w2.copy_from_slice(w2);
        self.b2.copy_from_slice(b2);
    }

    fn fit_scaling(&mut self, xs: &[Vec<f64>]) {
        let n = xs.len() as f64;
        for j in 0..self.inputs {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / n;
            self.input_mean[j] = mean;
            self.input_scale[j] = if var > 1e-18 { 1.0 / var.sqrt() } else { 1.0 };
        }
    }

    fn scaled(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.input_mean.iter().zip(&self.input_scale)).map(|(v, (m, s))| (v - m) * s).collect()
    }

    /// Hidden activations and class probabilities for an already scaled input.
    fn forward_scaled(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h: Vec<f64> = (0..self.hidden)
            .map(|i| {
                let row = &self.w1[i * self.inputs..(i + 1) * self.inputs];
                (self.b1[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.outputs)
            .map(|k| {
                let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
                self.b2[k] + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        (h, exp.into_iter().map(|e| e / z).collect())
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        self.forward_scaled(&self.scaled(x)).1
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.probabilities(x))
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// [`Mlp::params`].
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], ys: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let loss = self.accumulate(xs, ys, &mut grad);
        let n = xs.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    /// Summed loss; adds summed gradients into `grad`.
    fn accumulate(&self, xs: &[Vec<f64>], ys: &[usize], grad: &mut [f64]) -> f64 {
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        let mut loss = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let x = self.scaled(x);
            let (h, p) = self.forward_scaled(&x);
            loss -= p[y].max(1e-300).ln();
            let mut dh = vec![0.0; self.hidden];
            for k in 0..self.outputs {
                let dz = p[k] - f64::from(u8::from(k == y));
                gb2[k] += dz;
                let row = k * self.hidden;
                for i in 0..self.hidden {
                    gw2[row + i] += dz * h[i];
                    dh[i] += dz * self.w2[row + i];
                }
            }
            for i in 0..self.hidden {
                let da = dh[i] * (1.0 - h[i] * h[i]);
                gb1[i] += da;
                let row = i * self.inputs;
                for j in 0..self.inputs {
                    gw1[row + j] += da * x[j];
                }
            }
        }
        loss
    }

    fn train_epochs(&mut self, xs: &[Vec<f64>], ys: &[usize], learning_rate: f64, epochs: usize, seed: u64) {
        let mut r = rng::seeded(seed);
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut grad = vec![0.0; self.param_count()];
        for _ in 0..epochs {
            order.shuffle(&mut r);
            for batch in order.chunks(BATCH_SIZE) {
                let bx: Vec<Vec<f64>> = batch.iter().map(|&i| xs[i].clone()).collect();
                let by: Vec<usize> = batch.iter().map(|&i| ys[i]).collect();
                grad.iter_mut().for_each(|g| *g = 0.0);
                self.accumulate(&bx, &by, &mut grad);
                let step = learning_rate / batch.len() as f64;
                let params = [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2];
                for (p, g) in params.into_iter().flat_map(|b| b.iter_mut()).zip(&grad) {
                    *p -= step * g;
                }
            }
        }
    }

    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let hits = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / xs.len() as f64
    }

    fn mean_loss(&self, xs: &[Vec<f64>], ys: &[usize]) -> f64 {
        let mut scratch = vec![0.0; self.param_count()];
        self.accumulate(xs, ys, &mut scratch) / xs.len().max(1) as f64
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn train_one(xs: &[Vec<f64>], ys: &[usize], classes: usize, hidden: usize, lr: f64, epochs: usize, seed: u64) -> Mlp {
    let mut net = Mlp::new(xs[0].len(), hidden, classes, rng::derive_seed(seed, &[1]));
    net.fit_scaling(xs);
    net.train_epochs(xs, ys, lr, epochs, rng::derive_seed(seed, &[2]));
    net
}

/// Trains with a grid search over learning rate and epoch count on a held
/// out 20% split, then retrains on everything with the best grid point.
pub fn train_mlp(
    xs: &[Vec<f64>],
    ys: &[usize],
    classes: usize,
    hidden: usize,
    seed: u64,
) -> Result<(Mlp, TrainingChoice)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::Argument("MLP training needs one label per feature vector".into()));
    }
    let inputs = xs[0].len();
    if xs.iter().any(|x| x.len() != inputs) {
        return Err(Error::Argument("feature vectors differ in length".into()));
    }
    if hidden < 1 {
        return Err(Error::Config("hidden layer needs at least one unit".into()));
    }
    let mut present: Vec<usize> = ys.to_vec();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::Config("MLP training needs at least two classes".into()));
    }
    if ys.iter().any(|&y| y >= classes) {
        return Err(Error::Argument("label outside the class range".into()));
    }

    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.shuffle(&mut rng::seeded(rng::derive_seed(seed, &[0])));
    let n_val = ((xs.len() as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, xs.len().saturating_sub(1).max(1));
    let (val_idx, train_idx) = order.split_at(n_val);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (idx.iter().map(|&i| xs[i].clone()).collect(), idx.iter().map(|&i| ys[i]).collect())
    };
    let (tx, ty) = if train_idx.is_empty() { pick(val_idx) } else { pick(train_idx) };
    let (vx, vy) = pick(val_idx);

    let mut best: Option<(TrainingChoice, f64)> = None;
    for &lr in &LEARNING_RATES {
        for &epochs in &EPOCHS {
            let net = train_one(&tx, &ty, classes, hidden, lr, epochs, seed);
            let acc = net.accuracy(&vx, &vy);
            let loss = net.mean_loss(&vx, &vy);
            let better = match best {
                None => true,
                Some((c, l)) => acc > c.validation_accuracy || (acc == c.validation_accuracy && loss < l),
            };
            if better {
                best = Some((TrainingChoice { learning_rate: lr, epochs, validation_accuracy: acc }, loss));
            }
        }
    }
    let (choice, _) = best.expect("non-empty grid");
    let net = train_one(xs, ys, classes, hidden, choice.learning_rate, choice.epochs, seed);
    Ok((net, choice))
}
