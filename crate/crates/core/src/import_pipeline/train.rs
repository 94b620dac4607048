//! Software reference model and minibatch backpropagation.
//!
//! The reference model is the function the simulated circuit computes under
//! ideal import:
//!
//! ```text
//! z = W1^T [x; 1]            hidden pre-activation
//! h = max(0, tanh z)         rectified tanh
//! a = exp(kappa * (h - 1))   gate-coupled transfer of the second array
//! y = W2^T [a; 1]            logits
//! ```
//!
//! `kappa = beta * (v_out_max - v_out_min)` is the log-slope of the second
//! array's cells times the activation swing. With
//! [`HiddenTransfer::Rectified`] the exponential stage is dropped.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flatbin;
use crate::network::{argmax_with_margin, NetworkTopology};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HiddenTransfer {
    Rectified,
    GateCoupled { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedWeights<T> {
    pub topology: NetworkTopology,
    pub transfer: HiddenTransfer,
    /// `layer1_width x n_hidden`, row-major by input line.
    pub w1: Vec<T>,
    /// `layer2_width x n_outputs`, row-major by input line.
    pub w2: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct WeightsHeader {
    kind: String,
    topology: NetworkTopology,
    transfer: HiddenTransfer,
    w1_shape: [usize; 2],
    w2_shape: [usize; 2],
    w1_max_abs: f64,
    w2_max_abs: f64,
}

fn max_abs<T: Scalar>(w: &[T]) -> T {
    w.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

impl<T: Scalar> TrainedWeights<T> {
    pub fn zeros(topology: NetworkTopology, transfer: HiddenTransfer) -> Self {
        TrainedWeights {
            topology,
            transfer,
            w1: vec![T::zero(); topology.layer1_width() * topology.n_hidden],
            w2: vec![T::zero(); topology.layer2_width() * topology.n_outputs],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        if self.w1.len() != t.layer1_width() * t.n_hidden || self.w2.len() != t.layer2_width() * t.n_outputs {
            return Err(Error::Shape("weight matrices do not match topology".into()));
        }
        if self.w1.iter().chain(&self.w2).any(|w| !w.is_finite()) {
            return Err(Error::Data("non-finite weight".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn w1_at(&self, input: usize, hidden: usize) -> T {
        self.w1[input * self.topology.n_hidden + hidden]
    }

    #[inline]
    pub fn w2_at(&self, input: usize, output: usize) -> T {
        self.w2[input * self.topology.n_outputs + output]
    }

    pub fn w1_max_abs(&self) -> T {
        max_abs(&self.w1)
    }

    pub fn w2_max_abs(&self) -> T {
        max_abs(&self.w2)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let t = &self.topology;
        let header = WeightsHeader {
            kind: "weights".into(),
            topology: *t,
            transfer: self.transfer,
            w1_shape: [t.layer1_width(), t.n_hidden],
            w2_shape: [t.layer2_width(), t.n_outputs],
            w1_max_abs: self.w1_max_abs().f64(),
            w2_max_abs: self.w2_max_abs().f64(),
        };
        let data: Vec<f64> = self.w1.iter().chain(&self.w2).map(|w| w.f64()).collect();
        flatbin::write(path, &header, &data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, data): (WeightsHeader, Vec<f64>) = flatbin::read(path)?;
        let n1 = h.w1_shape[0] * h.w1_shape[1];
        if h.kind != "weights" || data.len() != n1 + h.w2_shape[0] * h.w2_shape[1] {
            return Err(Error::Format { offset: 16, msg: "header does not describe a weight file".into() });
        }
        let w = TrainedWeights {
            topology: h.topology,
            transfer: h.transfer,
            w1: data[..n1].iter().map(|&v| T::lit(v)).collect(),
            w2: data[n1..].iter().map(|&v| T::lit(v)).collect(),
        };
        w.validate()?;
        Ok(w)
    }

    fn active_inputs(&self, pattern: &[bool]) -> Vec<usize> {
        let mut idx: Vec<usize> = pattern.iter().enumerate().filter(|(_, &b)| b).map(|(j, _)| j).collect();
        if self.topology.bias_nodes {
            idx.push(self.topology.n_inputs);
        }
        idx
    }

    /// Hidden pre-activations `z`.
    pub fn hidden_pre(&self, pattern: &[bool]) -> Vec<T> {
        let nh = self.topology.n_hidden;
        let mut z = vec![T::zero(); nh];
        for j in self.active_inputs(pattern) {
            for (zh, &w) in z.iter_mut().zip(&self.w1[j * nh..(j + 1) * nh]) {
                *zh += w;
            }
        }
        z
    }

    /// Rectified-tanh outputs `h` in `[0, 1)`.
    pub fn hidden_activations(&self, pattern: &[bool]) -> Vec<T> {
        self.hidden_pre(pattern).into_iter().map(rtanh).collect()
    }

    pub fn logits(&self, pattern: &[bool]) -> Vec<T> {
        let z = self.hidden_pre(pattern);
        let a: Vec<T> = z.iter().map(|&z| transfer(self.transfer, rtanh(z))).collect();
        self.output_from(&a)
    }

    fn output_from(&self, a: &[T]) -> Vec<T> {
        let no = self.topology.n_outputs;
        let mut y = vec![T::zero(); no];
        for (h, &ah) in a.iter().enumerate() {
            for (yo, &w) in y.iter_mut().zip(&self.w2[h * no..(h + 1) * no]) {
                *yo += ah * w;
            }
        }
        if self.topology.bias_nodes {
            let b = self.topology.n_hidden;
            for (yo, &w) in y.iter_mut().zip(&self.w2[b * no..(b + 1) * no]) {
                *yo += w;
            }
        }
        y
    }

    pub fn predict(&self, pattern: &[bool]) -> usize {
        argmax_with_margin(&self.logits(pattern)).0
    }
}

#[inline]
fn rtanh<T: Scalar>(z: T) -> T {
    z.tanh().max(T::zero())
}

#[inline]
fn transfer<T: Scalar>(t: HiddenTransfer, h: T) -> T {
    match t {
        HiddenTransfer::Rectified => h,
        HiddenTransfer::GateCoupled { kappa } => (T::lit(kappa) * (h - T::one())).exp(),
    }
}

/// Fraction of patterns the software model classifies correctly.
pub fn software_accuracy<T: Scalar>(w: &TrainedWeights<T>, patterns: &[Vec<bool>], labels: &[u8]) -> f64 {
    let correct: usize = patterns
        .par_iter()
        .zip(labels)
        .filter(|(p, &l)| w.predict(p) == l as usize)
        .count();
    correct as f64 / patterns.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    /// Standard deviation of the initial first-layer weights.
    pub init_w1: f64,
    pub init_w2: f64,
    /// Initial hidden bias. A positive value starts the hidden units inside
    /// the steep part of the gate-coupled transfer.
    pub hidden_bias_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            batch_size: 32,
            learning_rate: 0.02,
            momentum: 0.9,
            lr_decay: 1.0,
            init_w1: 0.05,
            init_w2: 0.1,
            hidden_bias_init: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<T> {
    pub weights: TrainedWeights<T>,
    pub epochs: Vec<EpochStats>,
}

/// Gradients of the mean cross-entropy over a batch.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub loss: T,
    pub correct: usize,
    pub w1: Vec<T>,
    pub w2: Vec<T>,
}

/// Mean softmax cross-entropy over the batch and its exact gradient.
pub fn loss_and_gradient<T: Scalar>(w: &TrainedWeights<T>, patterns: &[&[bool]], labels: &[u8]) -> Gradients<T> {
    let (nh, no) = (w.topology.n_hidden, w.topology.n_outputs);
    let mut g = Gradients {
        loss: T::zero(),
        correct: 0,
        w1: vec![T::zero(); w.w1.len()],
        w2: vec![T::zero(); w.w2.len()],
    };
    let inv_n = T::one() / T::lit(patterns.len() as f64);
    for (pattern, &label) in patterns.iter().zip(labels) {
        let active = w.active_inputs(pattern);
        let z = w.hidden_pre(pattern);
        let t: Vec<T> = z.iter().map(|z| z.tanh()).collect();
        let a: Vec<T> = t.iter().map(|&t| transfer(w.transfer, t.max(T::zero()))).collect();
        let y = w.output_from(&a);

        let y_max = y.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let exps: Vec<T> = y.iter().map(|&v| (v - y_max).exp()).collect();
        let sum: T = exps.iter().copied().sum();
        g.loss += (sum.ln() + y_max - y[label as usize]) * inv_n;
        if argmax_with_margin(&y).0 == label as usize {
            g.correct += 1;
        }
        let dy: Vec<T> = exps
            .iter()
            .enumerate()
            .map(|(o, &e)| (e / sum - if o == label as usize { T::one() } else { T::zero() }) * inv_n)
            .collect();

        let mut dz = vec![T::zero(); nh];
        for h in 0..nh {
            let row = &w.w2[h * no..(h + 1) * no];
            let mut da = T::zero();
            for o in 0..no {
                g.w2[h * no + o] += a[h] * dy[o];
                da += row[o] * dy[o];
            }
            if z[h] > T::zero() {
                let dh = match w.transfer {
                    HiddenTransfer::Rectified => da,
                    HiddenTransfer::GateCoupled { kappa } => da * T::lit(kappa) * a[h],
                };
                dz[h] = dh * (T::one() - t[h] * t[h]);
            }
        }
        if w.topology.bias_nodes {
            for (gw, &d) in g.w2[nh * no..(nh + 1) * no].iter_mut().zip(&dy) {
                *gw += d;
            }
        }
        for &j in &active {
            for (gw, &d) in g.w1[j * nh..(j + 1) * nh].iter_mut().zip(&dz) {
                *gw += d;
            }
        }
    }
    g
}

/// Minibatch SGD with momentum on the software reference model.
pub fn train_reference<T: Scalar>(
    patterns: &[Vec<bool>],
    labels: &[u8],
    topology: NetworkTopology,
    transfer_fn: HiddenTransfer,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingOutcome<T>> {
    if patterns.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if patterns.len() != labels.len() {
        return Err(Error::Data(format!("{} patterns but {} labels", patterns.len(), labels.len())));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Param("batch_size must be >= 1".into()));
    }
    topology.validate()?;
    if let Some(p) = patterns.iter().find(|p| p.len() != topology.n_inputs) {
        return Err(Error::Shape(format!("pattern of length {} for {} inputs", p.len(), topology.n_inputs)));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= topology.n_outputs) {
        return Err(Error::Data(format!("label {l} out of range")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = TrainedWeights::<T>::zeros(topology, transfer_fn);
    let n1 = Normal::new(0.0, cfg.init_w1).map_err(|e| Error::Param(e.to_string()))?;
    let n2 = Normal::new(0.0, cfg.init_w2).map_err(|e| Error::Param(e.to_string()))?;
    for v in w.w1.iter_mut() {
        *v = T::lit(n1.sample(&mut rng));
    }
    if topology.bias_nodes {
        let b = topology.n_inputs * topology.n_hidden;
        for v in &mut w.w1[b..] {
            *v = T::lit(cfg.hidden_bias_init);
        }
    }
    for v in w.w2.iter_mut() {
        *v = T::lit(n2.sample(&mut rng));
    }

    let mut v1 = vec![T::zero(); w.w1.len()];
    let mut v2 = vec![T::zero(); w.w2.len()];
    let mut order: Vec<usize> = (0..patterns.len()).collect();
    let mut lr = cfg.learning_rate;
    let mu = T::lit(cfg.momentum);
    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let ps: Vec<&[bool]> = batch.iter().map(|&i| patterns[i].as_slice()).collect();
            let ls: Vec<u8> = batch.iter().map(|&i| labels[i]).collect();
            let g = loss_and_gradient(&w, &ps, &ls);
            if !g.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += g.loss.f64() * batch.len() as f64;
            correct += g.correct;
            let step = T::lit(lr);
            for ((wv, vv), gv) in w.w1.iter_mut().zip(v1.iter_mut()).zip(&g.w1) {
                *vv = mu * *vv - step * *gv;
                *wv += *vv;
            }
            for ((wv, vv), gv) in w.w2.iter_mut().zip(v2.iter_mut()).zip(&g.w2) {
                *vv = mu * *vv - step * *gv;
                *wv += *vv;
            }
        }
        let mean_loss = loss_sum / patterns.len() as f64;
        if !mean_loss.is_finite() || w.w1.iter().chain(&w.w2).any(|x| !x.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        stats.push(EpochStats { epoch, mean_loss, train_accuracy: correct as f64 / patterns.len() as f64 });
        lr *= cfg.lr_decay;
    }
    Ok(TrainingOutcome { weights: w, epochs: stats })
}
