//! Small dense ReLU networks trained with mini-batch SGD + momentum on MSE.
//!
//! Both the pixel gradient regressor and the contact models are built from
//! [`Regressor`]: a [`Mlp`] wrapped in input/output standardisation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 32, 32],
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 256,
            epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layers must be non-empty"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("learning rate must be positive and momentum in [0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        Ok(())
    }
}

/// Fully connected network: ReLU hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    // weights[l] has shape (in, out)
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-normal initialisation, zero biases.
    pub fn new(sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("network needs at least an input and an output layer"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in sizes.windows(2) {
            let dist = Normal::new(0.0, (2.0 / pair[0] as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_fn((pair[0], pair[1]), |_| dist.sample(rng)));
            biases.push(Array1::zeros(pair[1]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// Zeroes the output layer and sets its bias, so the untrained net predicts `bias`.
    fn reset_output(&mut self, bias: Array1<f64>) {
        let last = self.weights.len() - 1;
        self.weights[last].fill(0.0);
        self.biases[last] = bias;
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = a.dot(w) + b;
            if l != last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    /// Activations of every layer, input included.
    fn forward_all(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = vec![x.to_owned()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w) + b;
            if l != last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn to_params(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            self.biases.iter().map(|b| b.to_vec()).collect(),
        )
    }

    fn from_params(sizes: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        if sizes.len() < 2 || weights.len() != sizes.len() - 1 || biases.len() != sizes.len() - 1 {
            return Err(Error::Format("layer count does not match weight arrays".into()));
        }
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for (l, pair) in sizes.windows(2).enumerate() {
            let w = Array2::from_shape_vec((pair[0], pair[1]), weights[l].clone())
                .map_err(|e| Error::Format(format!("layer {l} weights: {e}")))?;
            if biases[l].len() != pair[1] {
                return Err(Error::Format(format!("layer {l} bias has wrong length")));
            }
            ws.push(w);
            bs.push(Array1::from(biases[l].clone()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights: ws,
            biases: bs,
        })
    }
}

/// Per-feature affine normalisation `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }

    pub fn invert(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let mut out = y.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * self.scale[j] + self.mean[j];
            }
        }
        out
    }
}

/// Training bookkeeping stored with a model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub train_samples: usize,
    /// Mean training loss of the last epoch (normalised target units).
    pub final_loss: f64,
    /// Validation and test MSE in target units.
    pub val_mse: f64,
    pub test_mse: f64,
    pub epoch_losses: Vec<f64>,
}

/// MLP with input/output standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub metadata: TrainingMetadata,
}

/// On-disk form of one network head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub name: String,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
    pub training: TrainingMetadata,
}

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Model file: one or more named heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: String,
    pub heads: Vec<NetworkRecord>,
}

impl ModelFile {
    pub fn head(&self, name: &str) -> Result<Regressor> {
        let rec = self
            .heads
            .iter()
            .find(|h| h.name == name)
            .ok_or_else(|| Error::Format(format!("model has no head named {name:?}")))?;
        Regressor::from_record(rec)
    }

    pub fn check(&self, kind: &str) -> Result<()> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported model schema version {}",
                self.schema_version
            )));
        }
        if self.kind != kind {
            return Err(Error::Format(format!("expected a {kind} model, found {}", self.kind)));
        }
        Ok(())
    }
}

impl Regressor {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let z = self.input_norm.apply(x);
        self.output_norm.invert(self.net.forward(z.view()).view())
    }

    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        self.predict(row).row(0).to_vec()
    }

    pub fn to_record(&self, name: &str) -> NetworkRecord {
        let (weights, biases) = self.net.to_params();
        NetworkRecord {
            name: name.to_string(),
            layer_sizes: self.net.sizes.clone(),
            weights,
            biases,
            input_mean: self.input_norm.mean.clone(),
            input_scale: self.input_norm.scale.clone(),
            output_mean: self.output_norm.mean.clone(),
            output_scale: self.output_norm.scale.clone(),
            training: self.metadata.clone(),
        }
    }

    pub fn from_record(rec: &NetworkRecord) -> Result<Self> {
        let net = Mlp::from_params(&rec.layer_sizes, &rec.weights, &rec.biases)?;
        if rec.input_mean.len() != net.input_dim()
            || rec.input_scale.len() != net.input_dim()
            || rec.output_mean.len() != net.output_dim()
            || rec.output_scale.len() != net.output_dim()
        {
            return Err(Error::Format("normalisation constants do not match layer sizes".into()));
        }
        Ok(Self {
            net,
            input_norm: Standardizer {
                mean: rec.input_mean.clone(),
                scale: rec.input_scale.clone(),
            },
            output_norm: Standardizer {
                mean: rec.output_mean.clone(),
                scale: rec.output_scale.clone(),
            },
            metadata: rec.training.clone(),
        })
    }
}

/// Deterministic 60:20:20 split of `n` sample indices.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_SALT);
    idx.shuffle(&mut rng);
    let n_train = n * 6 / 10;
    let n_val = n * 2 / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    (idx, val, test)
}

const SPLIT_SALT: u64 = 0x5eed_5a17;

fn select_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Mean squared error over all entries.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n
}

/// Which target normalisation to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetScaling {
    /// Targets are used as-is.
    Raw,
    /// Targets are standardised per output.
    Standardize,
}

/// Trains a regressor on `(x, y)` using a seeded 60:20:20 split.
pub fn train_regressor(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
    scaling: TargetScaling,
    seed: u64,
) -> Result<Regressor> {
    cfg.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::invalid("inputs and targets have different sample counts"));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    let (train_idx, val_idx, test_idx) = split_indices(x.nrows(), seed);
    if train_idx.is_empty() || val_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::InsufficientData("too few samples for a 60:20:20 split".into()));
    }
    let x_train = select_rows(x, &train_idx);
    let y_train = select_rows(y, &train_idx);
    let input_norm = Standardizer::fit(x_train.view());
    let output_norm = match scaling {
        TargetScaling::Raw => Standardizer::identity(y.ncols()),
        TargetScaling::Standardize => Standardizer::fit(y_train.view()),
    };
    let xs = input_norm.apply(x_train.view());
    let ys = output_norm.apply(y_train.view());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![x.ncols()];
    sizes.extend(&cfg.hidden);
    sizes.push(y.ncols());
    let mut net = Mlp::new(&sizes, &mut rng)?;
    net.reset_output(ys.mean_axis(Axis(0)).expect("non-empty training split"));
    let epoch_losses = sgd_momentum(&mut net, xs.view(), ys.view(), cfg, &mut rng)?;

    let mut model = Regressor {
        net,
        input_norm,
        output_norm,
        metadata: TrainingMetadata {
            seed,
            epochs: cfg.epochs,
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            batch_size: cfg.batch_size,
            train_samples: train_idx.len(),
            final_loss: *epoch_losses.last().unwrap_or(&f64::NAN),
            val_mse: 0.0,
            test_mse: 0.0,
            epoch_losses,
        },
    };
    let x_val = select_rows(x, &val_idx);
    let x_test = select_rows(x, &test_idx);
    model.metadata.val_mse = mse(model.predict(x_val.view()).view(), select_rows(y, &val_idx).view());
    model.metadata.test_mse = mse(model.predict(x_test.view()).view(), select_rows(y, &test_idx).view());
    Ok(model)
}

/// Runs the optimiser and returns the mean training loss of each epoch.
fn sgd_momentum(
    net: &mut Mlp,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    let layers = net.weights.len();
    let mut vel_w: Vec<Array2<f64>> = net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut vel_b: Vec<Array1<f64>> = net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let acts = net.forward_all(xb.view());
            let out = &acts[layers];
            let diff = out - &yb;
            let loss = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;

            let mut delta = diff * (2.0 / (batch.len() * out.ncols()) as f64);
            for l in (0..layers).rev() {
                let grad_w = acts[l].t().dot(&delta);
                let grad_b = delta.sum_axis(Axis(0));
                if l > 0 {
                    let mut next = delta.dot(&net.weights[l].t());
                    next.zip_mut_with(&acts[l], |d, &a| {
                        if a <= 0.0 {
                            *d = 0.0
                        }
                    });
                    delta = next;
                }
                vel_w[l].zip_mut_with(&grad_w, |v, &g| *v = cfg.momentum * *v + g);
                vel_b[l].zip_mut_with(&grad_b, |v, &g| *v = cfg.momentum * *v + g);
                net.weights[l].scaled_add(-cfg.learning_rate, &vel_w[l]);
                net.biases[l].scaled_add(-cfg.learning_rate, &vel_b[l]);
            }
        }
        let mean = epoch_loss / n as f64;
        if let Some(&prev) = losses.last() {
            if mean > prev * 1.05 + 1e-12 {
                log::debug!("epoch {epoch}: training loss rose from {prev:.3e} to {mean:.3e}");
            }
        }
        losses.push(mean);
    }
    Ok(losses)
}
