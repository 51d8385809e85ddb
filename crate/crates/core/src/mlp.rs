//! Small fully connected regression network trained with plain SGD.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::SimError;
use crate::params::{bounds, RoomSpec};

/// Model file format version.
pub const MODEL_VERSION: u32 = 1;
pub const INPUT_DIM: usize = 6;
pub const DEFAULT_HIDDEN: usize = 400;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Sigmoid,
    Tanh,
    Relu,
    /// No squashing; mostly for tests and linear baselines.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Which room output the network predicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Tt,
    AvgExitTime,
}

impl Target {
    pub fn of(self, r: &DatasetRecord) -> f64 {
        match self {
            Target::Tt => r.metrics.tt,
            Target::AvgExitTime => r.metrics.avg_exit_time,
        }
    }
}

/// Dense layer, weights row-major `[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<f64>,
    /// Empty when the model has no bias.
    #[serde(default)]
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub version: u32,
    /// Layer sizes from input to output, e.g. `[6, 400, 1]`.
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub use_bias: bool,
    /// Per-input `[min, max]`; inputs are mapped to `[0, 1]` when present.
    pub norm: Option<Vec<[f64; 2]>>,
    /// The raw network output is multiplied by this to give seconds.
    #[serde(default = "one")]
    pub output_scale: f64,
    #[serde(default)]
    pub target: Target,
    /// Per-input `[min, max]` seen in training; the estimator keeps inputs inside it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    pub layers: Vec<Layer>,
}

fn one() -> f64 {
    1.0
}

/// Gradient with the same layout as the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

/// Per-input ranges used for min-max normalization.
pub fn table_norm() -> Vec<[f64; 2]> {
    bounds::ALL.iter().map(|b| [b.min, b.max]).collect()
}

impl MlpModel {
    /// Randomly initialized model (uniform Glorot range) with the given
    /// hidden layer sizes, one output.
    pub fn new(hidden: &[usize], activation: Activation, use_bias: bool, seed: u64) -> Self {
        let mut dims = vec![INPUT_DIM];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: (0..w[0] * w[1]).map(|_| rng.gen_range(-limit..limit)).collect(),
                    bias: if use_bias { vec![0.0; w[1]] } else { Vec::new() },
                }
            })
            .collect();
        MlpModel {
            version: MODEL_VERSION,
            dims,
            activation,
            use_bias,
            norm: None,
            output_scale: 1.0,
            target: Target::Tt,
            domain: None,
            layers,
        }
    }

    /// Model with every weight zero.
    pub fn zeros(hidden: &[usize], activation: Activation, use_bias: bool) -> Self {
        let mut m = MlpModel::new(hidden, activation, use_bias, 0);
        for l in &mut m.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        m
    }

    pub fn with_norm(mut self, norm: Vec<[f64; 2]>) -> Self {
        self.norm = Some(norm);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Structural consistency of dims, layer shapes and normalization.
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Format(m));
        if self.version != MODEL_VERSION {
            return bad(format!("model version {} is not supported (expected {MODEL_VERSION})", self.version));
        }
        if self.dims.len() < 2 || self.dims.contains(&0) || *self.dims.last().unwrap() != 1 {
            return bad(format!("bad layer sizes {:?}", self.dims));
        }
        if self.layers.len() != self.dims.len() - 1 {
            return bad(format!("{} layers for sizes {:?}", self.layers.len(), self.dims));
        }
        for (k, (l, w)) in self.layers.iter().zip(self.dims.windows(2)).enumerate() {
            if l.weights.len() != w[0] * w[1] {
                return bad(format!("layer {k} has {} weights, expected {}", l.weights.len(), w[0] * w[1]));
            }
            let want_bias = if self.use_bias { w[1] } else { 0 };
            if l.bias.len() != want_bias {
                return bad(format!("layer {k} has {} biases, expected {want_bias}", l.bias.len()));
            }
        }
        if let Some(norm) = &self.norm {
            if norm.len() != self.dims[0] || norm.iter().any(|[lo, hi]| !(lo < hi)) {
                return bad("normalization needs one [min, max] pair with min < max per input".into());
            }
        }
        if let Some(domain) = &self.domain {
            if domain.len() != self.dims[0] || domain.iter().any(|[lo, hi]| !(lo <= hi)) {
                return bad("domain needs one [min, max] pair with min <= max per input".into());
            }
        }
        if !(self.output_scale.is_finite() && self.output_scale != 0.0) {
            return bad("output scale must be finite and nonzero".into());
        }
        Ok(())
    }

    fn prepare(&self, input: &[f64]) -> Result<Vec<f64>, SimError> {
        if input.len() != self.input_dim() {
            return Err(SimError::InvalidInput(format!("expected {} inputs, got {}", self.input_dim(), input.len())));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(SimError::InvalidInput("inputs must be finite".into()));
        }
        Ok(match &self.norm {
            Some(norm) => input.iter().zip(norm).map(|(x, [lo, hi])| (x - lo) / (hi - lo)).collect(),
            None => input.to_vec(),
        })
    }

    /// Pre-activations and activations of every layer; the last layer is linear.
    fn trace(&self, x: Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = vec![x];
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let input = &act[k];
            let n_in = input.len();
            let z: Vec<f64> = layer
                .weights
                .chunks_exact(n_in)
                .enumerate()
                .map(|(j, row)| {
                    let b = if self.use_bias { layer.bias[j] } else { 0.0 };
                    row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
                })
                .collect();
            let a = if k == last { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
            pre.push(z);
            act.push(a);
        }
        (pre, act)
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64, SimError> {
        let x = self.prepare(input)?;
        let (_, act) = self.trace(x);
        Ok(act.last().unwrap()[0] * self.output_scale)
    }

    pub fn predict(&self, spec: &RoomSpec) -> Result<f64, SimError> {
        self.forward(&spec.features())
    }

    /// Gradient of the squared error `(forward(input) - target)^2` with
    /// respect to every weight and bias.
    pub fn backward(&self, input: &[f64], target: f64) -> Result<Gradient, SimError> {
        let x = self.prepare(input)?;
        let (pre, act) = self.trace(x);
        let pred = act.last().unwrap()[0] * self.output_scale;
        let mut delta = vec![2.0 * (pred - target) * self.output_scale];
        let mut layers: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &act[k];
            let n_in = input.len();
            let mut weights = vec![0.0; self.layers[k].weights.len()];
            for (j, d) in delta.iter().enumerate() {
                for (g, x) in weights[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                    *g = d * x;
                }
            }
            let bias = if self.use_bias { delta.clone() } else { Vec::new() };
            if k > 0 {
                let w = &self.layers[k].weights;
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = delta.iter().enumerate().map(|(j, d)| d * w[j * n_in + i]).sum();
                        back * self.activation.derivative(pre[k - 1][i], act[k][i])
                    })
                    .collect();
            }
            layers.push(Layer { weights, bias });
        }
        layers.reverse();
        Ok(Gradient { layers })
    }

    fn apply_gradient(&mut self, g: &Gradient, lr: f64) {
        for (l, gl) in self.layers.iter_mut().zip(&g.layers) {
            for (w, d) in l.weights.iter_mut().zip(&gl.weights) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&gl.bias) {
                *b -= lr * d;
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| SimError::Format(format!("model file: {e}")))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => {
                return Err(SimError::Format(format!("model version {v} is not supported (expected {MODEL_VERSION})")))
            }
            None => return Err(SimError::Format("model file has no version".into())),
        }
        let model: MlpModel =
            serde_json::from_value(value).map_err(|e| SimError::Format(format!("model file: {e}")))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        MlpModel::from_json(&text).map_err(|e| SimError::Format(format!("{}: {e}", path.display())))
    }
}

/// One training example.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub x: [f64; INPUT_DIM],
    pub y: f64,
}

/// Non-censored records as samples for `target`.
pub fn samples(records: &[DatasetRecord], target: Target) -> Vec<Sample> {
    records.iter().filter(|r| !r.metrics.censored).map(|r| Sample { x: r.spec.features(), y: target.of(r) }).collect()
}

/// Smallest and largest value of each input over `data`.
pub fn observed_domain(data: &[Sample]) -> Option<Vec<[f64; 2]>> {
    if data.is_empty() {
        return None;
    }
    Some(
        (0..INPUT_DIM)
            .map(|i| {
                data.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], s| [lo.min(s.x[i]), hi.max(s.x[i])])
            })
            .collect(),
    )
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64, SimError> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(SimError::InvalidInput(format!(
            "loss needs equal nonempty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn dataset_loss(model: &MlpModel, data: &[Sample]) -> Result<f64, SimError> {
    let pred = data.iter().map(|s| model.forward(&s.x)).collect::<Result<Vec<_>, _>>()?;
    let target: Vec<f64> = data.iter().map(|s| s.y).collect();
    mse_loss(&pred, &target)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub shuffle_seed: u64,
    pub target: Target,
    /// Epochs without improvement before the learning rate is halved.
    pub patience: usize,
    /// Training stops once the rate has been halved this many times and
    /// the loss still does not improve.
    pub max_halvings: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-6,
            shuffle_seed: 0,
            target: Target::Tt,
            patience: 10,
            max_halvings: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Per-sample SGD. The plateau rule watches the validation loss (the
/// training loss when no validation set is given): after `patience`
/// epochs without improvement the rate halves, and after `max_halvings`
/// halvings without improvement training stops. The weights of the best
/// epoch are kept.
pub fn train_sgd(
    model: &mut MlpModel,
    train: &[Sample],
    valid: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport, SimError> {
    if train.is_empty() {
        return Err(SimError::InvalidInput("training set is empty".into()));
    }
    if cfg.epochs == 0 || !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(SimError::InvalidConfig("epochs must be >= 1 and the learning rate finite and >= 0".into()));
    }
    model.check()?;
    let monitor = if valid.is_empty() { train } else { valid };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut best = dataset_loss(model, monitor)?;
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut halvings = 0;
    let mut report = TrainReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        learning_rates: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = model.backward(&train[i].x, train[i].y)?;
            model.apply_gradient(&g, lr);
        }
        let tl = dataset_loss(model, train)?;
        let vl = if valid.is_empty() { tl } else { dataset_loss(model, valid)? };
        if !tl.is_finite() || !vl.is_finite() {
            return Err(SimError::Training(format!(
                "loss diverged at epoch {epoch} (learning rate {lr:e}); try a smaller rate or --normalize"
            )));
        }
        report.train_loss.push(tl);
        report.valid_loss.push(vl);
        report.learning_rates.push(lr);
        log::debug!("epoch {epoch}: train {tl:.4} valid {vl:.4} lr {lr:e}");

        if vl < best {
            best = vl;
            best_model = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience.max(1) {
                if halvings == cfg.max_halvings {
                    report.stopped_early = epoch < cfg.epochs;
                    break;
                }
                halvings += 1;
                lr *= 0.5;
                since_best = 0;
            }
        }
    }
    *model = best_model;
    report.best_epoch = best_epoch;
    Ok(report)
}

/// Architecture and training settings for one surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub use_bias: bool,
    /// Min-max input scaling to the parameter bounds, with the output
    /// scaled by the mean training target.
    pub normalize: bool,
    /// Rows taken from the end of the training records to drive the
    /// plateau rule; 0 monitors the training loss.
    pub validation: usize,
    pub init_seed: u64,
    pub train: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            hidden: DEFAULT_HIDDEN,
            activation: Activation::Sigmoid,
            use_bias: false,
            normalize: false,
            validation: 0,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl SurrogateConfig {
    /// Settings used for small corpora: normalized inputs, ReLU units with
    /// bias, a slow rate and a long plateau window.
    pub fn desk(seed: u64) -> Self {
        SurrogateConfig {
            activation: Activation::Relu,
            use_bias: true,
            normalize: true,
            validation: 250,
            init_seed: seed,
            train: TrainConfig {
                epochs: 1000,
                learning_rate: 2e-6,
                shuffle_seed: seed,
                patience: 50,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// Builds a fresh model for `records` and trains it.
pub fn fit_surrogate(records: &[DatasetRecord], cfg: &SurrogateConfig) -> Result<(MlpModel, TrainReport), SimError> {
    if cfg.hidden == 0 {
        return Err(SimError::InvalidConfig("hidden layer needs at least one unit".into()));
    }
    let (fit, valid) = crate::dataset::split(records, cfg.validation.min(records.len().saturating_sub(1)));
    let fit = samples(&fit, cfg.train.target);
    let valid = samples(&valid, cfg.train.target);
    if fit.is_empty() {
        return Err(SimError::InvalidInput("no usable training rows".into()));
    }
    let mut model = MlpModel::new(&[cfg.hidden], cfg.activation, cfg.use_bias, cfg.init_seed);
    model.target = cfg.train.target;
    if cfg.normalize {
        model = model.with_norm(table_norm());
        let mean = fit.iter().map(|s| s.y).sum::<f64>() / fit.len() as f64;
        if mean > 0.0 {
            model.output_scale = mean;
        }
    }
    model.domain = observed_domain(&fit);
    let report = train_sgd(&mut model, &fit, &valid, &cfg.train)?;
    Ok((model, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Share of scored rows with relative error below the threshold.
    pub fraction: f64,
    pub threshold: f64,
    pub scored: usize,
    /// Rows skipped because their target is zero.
    pub zero_targets: usize,
    pub mean_relative_error: f64,
}

pub fn score_below_threshold(model: &MlpModel, data: &[Sample], threshold: f64) -> Result<ScoreReport, SimError> {
    let mut below = 0;
    let mut scored = 0;
    let mut zero_targets = 0;
    let mut err_sum = 0.0;
    for s in data {
        if s.y == 0.0 {
            zero_targets += 1;
            continue;
        }
        let rel = (model.forward(&s.x)? - s.y).abs() / s.y.abs();
        scored += 1;
        err_sum += rel;
        if rel < threshold {
            below += 1;
        }
    }
    let fraction = if scored == 0 { 0.0 } else { below as f64 / scored as f64 };
    let mean_relative_error = if scored == 0 { 0.0 } else { err_sum / scored as f64 };
    Ok(ScoreReport { fraction, threshold, scored, zero_targets, mean_relative_error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_zero() {
        let m = MlpModel::zeros(&[4], Activation::Sigmoid, false);
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), 0.0);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn single_hidden_identity_sums_inputs() {
        let mut m = MlpModel::zeros(&[1], Activation::Identity, false);
        m.layers[0].weights.iter_mut().for_each(|w| *w = 1.0);
        m.layers[1].weights[0] = 1.0;
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), 21.0);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(mse_loss(&[2.0], &[0.0]).unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn score_counts_rows_below_threshold() {
        let mut m = MlpModel::zeros(&[1], Activation::Identity, false);
        m.layers[0].weights[0] = 1.0;
        m.layers[1].weights[0] = 1.0;
        let row = |pred: f64, y: f64| Sample { x: [pred, 0.0, 0.0, 0.0, 0.0, 0.0], y };
        let data = [row(105.0, 100.0), row(91.0, 100.0), row(120.0, 100.0), row(3.0, 0.0)];
        let s = score_below_threshold(&m, &data, 0.10).unwrap();
        assert!((s.fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.zero_targets, 1);
    }
}
