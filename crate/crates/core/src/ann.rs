//! Feedforward network: ReLU hidden layers, one sigmoid output unit, trained
//! by backpropagation with Adam on the mean squared error.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnArchitecture {
    pub input_width: usize,
    pub hidden: Vec<usize>,
}

impl AnnArchitecture {
    pub fn new(input_width: usize, hidden: Vec<usize>) -> Result<Self> {
        let arch = Self {
            input_width,
            hidden,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidHyperparams(format!(
                "layer widths must be positive: {:?}",
                self.widths()
            )));
        }
        Ok(())
    }

    /// Input, hidden and output widths in order.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_width);
        widths.extend_from_slice(&self.hidden);
        widths.push(1);
        widths
    }
}

/// Fully connected layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.inputs, self.outputs)
    }

    fn clear(&mut self) {
        self.weights.fill(0.0);
        self.bias.fill(0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnModel {
    arch: AnnArchitecture,
    layers: Vec<DenseLayer>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

impl Gradients {
    /// Flattened in [`AnnModel::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[DenseLayer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
        .collect()
}

#[inline]
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Label 1 iff `score > threshold`; a score equal to the threshold is 0.
#[inline]
pub fn classify(score: f64, threshold: f64) -> u8 {
    u8::from(score > threshold)
}

/// Glorot-uniform weights, zero biases.
pub fn init_network(arch: &AnnArchitecture, seed: u64) -> AnnModel {
    let mut rng = stream_rng(seed, INIT_STREAM);
    let widths = arch.widths();
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = DenseLayer::zeros(fan_in, fan_out);
            for v in &mut layer.weights {
                *v = rng.random_range(-limit..=limit);
            }
            layer
        })
        .collect();
    AnnModel {
        arch: arch.clone(),
        layers,
    }
}

impl AnnModel {
    /// Builds a model from explicit layers, checking that shapes chain and
    /// every parameter is finite.
    pub fn from_layers(arch: AnnArchitecture, layers: Vec<DenseLayer>) -> Result<Self> {
        arch.validate()?;
        let widths = arch.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::InvalidInput(format!(
                "{} layers for widths {widths:?}",
                layers.len()
            )));
        }
        for (layer, w) in layers.iter().zip(widths.windows(2)) {
            if layer.inputs != w[0]
                || layer.outputs != w[1]
                || layer.weights.len() != w[0] * w[1]
                || layer.bias.len() != w[1]
            {
                return Err(Error::InvalidInput(format!(
                    "layer shape {}×{} does not match widths {widths:?}",
                    layer.outputs, layer.inputs
                )));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite parameter".into()));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn architecture(&self) -> &AnnArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_parameters(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count());
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
    }

    /// Score in (0, 1).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.arch.input_width {
            return Err(Error::InvalidInput(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.arch.input_width
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite input".into()));
        }
        let mut ws = Workspace::new(self);
        Ok(self.forward_into(x, &mut ws))
    }

    /// Forward pass that records every layer's activation in `ws`.
    fn forward_into(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let output = &mut next[0];
            for (o, out) in output.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let z = layer.bias[o] + dot(row, input);
                *out = if l == last { sigmoid(z) } else { relu(z) };
            }
        }
        ws.acts[last + 1][0]
    }

    /// Adds the gradient of one sample's contribution `scale · (s − y)²` to
    /// `grads`, given a forward pass already stored in `ws`.
    fn backward_into(&self, target: f64, scale: f64, ws: &mut Workspace, grads: &mut [DenseLayer]) {
        let last = self.layers.len() - 1;
        let score = ws.acts[last + 1][0];
        ws.deltas[last][0] = scale * 2.0 * (score - target) * score * (1.0 - score);
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let grad = &mut grads[l];
            let input = &ws.acts[l];
            {
                let delta = &ws.deltas[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    grad.bias[o] += d;
                    let row = &mut grad.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let prev_delta = &mut lower[l - 1];
            let delta = &upper[0];
            prev_delta.fill(0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, &w) in prev_delta.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            // ReLU derivative, taken as 0 at exactly 0.
            for (p, &a) in prev_delta.iter_mut().zip(input) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
    }

    fn zero_gradients(&self) -> Vec<DenseLayer> {
        self.layers.iter().map(DenseLayer::zeros_like).collect()
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-layer activation and delta buffers reused across samples.
struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &AnnModel) -> Self {
        let widths = model.arch.widths();
        Self {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            deltas: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

/// Mean of `(score − label)²`.
pub fn mse_loss(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidInput(format!(
            "mse_loss needs equal non-empty lengths, got {} and {}",
            scores.len(),
            labels.len()
        )));
    }
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(s, y)| (s - y).powi(2))
        .sum();
    Ok(sum / scores.len() as f64)
}

/// Exact gradient of the batch mean squared error with respect to every
/// parameter.
pub fn backprop_gradients(model: &AnnModel, rows: &[&[f64]], targets: &[f64]) -> Result<Gradients> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "batch has {} rows and {} targets",
            rows.len(),
            targets.len()
        )));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != model.arch.input_width) {
        return Err(Error::InvalidInput(format!(
            "row has {} values, network expects {}",
            r.len(),
            model.arch.input_width
        )));
    }
    let mut ws = Workspace::new(model);
    let mut grads = model.zero_gradients();
    batch_gradients(model, rows.iter().copied(), targets, &mut ws, &mut grads)?;
    Ok(Gradients { layers: grads })
}

/// Accumulates the batch gradient into `grads` (which must be zeroed) and
/// returns the batch loss.
fn batch_gradients<'a>(
    model: &AnnModel,
    rows: impl Iterator<Item = &'a [f64]>,
    targets: &[f64],
    ws: &mut Workspace,
    grads: &mut [DenseLayer],
) -> Result<f64> {
    let scale = 1.0 / targets.len() as f64;
    let mut loss = 0.0;
    for (row, &target) in rows.zip(targets) {
        let score = model.forward_into(row, ws);
        if !score.is_finite() {
            return Err(Error::Divergence("non-finite network output".into()));
        }
        loss += (score - target).powi(2);
        model.backward_into(target, scale, ws, grads);
    }
    if grads
        .iter()
        .any(|g| g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()))
    {
        return Err(Error::Divergence("non-finite gradient".into()));
    }
    Ok(loss * scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !unit(self.beta1) || !unit(self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::InvalidHyperparams(format!(
                "Adam needs 0 < beta1, beta2 < 1 and epsilon > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<DenseLayer>,
    pub v: Vec<DenseLayer>,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &AnnModel) -> Self {
        Self {
            m: model.zero_gradients(),
            v: model.zero_gradients(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(
    model: &mut AnnModel,
    grads: &Gradients,
    state: &mut AdamState,
    learning_rate: f64,
    config: &AdamConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = *config;
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for (((layer, g), m), v) in model
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
        let grads = g.weights.iter().chain(&g.bias);
        let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
        let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
        for (((p, &g), m), v) in params.zip(grads).zip(ms).zip(vs) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Hidden layer widths; the length is the hidden-layer count.
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for AnnHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 1000,
            hidden: vec![100],
            adam: AdamConfig::default(),
        }
    }
}

impl AnnHyperparams {
    /// A learning rate of 0 is accepted and leaves the network at its
    /// initialization.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidHyperparams(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidHyperparams("batch size must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidHyperparams("hidden widths must be positive".into()));
        }
        self.adam.validate()
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
}

/// Trains a network on `train` with mini-batch Adam.
///
/// Rows are reshuffled every epoch from a seed-derived stream; the last batch
/// of an epoch may be short. A batch size larger than the dataset means
/// full-batch training.
pub fn train_ann(train: &Dataset, hp: &AnnHyperparams, seed: u64) -> Result<(AnnModel, TrainTrace)> {
    train.require_both_classes()?;
    let targets: Vec<f64> = train.labels().iter().map(|&l| f64::from(l)).collect();
    let rows: Vec<&[f64]> = train.rows().collect();
    fit(&rows, &targets, hp, seed)
}

pub(crate) fn fit(
    rows: &[&[f64]],
    targets: &[f64],
    hp: &AnnHyperparams,
    seed: u64,
) -> Result<(AnnModel, TrainTrace)> {
    hp.validate()?;
    let width = rows.first().map(|r| r.len()).ok_or(Error::NoRecords)?;
    let arch = AnnArchitecture::new(width, hp.hidden.clone())?;
    let mut model = init_network(&arch, seed);
    let mut rng = stream_rng(seed, SHUFFLE_STREAM);
    let mut state = AdamState::new(&model);
    let mut ws = Workspace::new(&model);
    let mut grads = Gradients {
        layers: model.zero_gradients(),
    };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let batch = hp.batch_size.min(rows.len());
    let mut batch_targets = Vec::with_capacity(batch);
    let mut trace = TrainTrace::default();

    for epoch in 0..hp.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            grads.layers.iter_mut().for_each(DenseLayer::clear);
            batch_targets.clear();
            batch_targets.extend(chunk.iter().map(|&i| targets[i]));
            let loss = batch_gradients(
                &model,
                chunk.iter().map(|&i| rows[i]),
                &batch_targets,
                &mut ws,
                &mut grads.layers,
            )
            .map_err(|e| Error::Divergence(format!("epoch {}: {e}", epoch + 1)))?;
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut model, &grads, &mut state, hp.learning_rate, &hp.adam);
        }
        let epoch_loss = loss_sum / rows.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "epoch {}: loss is {epoch_loss}",
                epoch + 1
            )));
        }
        trace.epoch_loss.push(epoch_loss);
    }
    if model.parameters().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite parameters after training".into()));
    }
    Ok((model, trace))
}
