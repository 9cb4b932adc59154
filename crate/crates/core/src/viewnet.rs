//! Four-layer view-transfer regression network.
//!
//! Layers 1-3 are sigmoid units with (inverted) dropout during training, layer
//! 4 is affine. The network regresses a view-specific trajectory histogram
//! onto the histogram of the same motion seen from the canonical view, and the
//! concatenation of all four layer outputs is used as the RGB-stream feature.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::rng::{self, purpose};
use crate::{Error, Result};

pub const LAYERS: usize = 4;

/// Full-size widths; their sum is the 6000-dimensional RGB feature.
pub const DEFAULT_WIDTHS: Widths = Widths([1000, 1000, 2000, 2000]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Widths(pub [usize; LAYERS]);

impl Widths {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn output(&self) -> usize {
        self.0[LAYERS - 1]
    }
}

impl std::fmt::Display for Widths {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "{a},{b},{c},{d}")
    }
}

impl std::str::FromStr for Widths {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("bad widths {s:?}: {e}")))?;
        let arr: [usize; LAYERS] = parts
            .try_into()
            .map_err(|_| Error::invalid(format!("widths {s:?} must list exactly {LAYERS} layers")))?;
        if arr.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(Widths(arr))
    }
}

/// Weights and biases; layer `l` maps `w[l-1]` inputs to `w[l]` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl NetworkParams {
    pub fn from_parts(weights: Vec<DMatrix<f64>>, biases: Vec<DVector<f64>>) -> Result<Self> {
        if weights.len() != LAYERS || biases.len() != LAYERS {
            return Err(Error::invalid(format!("network needs exactly {LAYERS} layers")));
        }
        for l in 0..LAYERS {
            if weights[l].nrows() == 0 || weights[l].ncols() == 0 {
                return Err(Error::invalid(format!("layer {} is empty", l + 1)));
            }
            if biases[l].len() != weights[l].nrows() {
                return Err(Error::invalid(format!("layer {} bias length mismatch", l + 1)));
            }
            if l > 0 && weights[l].ncols() != weights[l - 1].nrows() {
                return Err(Error::invalid(format!("layer {} input width mismatch", l + 1)));
            }
        }
        let finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::invalid("network parameters contain non-finite entries"));
        }
        Ok(Self { weights, biases })
    }

    pub fn zeros(input_dim: usize, widths: Widths) -> Self {
        let mut fan_in = input_dim;
        let mut weights = Vec::with_capacity(LAYERS);
        let mut biases = Vec::with_capacity(LAYERS);
        for &w in &widths.0 {
            weights.push(DMatrix::zeros(w, fan_in));
            biases.push(DVector::zeros(w));
            fan_in = w;
        }
        Self { weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn widths(&self) -> Widths {
        Widths([0, 1, 2, 3].map(|l| self.weights[l].nrows()))
    }

    pub fn feature_len(&self) -> usize {
        self.widths().total()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.widths())
    }
}

/// Xavier-uniform weights (`±sqrt(3 / ((fan_in + fan_out) / 2))`), zero biases.
pub fn init_params(seed: u64, input_dim: usize, widths: Widths) -> Result<NetworkParams> {
    if input_dim == 0 || widths.0.contains(&0) {
        return Err(Error::invalid("input dimension and widths must be positive"));
    }
    let mut params = NetworkParams::zeros(input_dim, widths);
    for (l, w) in params.weights.iter_mut().enumerate() {
        let avg_fan = (w.nrows() + w.ncols()) as f64 / 2.0;
        let bound = (3.0 / avg_fan).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
        let mut rng = rng::stream(seed, purpose::NET_INIT, &[l as u64]);
        for v in w.iter_mut() {
            *v = dist.sample(&mut rng);
        }
    }
    Ok(params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Train { dropout_rate: f64 },
    Infer,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Inverted-dropout multipliers (0 or 1/(1-rate)) for one hidden layer.
fn dropout_scale(seed: u64, layer: usize, len: usize, rate: f64) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 - rate;
    let mut rng = rng::stream(seed, purpose::DROPOUT_LAYER, &[layer as u64]);
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect()
}

/// Everything backprop needs from a batched forward pass. Columns are samples.
struct BatchTrace {
    /// Layer inputs: `inputs[0]` is the network input, `inputs[l]` layer l's output.
    inputs: Vec<DMatrix<f64>>,
    /// Sigmoid outputs of layers 1-3 before dropout.
    sigmoid: Vec<DMatrix<f64>>,
    /// Dropout multipliers of layers 1-3.
    scale: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

fn affine(w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = w * x;
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

fn forward_batch(params: &NetworkParams, x: DMatrix<f64>, mode: Mode, seeds: &[u64]) -> BatchTrace {
    let n = x.ncols();
    let mut inputs = vec![x];
    let mut sig = Vec::with_capacity(LAYERS - 1);
    let mut scales = Vec::with_capacity(LAYERS - 1);
    for l in 0..LAYERS - 1 {
        let s = affine(&params.weights[l], &params.biases[l], &inputs[l]).map(sigmoid);
        let scale = match mode {
            Mode::Infer => DMatrix::from_element(s.nrows(), n, 1.0),
            Mode::Train { dropout_rate } => {
                let mut m = DMatrix::zeros(s.nrows(), n);
                for (j, &seed) in seeds.iter().enumerate() {
                    let col = dropout_scale(seed, l, s.nrows(), dropout_rate);
                    m.column_mut(j).copy_from_slice(&col);
                }
                m
            }
        };
        inputs.push(s.component_mul(&scale));
        sig.push(s);
        scales.push(scale);
    }
    let output = affine(&params.weights[LAYERS - 1], &params.biases[LAYERS - 1], &inputs[LAYERS - 1]);
    BatchTrace {
        inputs,
        sigmoid: sig,
        scale: scales,
        output,
    }
}

fn check_input(params: &NetworkParams, len: usize) -> Result<()> {
    if len != params.input_dim() {
        return Err(Error::invalid(format!(
            "network expects input dimension {} but got {len}",
            params.input_dim()
        )));
    }
    Ok(())
}

fn check_mode(mode: Mode) -> Result<()> {
    if let Mode::Train { dropout_rate } = mode {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!("dropout rate {dropout_rate} outside [0, 1)")));
        }
    }
    Ok(())
}

/// Per-layer activations for one input. In train mode layers 1-3 are
/// returned after dropout.
pub fn forward(params: &NetworkParams, x: &[f64], mode: Mode, dropout_seed: u64) -> Result<[Vec<f64>; LAYERS]> {
    check_input(params, x.len())?;
    check_mode(mode)?;
    let trace = forward_batch(params, DMatrix::from_column_slice(x.len(), 1, x), mode, &[dropout_seed]);
    let layer = |m: &DMatrix<f64>| m.as_slice().to_vec();
    Ok([
        layer(&trace.inputs[1]),
        layer(&trace.inputs[2]),
        layer(&trace.inputs[3]),
        layer(&trace.output),
    ])
}

/// Concatenated inference-mode activations of all four layers.
pub fn extract_feature(params: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
    let layers = forward(params, x, Mode::Infer, 0)?;
    Ok(layers.concat())
}

/// A view-specific histogram and its canonical-view regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Half mean squared error over the batch and its gradients. `dropout_seeds`
/// supplies one mask seed per pair and is ignored in infer mode.
pub fn loss_and_gradients(
    params: &NetworkParams,
    batch: &[&TrainingPair],
    mode: Mode,
    dropout_seeds: &[u64],
) -> Result<(f64, NetworkParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    check_mode(mode)?;
    if matches!(mode, Mode::Train { .. }) && dropout_seeds.len() != batch.len() {
        return Err(Error::invalid("need one dropout seed per training pair"));
    }
    let out_dim = params.widths().output();
    for pair in batch {
        check_input(params, pair.input.len())?;
        if pair.target.len() != out_dim {
            return Err(Error::invalid(format!(
                "target has length {} but the network outputs {out_dim}",
                pair.target.len()
            )));
        }
    }

    let n = batch.len();
    let input = DMatrix::from_fn(params.input_dim(), n, |r, c| batch[c].input[r]);
    let target = DMatrix::from_fn(out_dim, n, |r, c| batch[c].target[r]);
    let trace = forward_batch(params, input, mode, dropout_seeds);

    let residual = &trace.output - &target;
    let loss = residual.norm_squared() / (2.0 * n as f64);

    let mut grads = params.zeros_like();
    let mut delta = residual / n as f64;
    for l in (0..LAYERS).rev() {
        grads.weights[l] = &delta * trace.inputs[l].transpose();
        grads.biases[l] = delta.column_sum();
        if l == 0 {
            break;
        }
        let upstream = params.weights[l].transpose() * &delta;
        let s = &trace.sigmoid[l - 1];
        let scale = &trace.scale[l - 1];
        delta = DMatrix::from_fn(upstream.nrows(), n, |r, c| {
            let sv = s[(r, c)];
            upstream[(r, c)] * scale[(r, c)] * sv * (1.0 - sv)
        });
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_every: usize,
    pub weight_decay: f64,
    pub total_iters: usize,
    pub momentum: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.001,
            lr_drop_factor: 10.0,
            lr_drop_every: 1000,
            weight_decay: 0.0005,
            total_iters: 6000,
            momentum: 0.9,
            batch_size: 64,
            dropout_rate: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_lr >= 0.0
            && self.initial_lr.is_finite()
            && self.lr_drop_factor > 0.0
            && self.lr_drop_factor.is_finite()
            && self.lr_drop_every > 0
            && self.weight_decay >= 0.0
            && self.total_iters > 0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && (0.0..1.0).contains(&self.dropout_rate);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid training configuration {self:?}")))
        }
    }

    /// Step schedule: divided by `lr_drop_factor` every `lr_drop_every` iterations.
    pub fn learning_rate(&self, iter: usize) -> f64 {
        let drops = (iter / self.lr_drop_every) as i32;
        self.initial_lr / self.lr_drop_factor.powi(drops)
    }
}

fn check_pairs(pairs: &[TrainingPair], params: &NetworkParams) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let out = params.widths().output();
    for p in pairs {
        check_input(params, p.input.len())?;
        if p.target.len() != out {
            return Err(Error::invalid(format!(
                "target has length {} but the network outputs {out}",
                p.target.len()
            )));
        }
    }
    Ok(())
}

/// Train a freshly initialized network. Returns the parameters and the
/// per-iteration batch loss.
pub fn sgd_train(pairs: &[TrainingPair], widths: Widths, cfg: &TrainConfig, seed: u64) -> Result<(NetworkParams, Vec<f64>)> {
    let input_dim = pairs
        .first()
        .map(|p| p.input.len())
        .ok_or_else(|| Error::invalid("no training pairs"))?;
    let params = init_params(seed, input_dim, widths)?;
    sgd_train_from(params, pairs, cfg, seed)
}

/// Momentum SGD with weight decay on weights (not biases), starting from
/// `params`.
pub fn sgd_train_from(
    mut params: NetworkParams,
    pairs: &[TrainingPair],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(NetworkParams, Vec<f64>)> {
    cfg.validate()?;
    check_pairs(pairs, &params)?;

    let mut velocity = params.zeros_like();
    let mut shuffle = rng::stream(seed, purpose::NET_SHUFFLE, &[]);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let batch_len = cfg.batch_size.min(pairs.len());
    let mut cursor = pairs.len();
    let mode = Mode::Train {
        dropout_rate: cfg.dropout_rate,
    };
    let mut trace = Vec::with_capacity(cfg.total_iters);

    for iter in 0..cfg.total_iters {
        if cursor + batch_len > pairs.len() {
            order.shuffle(&mut shuffle);
            cursor = 0;
        }
        let batch: Vec<&TrainingPair> = order[cursor..cursor + batch_len].iter().map(|&i| &pairs[i]).collect();
        let seeds: Vec<u64> = (0..batch_len)
            .map(|pos| rng::derive_seed(seed, purpose::NET_DROPOUT, &[iter as u64, pos as u64]))
            .collect();
        cursor += batch_len;

        let (loss, grads) = loss_and_gradients(&params, &batch, mode, &seeds)?;
        trace.push(loss);

        let lr = cfg.learning_rate(iter);
        for l in 0..LAYERS {
            let step = &grads.weights[l] + &params.weights[l] * cfg.weight_decay;
            velocity.weights[l] = &velocity.weights[l] * cfg.momentum - step * lr;
            params.weights[l] += &velocity.weights[l];

            velocity.biases[l] = &velocity.biases[l] * cfg.momentum - &grads.biases[l] * lr;
            params.biases[l] += &velocity.biases[l];
        }
    }
    Ok((params, trace))
}
