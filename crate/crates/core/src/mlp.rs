//! Feed-forward regression network: affine, ReLU, affine, ReLU, affine.
//!
//! Inputs are standardised with statistics of the training matrix, the
//! output is a scalar raw score, and training runs minibatch Adam on the
//! mean of a [`Loss`]. The output bias starts at the loss's constant
//! minimiser so both losses begin from the same baseline as boosting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::loss::Loss;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden_sizes: [usize; 2],
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
    /// Keep the parameters of the epoch with the lowest validation loss.
    /// Only used by [`train_with_validation`].
    pub snapshot_best: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: [64, 32],
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            epochs: 30,
            loss: Loss::Squared,
            seed: 0,
            snapshot_best: false,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.loss.validate()
    }
}

/// Dense layer with row-major `n_out x n_in` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    fn uniform(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let weights = (0..n_in * n_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self { n_in, n_out, weights, bias: vec![0.0; n_out] }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.n_in).zip(&self.bias)) {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: MlpConfig,
    pub loss: Loss,
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Layer>,
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    /// Mean training loss before the first epoch and after each epoch.
    pub train_loss: Vec<f64>,
}

/// Parameter gradients, shaped like [`Network::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Network {
    /// A network with every weight and bias zero and identity input scaling.
    pub fn zeros(n_features: usize, hidden: [usize; 2], loss: Loss) -> Self {
        Self {
            config: MlpConfig { hidden_sizes: hidden, loss, ..Default::default() },
            loss,
            input_mean: vec![0.0; n_features],
            input_scale: vec![1.0; n_features],
            layers: vec![
                Layer::zeros(n_features, hidden[0]),
                Layer::zeros(hidden[0], hidden[1]),
                Layer::zeros(hidden[1], 1),
            ],
            feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
            schema_hash: String::new(),
            train_loss: vec![],
        }
    }

    pub fn n_features(&self) -> usize {
        self.input_mean.len()
    }

    pub fn with_schema(mut self, schema: &FeatureSchema) -> Result<Self> {
        if schema.dim() != self.n_features() {
            return Err(Error::Argument(format!(
                "schema has {} features, network has {}",
                schema.dim(),
                self.n_features()
            )));
        }
        self.feature_names = schema.names.clone();
        self.schema_hash = schema.hash();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn scale_input(&self, x: &[f64], out: &mut [f64]) {
        for (o, ((v, m), s)) in out.iter_mut().zip(x.iter().zip(&self.input_mean).zip(&self.input_scale)) {
            *o = (v - m) / s;
        }
    }
}

/// Per-sample activations: scaled input and post-ReLU hidden layers.
struct Trace {
    input: Vec<f64>,
    hidden: Vec<Vec<f64>>,
}

impl Trace {
    fn new(net: &Network) -> Self {
        Self {
            input: vec![0.0; net.n_features()],
            hidden: net.layers[..net.layers.len() - 1].iter().map(|l| vec![0.0; l.n_out]).collect(),
        }
    }
}

fn forward_traced(net: &Network, x: &[f64], trace: &mut Trace) -> f64 {
    net.scale_input(x, &mut trace.input);
    let last = net.layers.len() - 1;
    for (i, layer) in net.layers[..last].iter().enumerate() {
        let (before, after) = trace.hidden.split_at_mut(i);
        let input = if i == 0 { &trace.input } else { &before[i - 1] };
        layer.apply(input, &mut after[0]);
        for v in after[0].iter_mut() {
            *v = v.max(0.0);
        }
    }
    let mut out = [0.0];
    net.layers[last].apply(&trace.hidden[last - 1], &mut out);
    out[0]
}

/// Raw score `eta`.
pub fn forward(net: &Network, x: &[f64]) -> Result<f64> {
    check_dim(net, x)?;
    Ok(forward_traced(net, x, &mut Trace::new(net)))
}

pub fn forward_batch(net: &Network, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut trace = Trace::new(net);
    x.iter()
        .map(|row| {
            check_dim(net, row)?;
            Ok(forward_traced(net, row, &mut trace))
        })
        .collect()
}

/// Predicted target mean: `exp(eta)` under Tweedie loss, `eta` otherwise.
pub fn predict(net: &Network, x: &[f64]) -> Result<f64> {
    Ok(net.loss.mean(forward(net, x)?))
}

pub fn predict_batch(net: &Network, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(forward_batch(net, x)?.into_iter().map(|r| net.loss.mean(r)).collect())
}

fn check_dim(net: &Network, x: &[f64]) -> Result<()> {
    if x.len() != net.n_features() {
        return Err(Error::Argument(format!(
            "expected {} features, got {}",
            net.n_features(),
            x.len()
        )));
    }
    Ok(())
}

/// Mean loss over the batch and its gradient with respect to every weight
/// and bias, by backpropagation.
pub fn loss_and_gradients(net: &Network, x: &[&[f64]], z: &[f64]) -> (f64, Gradients) {
    let mut grads = Gradients {
        layers: net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
    };
    let mut trace = Trace::new(net);
    let mut deltas: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.n_out]).collect();
    let scale = 1.0 / x.len() as f64;
    let mut total = 0.0;
    let n_layers = net.layers.len();

    for (row, &target) in x.iter().zip(z) {
        let raw = forward_traced(net, row, &mut trace);
        total += net.loss.value(target, raw);
        let (g, _) = net.loss.grad_hess(target, raw);
        deltas[n_layers - 1][0] = g * scale;

        for l in (0..n_layers).rev() {
            let layer = &net.layers[l];
            let input: &[f64] = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
            let (lower, upper) = deltas.split_at_mut(l);
            let delta = &upper[0];
            let grad = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad.bias[o] += d;
                let row = &mut grad.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (w, &a) in row.iter_mut().zip(input) {
                    *w += d * a;
                }
            }
            if l > 0 {
                let below = &mut lower[l - 1];
                below.iter_mut().for_each(|v| *v = 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (b, &w) in below.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                for (b, &a) in below.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
        }
    }
    (total * scale, grads)
}

struct Adam {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        let zeros = || net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        Self { m: zeros(), v: zeros(), step: 0 }
    }

    fn update(&mut self, net: &mut Network, grads: &Gradients, cfg: &MlpConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (((layer, g), m), v) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.m).zip(&mut self.v) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

fn check_inputs(x: &[Vec<f64>], z: &[f64], loss: &Loss) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Argument("no training rows".into()));
    }
    if x.len() != z.len() {
        return Err(Error::Argument(format!("{} rows but {} targets", x.len(), z.len())));
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Argument(format!("row {i} has {} features, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("row {i} has a non-finite feature")));
        }
    }
    loss.check_targets(z)?;
    Ok(d)
}

fn mean_loss(net: &Network, x: &[Vec<f64>], z: &[f64]) -> f64 {
    let mut trace = Trace::new(net);
    x.iter()
        .zip(z)
        .map(|(row, &t)| net.loss.value(t, forward_traced(net, row, &mut trace)))
        .sum::<f64>()
        / x.len() as f64
}

/// Seeded initial network: uniform weights in `+-1/sqrt(fan_in)`, zero
/// hidden biases, output bias at the constant minimiser of the loss.
pub fn init_network(x: &[Vec<f64>], z: &[f64], cfg: &MlpConfig) -> Result<Network> {
    cfg.validate()?;
    let d = check_inputs(x, z, &cfg.loss)?;
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; d];
    for row in x {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for s in scale.iter_mut() {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [h1, h2] = cfg.hidden_sizes;
    let mut layers = vec![
        Layer::uniform(d, h1, &mut rng),
        Layer::uniform(h1, h2, &mut rng),
        Layer::uniform(h2, 1, &mut rng),
    ];
    layers[2].bias[0] = cfg.loss.base_score(z)?;
    Ok(Network {
        config: cfg.clone(),
        loss: cfg.loss,
        input_mean: mean,
        input_scale: scale,
        layers,
        feature_names: (0..d).map(|i| format!("f{i}")).collect(),
        schema_hash: String::new(),
        train_loss: vec![],
    })
}

pub fn train(x: &[Vec<f64>], z: &[f64], cfg: &MlpConfig) -> Result<Network> {
    train_with_validation(x, z, None, cfg)
}

/// Minibatch Adam. With `cfg.snapshot_best` and a validation set, the
/// returned parameters are those of the epoch with lowest validation loss.
pub fn train_with_validation(
    x: &[Vec<f64>],
    z: &[f64],
    valid: Option<(&[Vec<f64>], &[f64])>,
    cfg: &MlpConfig,
) -> Result<Network> {
    let mut net = init_network(x, z, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut best: Option<(f64, Vec<Layer>)> = None;
    net.train_loss.push(mean_loss(&net, x, z));

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let bx: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
            let bz: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
            let (loss, grads) = loss_and_gradients(&net, &bx, &bz);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss });
            }
            adam.update(&mut net, &grads, cfg);
            if !net.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss: f64::NAN });
            }
        }
        let epoch_loss = mean_loss(&net, x, z);
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: 0, loss: epoch_loss });
        }
        net.train_loss.push(epoch_loss);
        if let (true, Some((vx, vz))) = (cfg.snapshot_best, valid) {
            let v = mean_loss(&net, vx, vz);
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, net.layers.clone()));
            }
        }
    }
    if let Some((_, layers)) = best {
        net.layers = layers;
    }
    Ok(net)
}
