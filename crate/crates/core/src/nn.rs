//! Small fully connected network mapping time to outlet pressure, trained by
//! full-batch gradient descent on the mean squared error.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softplus,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Softplus => {
                // ln(1 + e^u) without overflow
                if u > 30.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
            Activation::Tanh => u.tanh(),
            Activation::Relu => u.max(0.0),
            Activation::Identity => u,
        }
    }

    #[inline]
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Softplus => 1.0 / (1.0 + (-u).exp()),
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    /// Derivative expressed through the pre-activation `u` and its image `a`,
    /// avoiding a second transcendental call where possible.
    #[inline]
    fn derivative_at(self, u: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            // sigmoid(u) = 1 - exp(-softplus(u))
            Activation::Softplus => -(-a).exp_m1(),
            _ => self.derivative(u),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = RomError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "softplus" => Ok(Activation::Softplus),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(RomError::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        f.write_str(s)
    }
}

/// Min-max map of a scalar range onto [-1, 1], the centred interval suits
/// odd activations such as tanh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    /// Maps every value to itself.
    pub const IDENTITY: Range = Range { min: -1.0, max: 1.0 };

    pub fn fit(values: &[f64]) -> Result<Range> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(min.is_finite() && max.is_finite()) {
            return Err(RomError::Training("cannot normalize empty or non-finite data".into()));
        }
        if max - min <= 1e-300 {
            // constant data: unit width centered on the value
            return Ok(Range {
                min: min - 0.5,
                max: min + 0.5,
            });
        }
        Ok(Range { min, max })
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }
    fn center(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
    pub fn half_width(&self) -> f64 {
        0.5 * self.width()
    }
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.center()) / self.half_width()
    }
    pub fn denormalize(&self, z: f64) -> f64 {
        self.center() + z * self.half_width()
    }
}

/// Feedforward network with scalar input and output. Hidden layers use
/// `activation`; the output layer is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct NNModel {
    pub sizes: Vec<usize>,
    /// Row-major `sizes[l+1] x sizes[l]` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    pub input: Range,
    pub output: Range,
}

impl NNModel {
    /// Uniform Glorot initialization, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<NNModel> {
        if sizes.len() < 2 || sizes[0] != 1 || *sizes.last().unwrap() != 1 || sizes.contains(&0) {
            return Err(RomError::Config(format!(
                "layer sizes must start and end with 1 and have no empty layer, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(NNModel {
            sizes: sizes.to_vec(),
            weights,
            biases,
            activation,
            input: Range::IDENTITY,
            output: Range::IDENTITY,
        })
    }

    /// The [1, H, H, 1] architecture.
    pub fn two_hidden(h: usize, activation: Activation, seed: u64) -> Result<NNModel> {
        NNModel::new(&[1, h, h, 1], activation, seed)
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Pre-activations and activations of every layer for a normalized input.
    fn trace_into(&self, x: f64, ws: &mut Workspace) {
        ws.act[0][0] = x;
        for l in 0..self.n_layers() {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let last = l + 1 == self.n_layers();
            let (before, after) = ws.act.split_at_mut(l + 1);
            let y = &before[l];
            let a = &mut after[0];
            let u = &mut ws.pre[l];
            for o in 0..nout {
                let row = &self.weights[l][o * nin..(o + 1) * nin];
                let mut s = self.biases[l][o];
                for (w, v) in row.iter().zip(y.iter()) {
                    s += w * v;
                }
                u[o] = s;
                a[o] = if last { s } else { self.activation.apply(s) };
            }
        }
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            pre: self.sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
            act: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; *self.sizes.iter().max().unwrap()],
            next: vec![0.0; *self.sizes.iter().max().unwrap()],
        }
    }

    /// Network output in normalized units.
    pub fn forward_normalized(&self, x: f64) -> f64 {
        let mut ws = self.workspace();
        self.trace_into(x, &mut ws);
        ws.act.last().unwrap()[0]
    }

    /// De-normalized output for a raw input.
    pub fn forward(&self, x: f64) -> f64 {
        self.output
            .denormalize(self.forward_normalized(self.input.normalize(x)))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flatten()
            .chain(self.biases.iter_mut().flatten())
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .copied()
            .collect()
    }

    pub fn set_params(&mut self, p: &[f64]) {
        for (dst, src) in self.params_mut().zip(p) {
            *dst = *src;
        }
    }
}

pub fn nn_forward(model: &NNModel, x: f64) -> f64 {
    model.forward(x)
}

struct Workspace {
    pre: Vec<Vec<f64>>,
    act: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

/// Gradients laid out like the parameters: weights then biases per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .flatten()
            .chain(self.biases.iter().flatten())
            .copied()
            .collect()
    }
}

/// Mean squared error over normalized samples.
pub fn mse(model: &NNModel, xs: &[f64], ys: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (model.forward_normalized(*x) - y).powi(2))
        .sum::<f64>()
        / xs.len() as f64
}

/// Gradient of the normalized-space MSE by reverse-mode differentiation.
pub fn nn_backprop(model: &NNModel, xs: &[f64], ys: &[f64]) -> Result<(f64, Gradients)> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(RomError::Argument(format!(
            "batch of {} inputs and {} targets",
            xs.len(),
            ys.len()
        )));
    }
    let mut gw: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut gb: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let scale = 2.0 / xs.len() as f64;
    let mut loss = 0.0;
    let mut ws = model.workspace();
    for (&x, &y) in xs.iter().zip(ys) {
        model.trace_into(x, &mut ws);
        let out = ws.act.last().unwrap()[0];
        loss += (out - y) * (out - y);
        ws.delta[0] = scale * (out - y);
        for l in (0..model.n_layers()).rev() {
            let (nin, nout) = (model.sizes[l], model.sizes[l + 1]);
            for o in 0..nout {
                let d = ws.delta[o];
                gb[l][o] += d;
                let row = &mut gw[l][o * nin..(o + 1) * nin];
                for (g, a) in row.iter_mut().zip(&ws.act[l]) {
                    *g += d * a;
                }
            }
            if l > 0 {
                ws.next[..nin].iter_mut().for_each(|v| *v = 0.0);
                for o in 0..nout {
                    let d = ws.delta[o];
                    let row = &model.weights[l][o * nin..(o + 1) * nin];
                    for (n, w) in ws.next[..nin].iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for i in 0..nin {
                    ws.delta[i] = ws.next[i] * model.activation.derivative_at(ws.pre[l - 1][i], ws.act[l][i]);
                }
            }
        }
    }
    Ok((
        loss / xs.len() as f64,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Fraction of samples used for training; the rest is the test split.
    pub split: f64,
    pub seed: u64,
    /// Min-max normalize inputs and targets before training.
    pub normalize: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(RomError::Config(format!(
                "train split must be in (0, 1), got {}",
                self.split
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(RomError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Hyperparameters of the reference application, kept for reporting.
pub const REFERENCE_HYPERPARAMETERS: ReferenceHyperparameters = ReferenceHyperparameters {
    neurons: 150,
    hidden_layers: 2,
    activation: Activation::Softplus,
    epochs: 50_000,
    learning_rate: 5e-6,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceHyperparameters {
    pub neurons: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: NNModel,
    pub history: Vec<EpochLoss>,
    /// Final MSEs in raw output units.
    pub train_mse: f64,
    pub test_mse: f64,
}

/// Seeded split of `n` sample indices into (train, test).
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(n_train);
    idx.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    (idx, test)
}

pub fn nn_train(model: &NNModel, ts: &[f64], ps: &[f64], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if ts.len() < 2 || ts.len() != ps.len() {
        return Err(RomError::Training(format!(
            "need at least two aligned samples, got {} inputs and {} targets",
            ts.len(),
            ps.len()
        )));
    }
    let mut model = model.clone();
    if cfg.normalize {
        model.input = Range::fit(ts)?;
        model.output = Range::fit(ps)?;
    } else {
        model.input = Range::IDENTITY;
        model.output = Range::IDENTITY;
    }
    let (train, test) = split_indices(ts.len(), cfg.split, cfg.seed);
    let xs: Vec<f64> = ts.iter().map(|&t| model.input.normalize(t)).collect();
    let ys: Vec<f64> = ps.iter().map(|&p| model.output.normalize(p)).collect();
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let (x_tr, y_tr) = (pick(&xs, &train), pick(&ys, &train));
    let (x_te, y_te) = (pick(&xs, &test), pick(&ys, &test));
    let raw_scale = model.output.half_width().powi(2);

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grads) = nn_backprop(&model, &x_tr, &y_tr)?;
        if !loss.is_finite() {
            return Err(RomError::Training(format!(
                "loss diverged to {loss} at epoch {epoch} (learning rate {}); lower the learning rate",
                cfg.learning_rate
            )));
        }
        history.push(EpochLoss {
            epoch,
            train_mse: loss * raw_scale,
            test_mse: mse(&model, &x_te, &y_te) * raw_scale,
        });
        let g = grads.flat();
        for (p, d) in model.params_mut().zip(g) {
            *p -= cfg.learning_rate * d;
        }
    }
    let train_mse = mse(&model, &x_tr, &y_tr) * raw_scale;
    let test_mse = mse(&model, &x_te, &y_te) * raw_scale;
    if !train_mse.is_finite() {
        return Err(RomError::Training("final training loss is not finite".into()));
    }
    history.push(EpochLoss {
        epoch: cfg.epochs,
        train_mse,
        test_mse,
    });
    Ok(TrainResult {
        model,
        history,
        train_mse,
        test_mse,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    /// The query lies more than 10% of the training range outside it.
    pub extrapolated: bool,
}

pub fn predict_outflow(model: &NNModel, t: f64) -> Prediction {
    let margin = 0.1 * model.input.width();
    let extrapolated = t < model.input.min - margin || t > model.input.max + margin;
    if extrapolated {
        log::warn!(
            "outlet pressure queried at t={t}, outside the training range [{}, {}]",
            model.input.min,
            model.input.max
        );
    }
    Prediction {
        value: model.forward(t),
        extrapolated,
    }
}

/// On-disk form: every number as a decimal string.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    sizes: Vec<usize>,
    activation: Activation,
    input_range: [String; 2],
    output_range: [String; 2],
    weights: Vec<Vec<String>>,
    biases: Vec<Vec<String>>,
}

fn dec(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn parse_all(v: &[String]) -> Result<Vec<f64>> {
    v.iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| RomError::Format(format!("bad number {s:?} in model file")))
        })
        .collect()
}

impl NNModel {
    pub fn to_json(&self) -> Result<String> {
        let f = ModelFile {
            sizes: self.sizes.clone(),
            activation: self.activation,
            input_range: [self.input.min.to_string(), self.input.max.to_string()],
            output_range: [self.output.min.to_string(), self.output.max.to_string()],
            weights: self.weights.iter().map(|w| dec(w)).collect(),
            biases: self.biases.iter().map(|b| dec(b)).collect(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(s: &str) -> Result<NNModel> {
        let f: ModelFile = serde_json::from_str(s)?;
        let range = |r: &[String; 2]| -> Result<Range> {
            let v = parse_all(r)?;
            if !(v[1] > v[0]) {
                return Err(RomError::Format(format!("degenerate normalization range {v:?}")));
            }
            Ok(Range { min: v[0], max: v[1] })
        };
        let model = NNModel {
            sizes: f.sizes.clone(),
            weights: f.weights.iter().map(|w| parse_all(w)).collect::<Result<_>>()?,
            biases: f.biases.iter().map(|b| parse_all(b)).collect::<Result<_>>()?,
            activation: f.activation,
            input: range(&f.input_range)?,
            output: range(&f.output_range)?,
        };
        let shapes_ok = model.weights.len() + 1 == model.sizes.len()
            && model.biases.len() == model.weights.len()
            && model
                .sizes
                .windows(2)
                .enumerate()
                .all(|(l, w)| model.weights[l].len() == w[0] * w[1] && model.biases[l].len() == w[1]);
        if !shapes_ok {
            return Err(RomError::Format("model weight shapes do not match layer sizes".into()));
        }
        Ok(model)
    }
}
