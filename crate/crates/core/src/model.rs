//! Multi-output quantile regression with a small feed-forward network.
//!
//! The network is a ReLU multilayer perceptron with an identity output layer,
//! trained full-batch with Adam on either the pinball loss (one quantile
//! level for every output) or the squared error. Inputs and outputs pass
//! through a fixed affine scaling fitted on the training targets; the loss
//! and its gradient are always reported in the original units.

use ndarray::{Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::series::SupervisedFrame;

/// Pinball (quantile) loss `max(τ(y-ŷ), (τ-1)(y-ŷ))`.
pub fn pinball_loss(y: f64, yhat: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_unchecked(y, yhat, tau))
}

/// Mean pinball loss over paired vectors.
pub fn pinball_loss_mean(y: &[f64], yhat: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&a, &b)| pinball_unchecked(a, b, tau))
        .sum();
    Ok(total / y.len() as f64)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidTau(tau))
    }
}

#[inline]
fn pinball_unchecked(y: f64, yhat: f64, tau: f64) -> f64 {
    let r = y - yhat;
    (tau * r).max((tau - 1.0) * r)
}

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Pinball { tau: f64 },
    SquaredError,
}

impl Objective {
    pub fn pinball(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Objective::Pinball { tau })
    }

    #[inline]
    fn value(&self, y: f64, yhat: f64) -> f64 {
        match *self {
            Objective::Pinball { tau } => pinball_unchecked(y, yhat, tau),
            Objective::SquaredError => (y - yhat) * (y - yhat),
        }
    }

    /// Derivative with respect to `yhat`. At a zero pinball residual the
    /// `τ` branch is taken.
    #[inline]
    fn derivative(&self, y: f64, yhat: f64) -> f64 {
        match *self {
            Objective::Pinball { tau } => {
                if y - yhat >= 0.0 {
                    -tau
                } else {
                    1.0 - tau
                }
            }
            Objective::SquaredError => 2.0 * (yhat - y),
        }
    }
}

/// Optimizer and architecture settings for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Standardize inputs and outputs with the training-target mean and
    /// standard deviation.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: vec![64, 64],
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(crate::error::invalid("epochs", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(crate::error::invalid("learning_rate", "must be positive"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(crate::error::invalid("hidden", "layer sizes must be positive"));
        }
        Ok(())
    }
}

/// Anything that maps a `p`-vector of lags to an `H`-vector.
pub trait Regressor: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn predict_one(&self, x: &[f64]) -> Vec<f64>;

    /// Row-wise prediction over a covariate matrix.
    fn predict_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), self.output_dim()));
        for (i, row) in x.outer_iter().enumerate() {
            let y = self.predict_one(&row.to_vec());
            out.row_mut(i).assign(&ArrayView1::from(&y));
        }
        out
    }
}

/// Fits a [`Regressor`] to a supervised frame.
pub trait Learner: Send + Sync {
    type Model: Regressor;

    fn fit(&self, frame: &SupervisedFrame, seed: u64) -> Result<Self::Model>;
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `fan_in x fan_out`.
    weights: Array2<f64>,
    bias: Array1<f64>,
}

/// Affine map applied to inputs (`(x - mean) / std`) and inverted on outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub std: f64,
}

impl Scaling {
    pub const IDENTITY: Scaling = Scaling {
        mean: 0.0,
        std: 1.0,
    };

    fn fit(targets: &Array2<f64>) -> Scaling {
        let n = targets.len() as f64;
        let mean = targets.sum() / n;
        let var = targets.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        Scaling {
            mean,
            std: if std > 1e-12 { std } else { 1.0 },
        }
    }
}

/// Feed-forward network `p -> hidden... -> H` with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileNet {
    layers: Vec<Dense>,
    scaling: Scaling,
    objective: Objective,
}

struct ForwardCache {
    /// Inputs to each layer (scaled covariates first, then hidden activations).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl QuantileNet {
    /// Network with every weight and bias set to zero and identity scaling.
    pub fn zeros(layer_sizes: &[usize], objective: Objective) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layers,
            scaling: Scaling::IDENTITY,
            objective,
        })
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(
        layer_sizes: &[usize],
        objective: Objective,
        scaling: Scaling,
        seed: u64,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let mut rng = rng_from_seed(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let weights =
                    Array2::from_shape_simple_fn((w[0], w[1]), || rng.random_range(-bound..bound));
                let bias = Array1::from_shape_simple_fn(w[1], || rng.random_range(-bound..bound));
                Dense { weights, bias }
            })
            .collect();
        Ok(Self {
            layers,
            scaling,
            objective,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.nrows()];
        sizes.extend(self.layers.iter().map(|l| l.weights.ncols()));
        sizes
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn n_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flattened parameters: per layer, row-major weights then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::DimensionMismatch {
                expected: self.n_parameters(),
                got: params.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = params[offset];
                offset += 1;
            }
            for b in l.bias.iter_mut() {
                *b = params[offset];
                offset += 1;
            }
        }
        Ok(())
    }

    fn forward(&self, x: &Array2<f64>) -> ForwardCache {
        let Scaling { mean, std } = self.scaling;
        let mut current = x.mapv(|v| (v - mean) / std);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            inputs.push(current);
            if k == last {
                let output = z.mapv(|v| mean + std * v);
                return ForwardCache {
                    inputs,
                    pre,
                    output,
                };
            }
            current = z.mapv(|v| v.max(0.0));
            pre.push(z);
        }
        unreachable!("network has at least one layer")
    }

    /// Hidden-layer pre-activations for a batch of inputs.
    pub fn preactivations(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        self.forward(x).pre
    }

    /// Batch prediction; `x` has one row per input.
    pub fn predict_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let p = self.layers[0].weights.nrows();
        if x.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.ncols(),
            });
        }
        Ok(self.forward(x).output)
    }

    /// Predicts the `H`-vector for one `p`-vector of lags.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.layers[0].weights.nrows();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.len(),
            });
        }
        let batch = Array2::from_shape_vec((1, p), x.to_vec()).expect("shape matches");
        Ok(self.forward(&batch).output.into_raw_vec_and_offset().0)
    }

    /// Mean objective over every target entry of the frame.
    pub fn loss(&self, frame: &SupervisedFrame) -> f64 {
        let out = self.forward(frame.covariates()).output;
        mean_objective(&self.objective, frame.targets(), &out)
    }

    /// Mean objective and its gradient with respect to [`parameters`](Self::parameters).
    pub fn loss_and_gradient(&self, frame: &SupervisedFrame) -> (f64, Vec<f64>) {
        let (loss, grads) = self.backward(frame.covariates(), frame.targets());
        let mut flat = Vec::with_capacity(self.n_parameters());
        for g in &grads {
            flat.extend(g.weights.iter());
            flat.extend(g.bias.iter());
        }
        (loss, flat)
    }

    fn backward(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, Vec<Dense>) {
        let cache = self.forward(x);
        let count = y.len() as f64;
        let loss = mean_objective(&self.objective, y, &cache.output);
        let objective = self.objective;
        let std = self.scaling.std;
        // d loss / d raw output; raw output is scaled by `std` on the way out.
        let mut delta = Array2::zeros(cache.output.raw_dim());
        Zip::from(&mut delta)
            .and(y)
            .and(&cache.output)
            .for_each(|d, &yt, &yh| *d = objective.derivative(yt, yh) * std / count);

        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            let weights_grad = input.t().dot(&delta);
            let bias_grad = delta.sum_axis(Axis(0));
            grads.push(Dense {
                weights: weights_grad,
                bias: bias_grad,
            });
            if k > 0 {
                let mut upstream = delta.dot(&self.layers[k].weights.t());
                Zip::from(&mut upstream)
                    .and(&cache.pre[k - 1])
                    .for_each(|u, &z| {
                        if z <= 0.0 {
                            *u = 0.0;
                        }
                    });
                delta = upstream;
            }
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn to_json(&self) -> Result<String> {
        let dump = NetDump {
            format: NET_FORMAT.to_string(),
            version: NET_VERSION,
            layer_sizes: self.layer_sizes(),
            objective: self.objective,
            scaling: self.scaling,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDump {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: NetDump = serde_json::from_str(text)?;
        if dump.format != NET_FORMAT || dump.version != NET_VERSION {
            return Err(crate::error::invalid(
                "model",
                format!("unsupported format {} v{}", dump.format, dump.version),
            ));
        }
        check_sizes(&dump.layer_sizes)?;
        if dump.layers.len() + 1 != dump.layer_sizes.len() {
            return Err(crate::error::invalid("model", "layer count does not match sizes"));
        }
        let mut layers = Vec::with_capacity(dump.layers.len());
        for (w, l) in dump.layer_sizes.windows(2).zip(dump.layers) {
            let weights = Array2::from_shape_vec((w[0], w[1]), l.weights)
                .map_err(|e| crate::error::invalid("model", e.to_string()))?;
            if l.bias.len() != w[1] {
                return Err(Error::DimensionMismatch {
                    expected: w[1],
                    got: l.bias.len(),
                });
            }
            layers.push(Dense {
                weights,
                bias: Array1::from(l.bias),
            });
        }
        Ok(Self {
            layers,
            scaling: dump.scaling,
            objective: dump.objective,
        })
    }
}

const NET_FORMAT: &str = "conformal-forecast/mlp";
const NET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetDump {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    objective: Objective,
    scaling: Scaling,
    layers: Vec<LayerDump>,
}

#[derive(Serialize, Deserialize)]
struct LayerDump {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
        return Err(crate::error::invalid(
            "layer_sizes",
            "need an input and an output size, all positive",
        ));
    }
    Ok(())
}

fn mean_objective(objective: &Objective, y: &Array2<f64>, yhat: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    Zip::from(y)
        .and(yhat)
        .for_each(|&a, &b| total += objective.value(a, b));
    total / y.len() as f64
}

impl Regressor for QuantileNet {
    fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        self.predict(x).expect("input length checked by caller")
    }

    fn predict_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        self.predict_batch(x).expect("input width checked by caller")
    }
}

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(config: &TrainConfig, n: usize) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.epsilon,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trained network plus the loss recorded before the first and after the
/// last update.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: QuantileNet,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains a network on `frame` for the given objective.
pub fn fit_network(
    frame: &SupervisedFrame,
    objective: Objective,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if frame.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Objective::Pinball { tau } = objective {
        check_tau(tau)?;
    }
    if frame
        .covariates()
        .iter()
        .chain(frame.targets().iter())
        .any(|v| !v.is_finite())
    {
        return Err(crate::error::invalid("frame", "contains non-finite values"));
    }

    let mut sizes = vec![frame.lags()];
    sizes.extend(&config.hidden);
    sizes.push(frame.horizon());
    let scaling = if config.normalize {
        Scaling::fit(frame.targets())
    } else {
        Scaling::IDENTITY
    };
    let mut net = QuantileNet::init(&sizes, objective, scaling, config.seed)?;
    let mut params = net.parameters();
    let mut adam = Adam::new(config, params.len());

    let mut initial_loss = f64::NAN;
    for epoch in 0..config.epochs {
        let (loss, grads) = net.backward(frame.covariates(), frame.targets());
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        if epoch == 0 {
            initial_loss = loss;
        }
        let flat: Vec<f64> = grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect();
        adam.update(&mut params, &flat);
        net.set_parameters(&params)?;
    }
    let final_loss = net.loss(frame);
    if !final_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs,
        });
    }
    Ok(TrainOutcome {
        net,
        initial_loss,
        final_loss,
    })
}

/// Quantile regression at level `tau` for every output column.
pub fn train(frame: &SupervisedFrame, tau: f64, config: &TrainConfig) -> Result<QuantileNet> {
    Ok(fit_network(frame, Objective::pinball(tau)?, config)?.net)
}

/// Least-squares regression with the same architecture.
pub fn mse_train(frame: &SupervisedFrame, config: &TrainConfig) -> Result<QuantileNet> {
    Ok(fit_network(frame, Objective::SquaredError, config)?.net)
}

/// [`Learner`] that trains a [`QuantileNet`]; the seed passed to
/// [`Learner::fit`] replaces `config.seed`.
#[derive(Debug, Clone)]
pub struct NetLearner {
    pub objective: Objective,
    pub config: TrainConfig,
}

impl NetLearner {
    pub fn quantile(tau: f64, config: TrainConfig) -> Result<Self> {
        Ok(Self {
            objective: Objective::pinball(tau)?,
            config,
        })
    }

    pub fn squared_error(config: TrainConfig) -> Self {
        Self {
            objective: Objective::SquaredError,
            config,
        }
    }
}

impl Learner for NetLearner {
    type Model = QuantileNet;

    fn fit(&self, frame: &SupervisedFrame, seed: u64) -> Result<QuantileNet> {
        let config = TrainConfig {
            seed,
            ..self.config.clone()
        };
        Ok(fit_network(frame, self.objective, &config)?.net)
    }
}
