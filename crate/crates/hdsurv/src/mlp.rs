//! Minimal fully-connected feed-forward networks with exact reverse-mode
//! gradients. Layers compose as sigma(W v + b) with relu, sigmoid or identity
//! activations. A training head minimizes the Cox negative log partial
//! likelihood over per-subject network outputs, extending the proportional
//! hazards model to nonlinear risk in the manner of Faraggi and Simon.

use crate::coxcore::PartialLikelihood;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::util::stream_rng;
use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative through the pre-activation; relu takes the subgradient 0
    /// at its kink.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(z > 0.0),
            Activation::Linear => 1.0,
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Maps the previous width to this layer's width: one row per neuron.
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub input_dim: usize,
}

/// Values recorded during one forward pass: the vector fed into each layer
/// (after any dropout mask on the previous output) and each pre-activation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array1<f64>>,
    pre: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
    /// Gradient with respect to the network input, not a parameter.
    pub input: Array1<f64>,
}

impl Gradients {
    fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Array2::zeros(l.weights.dim()),
                    biases: Array1::zeros(l.biases.len()),
                })
                .collect(),
            input: Array1::zeros(net.input_dim),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.biases += &b.biases;
        }
        self.input += &other.input;
    }

    /// Squared norm over the parameters only.
    fn squared_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                l.weights.iter().map(|v| v * v).sum::<f64>()
                    + l.biases.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

impl Network {
    pub fn new(layers: Vec<Layer>, input_dim: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::validation("a network needs at least one layer"));
        }
        let mut fan_in = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            let (rows, cols) = layer.weights.dim();
            if rows == 0 || cols == 0 {
                return Err(Error::validation(format!("layer {l} has a zero width")));
            }
            if cols != fan_in {
                return Err(Error::validation(format!(
                    "layer {l} expects {cols} inputs but is fed {fan_in}"
                )));
            }
            if layer.biases.len() != rows {
                return Err(Error::validation(format!(
                    "layer {l} has {rows} neurons but {} biases",
                    layer.biases.len()
                )));
            }
            fan_in = rows;
        }
        Ok(Network { layers, input_dim })
    }

    /// Seeded He-style initialization: weights uniform on
    /// [-sqrt(6/fan_in), sqrt(6/fan_in)], biases zero. `dims` lists the
    /// input width followed by every layer width.
    pub fn init(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::validation(
                "initialization needs an input width and at least one layer width",
            ));
        }
        if activations.len() + 1 != dims.len() {
            return Err(Error::validation(format!(
                "{} layer widths need {} activations, got {}",
                dims.len() - 1,
                dims.len() - 1,
                activations.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::validation("layer widths must be positive"));
        }
        let mut rng = stream_rng(seed, 0);
        let mut layers = Vec::with_capacity(activations.len());
        for (l, &activation) in activations.iter().enumerate() {
            let bound = (6.0 / dims[l] as f64).sqrt();
            let weights =
                Array2::from_shape_fn((dims[l + 1], dims[l]), |_| rng.gen_range(-bound..bound));
            layers.push(Layer {
                weights,
                biases: Array1::zeros(dims[l + 1]),
                activation,
            });
        }
        Network::new(layers, dims[0])
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_dim, |l| l.weights.nrows())
    }

    pub fn forward(&self, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_masked(x, None)?.0)
    }

    pub fn forward_cached(&self, x: &ArrayView1<f64>) -> Result<(Array1<f64>, ForwardCache)> {
        self.forward_masked(x, None)
    }

    /// Masks, when present, scale the output of every layer but the last;
    /// training passes inverted dropout masks here so that evaluation needs
    /// no rescaling.
    pub(crate) fn forward_masked(
        &self,
        x: &ArrayView1<f64>,
        masks: Option<&[Array1<f64>]>,
    ) -> Result<(Array1<f64>, ForwardCache)> {
        if x.len() != self.input_dim {
            return Err(Error::validation(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("network input must be finite"));
        }
        if let Some(masks) = masks {
            if masks.len() + 1 != self.layers.len() {
                return Err(Error::validation("one dropout mask per hidden layer"));
            }
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut v = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.weights.dot(&v) + &layer.biases;
            let mut a = z.mapv(|t| layer.activation.apply(t));
            if let Some(masks) = masks {
                if l + 1 < self.layers.len() {
                    a *= &masks[l];
                }
            }
            inputs.push(std::mem::replace(&mut v, a));
            pre.push(z);
        }
        Ok((v, ForwardCache { inputs, pre }))
    }

    /// Exact gradients of any scalar loss whose gradient at the network
    /// output is `grad_output`, via reverse accumulation through the cache.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &ArrayView1<f64>) -> Result<Gradients> {
        self.backward_masked(cache, grad_output, None)
    }

    pub(crate) fn backward_masked(
        &self,
        cache: &ForwardCache,
        grad_output: &ArrayView1<f64>,
        masks: Option<&[Array1<f64>]>,
    ) -> Result<Gradients> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(v, l)| v.len() != l.weights.ncols())
        {
            return Err(Error::validation("cache does not match this network"));
        }
        if grad_output.len() != self.output_dim() {
            return Err(Error::validation(format!(
                "output gradient needs {} entries, got {}",
                self.output_dim(),
                grad_output.len()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = grad_output.to_owned();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if let Some(masks) = masks {
                if l + 1 < self.layers.len() {
                    delta *= &masks[l];
                }
            }
            let dz = &delta * &cache.pre[l].mapv(|z| layer.activation.derivative(z));
            grads.layers[l].weights = outer(&dz, &cache.inputs[l]);
            grads.layers[l].biases = dz.clone();
            delta = layer.weights.t().dot(&dz);
        }
        grads.input = delta;
        Ok(grads)
    }

    /// Scalar risk score per covariate row; the network must end in a single
    /// output neuron.
    pub fn predict_scores(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        if self.output_dim() != 1 {
            return Err(Error::validation(
                "risk scores need a single-output network",
            ));
        }
        x.outer_iter()
            .map(|row| Ok(self.forward(&row)?[0]))
            .collect()
    }

    fn stepped(&self, grads: &Gradients, scale: f64) -> Network {
        let layers = self
            .layers
            .iter()
            .zip(&grads.layers)
            .map(|(layer, g)| Layer {
                weights: &layer.weights + &(&g.weights * scale),
                biases: &layer.biases + &(&g.biases * scale),
                activation: layer.activation,
            })
            .collect();
        Network {
            layers,
            input_dim: self.input_dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Cap on the per-epoch step size; backtracking halves from a doubling
    /// warm start below this cap.
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Probability of dropping each hidden activation during training,
    /// applied as inverted-scaling Bernoulli masks resampled every epoch.
    pub dropout: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 1.0,
            epochs: 300,
            seed: 0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFit {
    pub network: Network,
    /// Negative log partial likelihood without dropout, one entry before
    /// training plus one per epoch.
    pub train_negpl: Vec<f64>,
}

type EpochMasks = Vec<Vec<Array1<f64>>>;

/// Fits relu hidden layers of the given widths topped by a linear output to
/// the Cox partial likelihood by full-batch gradient descent with Armijo
/// backtracking. An empty `hidden` gives the linear Cox model itself.
pub fn train_cox_net(
    ds: &SurvivalDataset,
    hidden: &[usize],
    opts: &TrainOptions,
) -> Result<NetworkFit> {
    if !opts.lr.is_finite() || opts.lr <= 0.0 {
        return Err(Error::validation("learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::validation("dropout must lie in [0, 1)"));
    }
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(ds.p());
    dims.extend_from_slice(hidden);
    dims.push(1);
    let mut activations = vec![Activation::Relu; hidden.len()];
    activations.push(Activation::Linear);
    let mut net = Network::init(&dims, &activations, opts.seed)?;

    let pl = PartialLikelihood::for_dataset(ds)?;
    let x = ds.x();
    let mut mask_rng = stream_rng(opts.seed, 1);
    let keep = 1.0 - opts.dropout;

    let clean_negpl = |net: &Network| -> Result<f64> {
        pl.value(&Array1::from(net.predict_scores(&x.view())?))
    };
    let mut trace = Vec::with_capacity(opts.epochs + 1);
    trace.push(clean_negpl(&net)?);

    let mut warm_step = opts.lr;
    for _ in 0..opts.epochs {
        let masks: Option<EpochMasks> = if opts.dropout > 0.0 && !hidden.is_empty() {
            Some(
                (0..ds.n())
                    .map(|_| {
                        hidden
                            .iter()
                            .map(|&h| {
                                (0..h)
                                    .map(|_| {
                                        if mask_rng.gen::<f64>() < keep {
                                            1.0 / keep
                                        } else {
                                            0.0
                                        }
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        let (loss, grads) = batch_loss_and_gradients(&net, &pl, &x.view(), masks.as_deref())?;
        let gnorm2 = grads.squared_norm();
        if gnorm2 <= 1e-30 {
            trace.push(clean_negpl(&net)?);
            continue;
        }
        let mut step = (2.0 * warm_step).min(opts.lr);
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = net.stepped(&grads, -step);
            let new_loss = batch_loss(&candidate, &pl, &x.view(), masks.as_deref())?;
            if new_loss.is_finite() && new_loss <= loss - 1e-4 * step * gnorm2 {
                net = candidate;
                warm_step = step;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // stalled at machine precision for this epoch's loss surface
            warm_step = opts.lr;
        }
        trace.push(clean_negpl(&net)?);
    }
    Ok(NetworkFit {
        network: net,
        train_negpl: trace,
    })
}

fn subject_masks(masks: Option<&[Vec<Array1<f64>>]>, i: usize) -> Option<&[Array1<f64>]> {
    masks.map(|m| m[i].as_slice())
}

fn batch_loss(
    net: &Network,
    pl: &PartialLikelihood,
    x: &ArrayView2<f64>,
    masks: Option<&[Vec<Array1<f64>>]>,
) -> Result<f64> {
    let mut etas = Array1::zeros(x.nrows());
    for (i, row) in x.outer_iter().enumerate() {
        etas[i] = net.forward_masked(&row, subject_masks(masks, i))?.0[0];
    }
    pl.value(&etas)
}

fn batch_loss_and_gradients(
    net: &Network,
    pl: &PartialLikelihood,
    x: &ArrayView2<f64>,
    masks: Option<&[Vec<Array1<f64>>]>,
) -> Result<(f64, Gradients)> {
    let n = x.nrows();
    let mut etas = Array1::zeros(n);
    let mut caches = Vec::with_capacity(n);
    for (i, row) in x.outer_iter().enumerate() {
        let (out, cache) = net.forward_masked(&row, subject_masks(masks, i))?;
        etas[i] = out[0];
        caches.push(cache);
    }
    let (loss, grad_eta) = pl.value_and_eta_gradient(&etas)?;
    let mut total = Gradients::zeros_like(net);
    for (i, cache) in caches.iter().enumerate() {
        let upstream = array![grad_eta[i]];
        total.add_assign(&net.backward_masked(cache, &upstream.view(), subject_masks(masks, i))?);
    }
    Ok((loss, total))
}
