//! Illness-death model for semi-competing risks: three transition hazards
//! (diagnosis to progression, diagnosis to death, progression to death on
//! the sojourn clock) sharing a gamma frailty, Weibull baselines, and linear
//! or neural log-risk functions. The frailty is integrated out analytically,
//! giving a closed-form marginal likelihood that joint gradient descent
//! minimizes over log-baselines, log-dispersion, and risk parameters.
//! Competing-risks prediction through the subdistribution power relation is
//! included as a small standalone utility.

use crate::data::{IllnessDeathDataset, IllnessDeathRecord};
use crate::error::{Error, Result};
use crate::mlp::{Activation, Network};
use crate::nonparam::StepFunction;
use crate::util::stream_rng;
use ndarray::{array, Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A log-risk function mapping covariates to one transition's log relative
/// hazard. Both forms satisfy the identifiability constraint h(0) = 0: the
/// linear form trivially, the network by centering at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskFunction {
    Linear { coefficients: Array1<f64> },
    Net { network: Network },
}

impl RiskFunction {
    pub fn net(network: Network) -> Result<Self> {
        if network.output_dim() != 1 {
            return Err(Error::validation(
                "a log-risk network needs a single output",
            ));
        }
        Ok(RiskFunction::Net { network })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            RiskFunction::Linear { coefficients } => coefficients.len(),
            RiskFunction::Net { network } => network.input_dim,
        }
    }

    pub fn value(&self, x: &ArrayView1<f64>) -> Result<f64> {
        match self {
            RiskFunction::Linear { coefficients } => {
                if x.len() != coefficients.len() {
                    return Err(Error::validation(format!(
                        "risk function expects {} covariates, got {}",
                        coefficients.len(),
                        x.len()
                    )));
                }
                Ok(coefficients.iter().zip(x).map(|(b, v)| b * v).sum())
            }
            RiskFunction::Net { network } => {
                let at_x = network.forward(x)?[0];
                let at_zero = network.forward(&Array1::zeros(x.len()).view())?[0];
                Ok(at_x - at_zero)
            }
        }
    }
}

/// Weibull baselines, frailty dispersion, and the three log-risk functions.
/// `phi[g]` holds the scale and shape of transition g+1, so the baseline
/// hazard is scale * shape * s^(shape-1) and its integral scale * s^shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrParameters {
    pub phi: [[f64; 2]; 3],
    pub theta: f64,
    pub h: [RiskFunction; 3],
}

impl ScrParameters {
    pub fn validate(&self) -> Result<()> {
        for (g, row) in self.phi.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::validation(format!(
                    "transition {} needs positive Weibull scale and shape",
                    g + 1
                )));
            }
        }
        if !self.theta.is_finite() || self.theta <= 0.0 {
            return Err(Error::validation("frailty variance must be positive"));
        }
        let p = self.h[0].input_dim();
        for (g, h) in self.h.iter().enumerate() {
            if h.input_dim() != p {
                return Err(Error::validation(
                    "risk functions must share the covariate dimension",
                ));
            }
            let at_zero = h.value(&Array1::zeros(p).view())?;
            if at_zero.abs() > 1e-10 {
                return Err(Error::validation(format!(
                    "risk function {} is not centered: h(0) = {at_zero:e}",
                    g + 1
                )));
            }
        }
        Ok(())
    }
}

fn weibull_hazard(phi: &[f64; 2], s: f64) -> f64 {
    phi[0] * phi[1] * s.powf(phi[1] - 1.0)
}

fn weibull_cum(phi: &[f64; 2], s: f64) -> f64 {
    if s > 0.0 {
        phi[0] * s.powf(phi[1])
    } else {
        0.0
    }
}

/// The three conditional transition hazards at time `t` since diagnosis for
/// a subject with frailty `gamma_value`. The third hazard runs on the
/// sojourn clock: progression at `t1` puts it at t - t1; without a
/// progression time it is reported at sojourn `t`.
pub fn transition_hazards(
    params: &ScrParameters,
    t: f64,
    t1: Option<f64>,
    x: &ArrayView1<f64>,
    gamma_value: f64,
) -> Result<[f64; 3]> {
    params.validate()?;
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::validation("hazards need a positive time"));
    }
    if !gamma_value.is_finite() || gamma_value < 0.0 {
        return Err(Error::validation("frailty value must be non-negative"));
    }
    let sojourn = match t1 {
        Some(u) => {
            if !u.is_finite() || u <= 0.0 || u >= t {
                return Err(Error::validation(
                    "the progression time must satisfy 0 < t1 < t",
                ));
            }
            t - u
        }
        None => t,
    };
    let mut out = [0.0; 3];
    for g in 0..3 {
        let s = if g == 2 { sojourn } else { t };
        out[g] = gamma_value * weibull_hazard(&params.phi[g], s) * params.h[g].value(x)?.exp();
    }
    Ok(out)
}

/// Transition event indicators: progression, death without progression,
/// death after progression. Their sum is d1 + d2.
fn event_pattern(rec: &IllnessDeathRecord) -> [bool; 3] {
    [rec.d1, !rec.d1 && rec.d2, rec.d1 && rec.d2]
}

/// Marginal negative log likelihood of one record given the evaluated
/// log-risk values. Integrating the Gamma(1/theta, 1/theta) frailty out of
/// the conditional three-transition likelihood leaves, with d = d1 + d2 and
/// A the summed cumulative hazards,
///   lambda-terms * (1 + theta)^(d1 d2) * (1 + theta A)^(-1/theta - d),
/// which this evaluates in log space.
fn record_neg_log_lik(phi: &[[f64; 2]; 3], theta: f64, h: &[f64; 3], rec: &IllnessDeathRecord) -> f64 {
    let e = event_pattern(rec);
    let s = [rec.y1, rec.y1, rec.y2 - rec.y1];
    let mut a = 0.0;
    let mut ll = 0.0;
    for g in 0..3 {
        a += weibull_cum(&phi[g], s[g]) * h[g].exp();
        if e[g] {
            ll += phi[g][0].ln() + phi[g][1].ln() + (phi[g][1] - 1.0) * s[g].ln() + h[g];
        }
    }
    let d = f64::from(rec.d1) + f64::from(rec.d2);
    if e[2] {
        ll += (1.0 + theta).ln();
    }
    ll -= (1.0 / theta + d) * (theta * a).ln_1p();
    -ll
}

/// Per-record gradient pieces in the optimization parameterization:
/// d/dh_g, d/dlog(phi_g1), d/dlog(phi_g2), d/dlog(theta) of the negative
/// log likelihood. The shared weight w_g = -e_g + (1+theta d) Lambda_g /
/// (1+theta A) drives both the h and the log-scale directions.
struct RecordGradient {
    neg_log_lik: f64,
    h_weight: [f64; 3],
    log_phi: [[f64; 2]; 3],
    log_theta: f64,
}

fn record_gradient(
    phi: &[[f64; 2]; 3],
    theta: f64,
    h: &[f64; 3],
    rec: &IllnessDeathRecord,
) -> RecordGradient {
    let e = event_pattern(rec);
    let s = [rec.y1, rec.y1, rec.y2 - rec.y1];
    let mut cum = [0.0; 3];
    let mut a = 0.0;
    for g in 0..3 {
        cum[g] = weibull_cum(&phi[g], s[g]) * h[g].exp();
        a += cum[g];
    }
    let d = f64::from(rec.d1) + f64::from(rec.d2);
    let ratio = (1.0 + theta * d) / (1.0 + theta * a);
    let lap = (theta * a).ln_1p();
    let mut h_weight = [0.0; 3];
    let mut log_phi = [[0.0; 2]; 3];
    for g in 0..3 {
        let w = -f64::from(e[g]) + ratio * cum[g];
        h_weight[g] = w;
        log_phi[g][0] = w;
        let ln_s = if s[g] > 0.0 { s[g].ln() } else { 0.0 };
        log_phi[g][1] = -f64::from(e[g]) + phi[g][1] * ln_s * w;
    }
    let log_theta = -f64::from(e[2]) * theta / (1.0 + theta) - lap / theta + ratio * a;
    RecordGradient {
        neg_log_lik: record_neg_log_lik(phi, theta, h, rec),
        h_weight,
        log_phi,
        log_theta,
    }
}

/// Frailty-marginalized negative log likelihood of the dataset; additive
/// over records by independence. Contributions are computed in parallel
/// and summed in record order, so the value does not depend on the thread
/// schedule.
pub fn marginal_neg_log_likelihood(
    params: &ScrParameters,
    data: &IllnessDeathDataset,
) -> Result<f64> {
    params.validate()?;
    let terms: Vec<f64> = data
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let x = ArrayView1::from(&rec.covariates[..]);
            let h = [
                params.h[0].value(&x)?,
                params.h[1].value(&x)?,
                params.h[2].value(&x)?,
            ];
            let value = record_neg_log_lik(&params.phi, params.theta, &h, rec);
            if !value.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite likelihood contribution at record {}",
                    i + 1
                )));
            }
            Ok(value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// Linear coefficients for all three transitions or one shared network
/// architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrMode {
    Linear,
    Dnn { hidden: Vec<usize> },
}

/// One point of the architecture/learning-rate/dropout grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub dropout: f64,
}

/// Default sub-network architecture: two hidden layers of 16 relu units.
pub fn default_dnn_hidden() -> Vec<usize> {
    vec![16, 16]
}

/// The declared default grid: one or two hidden layers, 8/16/32 units,
/// learning rates 1e-2 and 1e-3, dropout 0 or 0.2.
pub fn default_hyper_grid() -> Vec<HyperPoint> {
    let mut grid = Vec::new();
    for layers in [1usize, 2] {
        for units in [8usize, 16, 32] {
            for lr in [1e-2, 1e-3] {
                for dropout in [0.0, 0.2] {
                    grid.push(HyperPoint {
                        hidden: vec![units; layers],
                        lr,
                        dropout,
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrOptions {
    /// Step-size cap; Armijo backtracking warm-starts below it.
    pub lr: f64,
    pub epochs: usize,
    /// Candidate hyperparameters for the dnn mode, scored by held-out
    /// likelihood on a fifth of the data; empty uses the mode's
    /// architecture with `lr` and `dropout` directly.
    pub grid: Vec<HyperPoint>,
    /// Bootstrap replicates for the theta interval; 0 skips it.
    pub bootstrap_b: usize,
    pub seed: u64,
    pub dropout: f64,
}

impl Default for ScrOptions {
    fn default() -> Self {
        ScrOptions {
            lr: 1.0,
            epochs: 500,
            grid: Vec::new(),
            bootstrap_b: 0,
            seed: 0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrFit {
    pub params: ScrParameters,
    pub neg_log_lik: f64,
    pub converged: bool,
    pub theta_ci: Option<(f64, f64)>,
    pub hyperparams: Option<HyperPoint>,
    pub warnings: Vec<String>,
    /// Mask-free objective after every epoch, starting at the initial point.
    pub trace: Vec<f64>,
}

const LOG_THETA_POS: usize = 6;
const H_OFFSET: usize = 7;

/// Template shapes for the flat parameter vector: six log Weibull
/// parameters, log theta, then the risk-function block.
enum HProto {
    Linear { p: usize },
    Nets { templates: [Network; 3] },
}

fn network_param_count(net: &Network) -> usize {
    net.layers
        .iter()
        .map(|l| l.weights.len() + l.biases.len())
        .sum()
}

fn pack_network(net: &Network, out: &mut Vec<f64>) {
    for layer in &net.layers {
        out.extend(layer.weights.iter());
        out.extend(layer.biases.iter());
    }
}

fn unpack_network(template: &Network, flat: &[f64]) -> Network {
    let mut net = template.clone();
    let mut k = 0;
    for layer in &mut net.layers {
        for w in layer.weights.iter_mut() {
            *w = flat[k];
            k += 1;
        }
        for b in layer.biases.iter_mut() {
            *b = flat[k];
            k += 1;
        }
    }
    net
}

fn add_network_gradient(grads: &crate::mlp::Gradients, scale: f64, out: &mut [f64]) {
    let mut k = 0;
    for layer in &grads.layers {
        for g in layer.weights.iter() {
            out[k] += scale * g;
            k += 1;
        }
        for g in layer.biases.iter() {
            out[k] += scale * g;
            k += 1;
        }
    }
}

type RecordMasks = [Vec<Array1<f64>>; 3];

struct Trainer<'d> {
    data: &'d IllnessDeathDataset,
    proto: HProto,
    dropout: f64,
    mask_seed: u64,
}

impl<'d> Trainer<'d> {
    fn init_flat(&self) -> Vec<f64> {
        let mut flat = vec![0.0; H_OFFSET];
        match &self.proto {
            HProto::Linear { p } => flat.extend(std::iter::repeat(0.0).take(3 * p)),
            HProto::Nets { templates } => {
                for net in templates {
                    pack_network(net, &mut flat);
                }
            }
        }
        flat
    }

    fn unpack(&self, flat: &[f64]) -> ScrParameters {
        let mut phi = [[0.0; 2]; 3];
        for g in 0..3 {
            phi[g][0] = flat[2 * g].exp();
            phi[g][1] = flat[2 * g + 1].exp();
        }
        let theta = flat[LOG_THETA_POS].exp();
        let h = match &self.proto {
            HProto::Linear { p } => {
                let mut funcs = Vec::with_capacity(3);
                for g in 0..3 {
                    let start = H_OFFSET + g * p;
                    funcs.push(RiskFunction::Linear {
                        coefficients: Array1::from(flat[start..start + p].to_vec()),
                    });
                }
                [funcs[0].clone(), funcs[1].clone(), funcs[2].clone()]
            }
            HProto::Nets { templates } => {
                let mut start = H_OFFSET;
                let mut nets = Vec::with_capacity(3);
                for template in templates {
                    let len = network_param_count(template);
                    nets.push(RiskFunction::Net {
                        network: unpack_network(template, &flat[start..start + len]),
                    });
                    start += len;
                }
                [nets[0].clone(), nets[1].clone(), nets[2].clone()]
            }
        };
        ScrParameters { phi, theta, h }
    }

    /// Inverted dropout masks for every record's three sub-networks,
    /// regenerated identically for a given epoch.
    fn masks_for_epoch(&self, epoch: u64) -> Option<Vec<RecordMasks>> {
        let templates = match &self.proto {
            HProto::Nets { templates } if self.dropout > 0.0 => templates,
            _ => return None,
        };
        let keep = 1.0 - self.dropout;
        let mut rng = stream_rng(self.mask_seed, epoch);
        Some(
            (0..self.data.n())
                .map(|_| {
                    let mut per_net: Vec<Vec<Array1<f64>>> = Vec::with_capacity(3);
                    for net in templates.iter() {
                        let hidden = &net.layers[..net.layers.len() - 1];
                        per_net.push(
                            hidden
                                .iter()
                                .map(|layer| {
                                    (0..layer.biases.len())
                                        .map(|_| {
                                            if rng.gen::<f64>() < keep {
                                                1.0 / keep
                                            } else {
                                                0.0
                                            }
                                        })
                                        .collect()
                                })
                                .collect(),
                        );
                    }
                    [
                        per_net[0].clone(),
                        per_net[1].clone(),
                        per_net[2].clone(),
                    ]
                })
                .collect(),
        )
    }

    fn record_h(
        &self,
        params: &ScrParameters,
        x: &ArrayView1<f64>,
        zero: &Array1<f64>,
        masks: Option<&RecordMasks>,
    ) -> Result<[f64; 3]> {
        let mut h = [0.0; 3];
        for g in 0..3 {
            h[g] = match &params.h[g] {
                RiskFunction::Linear { coefficients } => {
                    coefficients.iter().zip(x).map(|(b, v)| b * v).sum()
                }
                RiskFunction::Net { network } => {
                    let m = masks.map(|mm| &mm[g][..]);
                    let at_x = network.forward_masked(x, m)?.0[0];
                    let at_zero = network.forward_masked(&zero.view(), m)?.0[0];
                    at_x - at_zero
                }
            };
        }
        Ok(h)
    }

    fn value_inner(&self, flat: &[f64], masks: Option<&[RecordMasks]>) -> Result<f64> {
        let params = self.unpack(flat);
        let zero = Array1::zeros(self.data.p());
        let mut total = 0.0;
        for (i, rec) in self.data.records().iter().enumerate() {
            let x = ArrayView1::from(&rec.covariates[..]);
            let h = self.record_h(&params, &x, &zero, masks.map(|m| &m[i]))?;
            let value = record_neg_log_lik(&params.phi, params.theta, &h, rec);
            if !value.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite likelihood contribution at record {}",
                    i + 1
                )));
            }
            total += value;
        }
        Ok(total)
    }

    fn value_clean(&self, flat: &[f64]) -> Result<f64> {
        self.value_inner(flat, None)
    }

    fn value_masked(&self, flat: &[f64], epoch: u64) -> Result<f64> {
        let masks = self.masks_for_epoch(epoch);
        self.value_inner(flat, masks.as_deref())
    }

    fn value_and_grad(&self, flat: &[f64], epoch: u64) -> Result<(f64, Vec<f64>)> {
        let params = self.unpack(flat);
        let masks = self.masks_for_epoch(epoch);
        let zero = Array1::zeros(self.data.p());
        let mut grad = vec![0.0; flat.len()];
        let mut total = 0.0;
        for (i, rec) in self.data.records().iter().enumerate() {
            let x = ArrayView1::from(&rec.covariates[..]);
            let record_masks = masks.as_ref().map(|m| &m[i]);
            let h = self.record_h(&params, &x, &zero, record_masks)?;
            let pieces = record_gradient(&params.phi, params.theta, &h, rec);
            if !pieces.neg_log_lik.is_finite() {
                return Err(Error::numerical(format!(
                    "non-finite likelihood contribution at record {}",
                    i + 1
                )));
            }
            total += pieces.neg_log_lik;
            for g in 0..3 {
                grad[2 * g] += pieces.log_phi[g][0];
                grad[2 * g + 1] += pieces.log_phi[g][1];
            }
            grad[LOG_THETA_POS] += pieces.log_theta;
            match (&self.proto, &params.h) {
                (HProto::Linear { p }, _) => {
                    for g in 0..3 {
                        let start = H_OFFSET + g * p;
                        for (j, v) in x.iter().enumerate() {
                            grad[start + j] += pieces.h_weight[g] * v;
                        }
                    }
                }
                (HProto::Nets { templates }, h_funcs) => {
                    let mut start = H_OFFSET;
                    for g in 0..3 {
                        let RiskFunction::Net { network } = &h_funcs[g] else {
                            unreachable!("net prototype unpacks to networks");
                        };
                        let len = network_param_count(&templates[g]);
                        let m = record_masks.map(|mm| &mm[g][..]);
                        let upstream = array![pieces.h_weight[g]];
                        let (_, cache_x) = network.forward_masked(&x, m)?;
                        let gx = network.backward_masked(&cache_x, &upstream.view(), m)?;
                        add_network_gradient(&gx, 1.0, &mut grad[start..start + len]);
                        let (_, cache_0) = network.forward_masked(&zero.view(), m)?;
                        let g0 = network.backward_masked(&cache_0, &upstream.view(), m)?;
                        add_network_gradient(&g0, -1.0, &mut grad[start..start + len]);
                        start += len;
                    }
                }
            }
        }
        Ok((total, grad))
    }
}

struct Minimized {
    flat: Vec<f64>,
    value: f64,
    converged: bool,
    trace: Vec<f64>,
}

/// Full-batch gradient descent with Armijo backtracking from a doubling
/// warm start. For dropout training the per-epoch masked objective guides
/// the step while the recorded trace is always the mask-free likelihood.
fn minimize(trainer: &Trainer, lr: f64, epochs: usize) -> Result<Minimized> {
    let mut flat = trainer.init_flat();
    let mut clean = trainer.value_clean(&flat)?;
    let mut trace = vec![clean];
    let mut warm = lr;
    let mut stall = 0usize;
    let deterministic = trainer.dropout == 0.0;
    for epoch in 0..epochs {
        let (f, grad) = trainer.value_and_grad(&flat, epoch as u64)?;
        let gnorm2: f64 = grad.iter().map(|v| v * v).sum();
        if gnorm2 <= 1e-30 {
            stall = 3;
            trace.push(clean);
            break;
        }
        let mut step = (2.0 * warm).min(lr);
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = flat
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi - step * gi)
                .collect();
            match trainer.value_masked(&cand, epoch as u64) {
                Ok(fc) if fc.is_finite() && fc <= f - 1e-4 * step * gnorm2 => {
                    accepted = Some((cand, fc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let prev = clean;
        match accepted {
            Some((cand, fc)) => {
                flat = cand;
                warm = step;
                clean = if deterministic {
                    fc
                } else {
                    trainer.value_clean(&flat)?
                };
            }
            None => warm = lr,
        }
        trace.push(clean);
        if deterministic {
            if prev - clean <= 1e-12 * (1.0 + clean.abs()) {
                stall += 1;
            } else {
                stall = 0;
            }
            if stall >= 3 {
                break;
            }
        }
    }
    let k = trace.len();
    let tail_flat = k >= 6 && (trace[k - 6] - trace[k - 1]).abs() <= 1e-7 * (1.0 + trace[k - 1].abs());
    Ok(Minimized {
        flat,
        value: clean,
        converged: stall >= 3 || tail_flat,
        trace,
    })
}

fn transition_counts(data: &IllnessDeathDataset) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for rec in data.records() {
        let e = event_pattern(rec);
        for g in 0..3 {
            counts[g] += usize::from(e[g]);
        }
    }
    counts
}

fn check_transition_coverage(data: &IllnessDeathDataset) -> Result<()> {
    let names = [
        "progression",
        "death-without-progression",
        "death-after-progression",
    ];
    let counts = transition_counts(data);
    for g in 0..3 {
        if counts[g] == 0 {
            return Err(Error::validation(format!(
                "no observed {} transitions; the {} baseline is unidentifiable",
                names[g],
                names[g]
            )));
        }
    }
    Ok(())
}

fn net_templates(p: usize, hidden: &[usize], seed_source: &mut impl Rng) -> Result<[Network; 3]> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(p);
    dims.extend_from_slice(hidden);
    dims.push(1);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Linear);
    let a = Network::init(&dims, &acts, seed_source.gen())?;
    let b = Network::init(&dims, &acts, seed_source.gen())?;
    let c = Network::init(&dims, &acts, seed_source.gen())?;
    Ok([a, b, c])
}

struct FitConfig {
    hidden: Option<Vec<usize>>,
    lr: f64,
    dropout: f64,
}

fn train_once<'d>(
    data: &'d IllnessDeathDataset,
    config: &FitConfig,
    epochs: usize,
    init_seed: u64,
) -> Result<(Trainer<'d>, Minimized)> {
    let mut seed_source = stream_rng(init_seed, 0);
    let proto = match &config.hidden {
        None => HProto::Linear { p: data.p() },
        Some(hidden) => HProto::Nets {
            templates: net_templates(data.p(), hidden, &mut seed_source)?,
        },
    };
    let trainer = Trainer {
        data,
        proto,
        dropout: config.dropout,
        mask_seed: seed_source.gen(),
    };
    let minimized = minimize(&trainer, config.lr, epochs)?;
    Ok((trainer, minimized))
}

/// Fits the illness-death model by minimizing the marginal likelihood over
/// log-baselines, log-dispersion, and risk parameters. The dnn mode can
/// select its architecture, learning rate, and dropout on a held-out fifth
/// of the data when a grid is supplied; bootstrap resampling of subjects
/// gives a percentile interval for theta.
pub fn fit_scr(data: &IllnessDeathDataset, mode: &ScrMode, opts: &ScrOptions) -> Result<ScrFit> {
    if !opts.lr.is_finite() || opts.lr <= 0.0 {
        return Err(Error::validation("learning rate must be positive"));
    }
    if !(0.0..1.0).contains(&opts.dropout) {
        return Err(Error::validation("dropout must lie in [0, 1)"));
    }
    check_transition_coverage(data)?;
    if matches!(mode, ScrMode::Linear) && (!opts.grid.is_empty() || opts.dropout > 0.0) {
        return Err(Error::validation(
            "the hyperparameter grid and dropout apply to the dnn mode",
        ));
    }

    let (config, hyperparams) = match mode {
        ScrMode::Linear => (
            FitConfig {
                hidden: None,
                lr: opts.lr,
                dropout: 0.0,
            },
            None,
        ),
        ScrMode::Dnn { hidden } => {
            if opts.grid.is_empty() {
                (
                    FitConfig {
                        hidden: Some(hidden.clone()),
                        lr: opts.lr,
                        dropout: opts.dropout,
                    },
                    None,
                )
            } else {
                let point = select_hyperparams(data, &opts.grid, opts)?;
                (
                    FitConfig {
                        hidden: Some(point.hidden.clone()),
                        lr: point.lr,
                        dropout: point.dropout,
                    },
                    Some(point),
                )
            }
        }
    };

    let (trainer, minimized) = train_once(data, &config, opts.epochs, opts.seed.wrapping_add(1))?;
    let params = trainer.unpack(&minimized.flat);
    let mut warnings = Vec::new();
    if params.theta < 1e-4 {
        warnings.push(format!(
            "theta = {:.3e} sits at the independence boundary",
            params.theta
        ));
    }

    let theta_ci = if opts.bootstrap_b > 0 {
        Some(bootstrap_theta_ci(
            data,
            &config,
            opts,
            params.theta,
        )?)
    } else {
        None
    };

    Ok(ScrFit {
        params,
        neg_log_lik: minimized.value,
        converged: minimized.converged,
        theta_ci,
        hyperparams,
        warnings,
        trace: minimized.trace,
    })
}

/// Scores every grid point by mask-free likelihood on a held-out fifth of
/// the records and returns the best; ties keep the earlier point.
fn select_hyperparams(
    data: &IllnessDeathDataset,
    grid: &[HyperPoint],
    opts: &ScrOptions,
) -> Result<HyperPoint> {
    for (k, point) in grid.iter().enumerate() {
        if !point.lr.is_finite() || point.lr <= 0.0 || !(0.0..1.0).contains(&point.dropout) {
            return Err(Error::validation(format!("invalid grid point {k}")));
        }
    }
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(opts.seed, 101));
    let n_val = (n / 5).max(1);
    let mut val: Vec<usize> = order[..n_val].to_vec();
    let mut train: Vec<usize> = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    if train.is_empty() {
        return Err(Error::validation("too few records for a validation split"));
    }
    let train_ds = data.subset(&train)?;
    let val_ds = data.subset(&val)?;
    check_transition_coverage(&train_ds)?;

    let mut best: Option<(f64, HyperPoint)> = None;
    for (k, point) in grid.iter().enumerate() {
        let config = FitConfig {
            hidden: Some(point.hidden.clone()),
            lr: point.lr,
            dropout: point.dropout,
        };
        let (trainer, minimized) = train_once(
            &train_ds,
            &config,
            opts.epochs,
            opts.seed.wrapping_add(100 + k as u64),
        )?;
        let fitted = trainer.unpack(&minimized.flat);
        let score = marginal_neg_log_likelihood(&fitted, &val_ds)?;
        if best.as_ref().map_or(true, |(s, _)| score < *s) {
            best = Some((score, point.clone()));
        }
    }
    Ok(best.expect("non-empty grid").1)
}

/// Percentile interval for theta from refits on subject resamples; the
/// interval is widened to contain the point estimate when needed.
fn bootstrap_theta_ci(
    data: &IllnessDeathDataset,
    config: &FitConfig,
    opts: &ScrOptions,
    theta_hat: f64,
) -> Result<(f64, f64)> {
    let n = data.n();
    let thetas: Vec<f64> = (0..opts.bootstrap_b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(opts.seed, 1000 + b as u64);
            let mut resample = None;
            for _ in 0..100 {
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let ds = data.subset(&rows)?;
                if check_transition_coverage(&ds).is_ok() {
                    resample = Some(ds);
                    break;
                }
            }
            let ds = resample.ok_or_else(|| {
                Error::numerical("bootstrap resamples keep missing a transition type")
            })?;
            let (trainer, minimized) =
                train_once(&ds, config, opts.epochs, opts.seed.wrapping_add(5000 + b as u64))?;
            Ok(trainer.unpack(&minimized.flat).theta)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = thetas;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let b = sorted.len();
    let lo_idx = ((b as f64) * 0.025).floor() as usize;
    let hi_idx = (((b as f64) * 0.975).ceil() as usize).saturating_sub(1).min(b - 1);
    let lower = sorted[lo_idx].min(theta_hat);
    let upper = sorted[hi_idx].max(theta_hat);
    Ok((lower, upper))
}

/// Frailty-marginalized prediction curves on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCurves {
    pub times: Vec<f64>,
    /// Progression-free survival (neither event yet).
    pub pfs: Vec<f64>,
    /// Cumulative incidence of progression as the first event.
    pub cif_prog: Vec<f64>,
    /// Cumulative incidence of death without progression.
    pub cif_death: Vec<f64>,
    /// Overall survival of the terminal event, including the two-step path
    /// through progression.
    pub survival: Vec<f64>,
}

/// Sub-panels used when accumulating the incidence integrals across the
/// whole requested span.
const PREDICT_PANELS: usize = 1000;

/// Evaluates progression-free survival in closed form from the frailty
/// Laplace transform, splits its drop over each sub-panel between the two
/// first transitions in the ratio of their hazards at the panel midpoint
/// (so the three one-step curves sum to one exactly), and adds the
/// progression-then-survival path by a midpoint product rule on the same
/// panels for overall survival.
pub fn predict_transitions(
    params: &ScrParameters,
    x: &ArrayView1<f64>,
    times: &[f64],
) -> Result<TransitionCurves> {
    params.validate()?;
    if times.is_empty() {
        return Err(Error::validation("prediction needs at least one time"));
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::validation("prediction times must be non-negative"));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("prediction times must be increasing"));
    }
    let theta = params.theta;
    let risk: [f64; 3] = [
        params.h[0].value(x)?.exp(),
        params.h[1].value(x)?.exp(),
        params.h[2].value(x)?.exp(),
    ];
    let cum12 = |t: f64| -> f64 {
        weibull_cum(&params.phi[0], t) * risk[0] + weibull_cum(&params.phi[1], t) * risk[1]
    };
    let pfs_at = |t: f64| -> f64 { (-(theta * cum12(t)).ln_1p() / theta).exp() };

    // breakpoints: all grid times plus proportional subdivision, from 0
    let t_max = *times.last().unwrap();
    let mut anchors: Vec<f64> = Vec::with_capacity(times.len() + 1);
    if times[0] > 0.0 {
        anchors.push(0.0);
    }
    anchors.extend_from_slice(times);
    let mut panels: Vec<(f64, f64)> = Vec::new();
    for w in anchors.windows(2) {
        let (a, b) = (w[0], w[1]);
        let nsub = (((b - a) / t_max * PREDICT_PANELS as f64).round() as usize).max(2);
        for k in 0..nsub {
            let u0 = a + (b - a) * k as f64 / nsub as f64;
            let u1 = if k + 1 == nsub {
                b
            } else {
                a + (b - a) * (k + 1) as f64 / nsub as f64
            };
            panels.push((u0, u1));
        }
    }

    // one pass accumulating exact PFS drops split at midpoint hazard ratios
    let mut cif1 = 0.0;
    let mut cif2 = 0.0;
    let mut pfs_left = 1.0;
    let mut prog_mass: Vec<(f64, f64, f64)> = Vec::with_capacity(panels.len());
    let mut at_grid: Vec<(f64, f64, f64, usize)> = Vec::with_capacity(times.len());
    let mut next_grid = 0;
    if times[0] == 0.0 {
        at_grid.push((1.0, 0.0, 0.0, 0));
        next_grid = 1;
    }
    for (idx, &(u0, u1)) in panels.iter().enumerate() {
        let pfs_right = pfs_at(u1);
        let drop = (pfs_left - pfs_right).max(0.0);
        let m = 0.5 * (u0 + u1);
        let w1 = weibull_hazard(&params.phi[0], m) * risk[0];
        let w2 = weibull_hazard(&params.phi[1], m) * risk[1];
        let total = w1 + w2;
        let share1 = if total > 0.0 { w1 / total } else { 0.5 };
        let mass1 = drop * share1;
        cif1 += mass1;
        cif2 += drop * (1.0 - share1);
        prog_mass.push((m, mass1, 1.0 + theta * cum12(m)));
        pfs_left = pfs_right;
        if next_grid < times.len() && u1 == times[next_grid] {
            at_grid.push((pfs_right, cif1, cif2, idx + 1));
            next_grid += 1;
        }
    }
    if at_grid.len() != times.len() {
        return Err(Error::numerical("prediction grid alignment failed"));
    }

    let mut curves = TransitionCurves {
        times: times.to_vec(),
        pfs: Vec::with_capacity(times.len()),
        cif_prog: Vec::with_capacity(times.len()),
        cif_death: Vec::with_capacity(times.len()),
        survival: Vec::with_capacity(times.len()),
    };
    let exponent = 1.0 / theta + 1.0;
    for (k, &(pfs, c1, c2, panel_end)) in at_grid.iter().enumerate() {
        let t = times[k];
        let mut alive_after_prog = 0.0;
        for &(m, mass1, lap_m) in &prog_mass[..panel_end] {
            let extra = weibull_cum(&params.phi[2], t - m) * risk[2];
            alive_after_prog += mass1 * (-exponent * (theta * extra / lap_m).ln_1p()).exp();
        }
        curves.pfs.push(pfs);
        curves.cif_prog.push(c1);
        curves.cif_death.push(c2);
        curves.survival.push(pfs + alive_after_prog);
    }
    Ok(curves)
}

/// Log-risk values along a sweep of one covariate with the others pinned at
/// the supplied base point; the rows behind covariate-effect plots.
pub fn risk_sweep(
    params: &ScrParameters,
    base: &ArrayView1<f64>,
    feature: usize,
    values: &[f64],
) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    if feature >= base.len() {
        return Err(Error::validation(format!(
            "sweep feature {feature} out of range for {} covariates",
            base.len()
        )));
    }
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut x = base.to_owned();
        x[feature] = v;
        out.push([
            params.h[0].value(&x.view())?,
            params.h[1].value(&x.view())?,
            params.h[2].value(&x.view())?,
        ]);
    }
    Ok(out)
}

/// Competing-risks model through the subdistribution power relation: one
/// baseline cumulative incidence function per cause and a shared
/// coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifModel {
    pub baseline_cif: Vec<StepFunction>,
    pub beta: Array1<f64>,
}

impl CifModel {
    pub fn new(baseline_cif: Vec<StepFunction>, beta: Array1<f64>) -> Result<Self> {
        if baseline_cif.is_empty() {
            return Err(Error::validation("at least one cause is required"));
        }
        for (c, f) in baseline_cif.iter().enumerate() {
            let mut prev = f.left_value;
            if !(0.0..1.0).contains(&prev) {
                return Err(Error::validation(format!(
                    "cause {c} baseline must start inside [0, 1)"
                )));
            }
            for v in &f.values {
                if *v < prev || !(0.0..1.0).contains(v) {
                    return Err(Error::validation(format!(
                        "cause {c} baseline must be non-decreasing within [0, 1)"
                    )));
                }
                prev = *v;
            }
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::validation("coefficients must be finite"));
        }
        Ok(CifModel { baseline_cif, beta })
    }
}

/// Cumulative incidence of `cause` at time t for covariates x:
/// 1 - (1 - F0(t))^exp(x'beta).
pub fn cif_predict(model: &CifModel, x: &ArrayView1<f64>, cause: usize, t: f64) -> Result<f64> {
    let f0 = model
        .baseline_cif
        .get(cause)
        .ok_or_else(|| Error::validation(format!("cause {cause} out of range")))?;
    if x.len() != model.beta.len() {
        return Err(Error::validation(format!(
            "expected {} covariates, got {}",
            model.beta.len(),
            x.len()
        )));
    }
    if !t.is_finite() {
        return Err(Error::validation("time must be finite"));
    }
    let r = model
        .beta
        .iter()
        .zip(x)
        .map(|(b, v)| b * v)
        .sum::<f64>()
        .exp();
    Ok(1.0 - (1.0 - f0.eval(t)).powf(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{
        quadrature_neg_log_likelihood, simulate, Censoring, SimKind, SimResult, SimSpec,
    };

    const PHI: [[f64; 2]; 3] = [[0.8, 1.2], [0.5, 0.9], [0.9, 1.5]];

    fn linear_params(phi: [[f64; 2]; 3], theta: f64, betas: [&[f64]; 3]) -> ScrParameters {
        let h = [0, 1, 2].map(|g| RiskFunction::Linear {
            coefficients: Array1::from(betas[g].to_vec()),
        });
        ScrParameters { phi, theta, h }
    }

    fn unit_params(p: usize) -> ScrParameters {
        let zeros = vec![0.0; p];
        linear_params([[1.0, 1.0]; 3], 1.0, [&zeros, &zeros, &zeros])
    }

    fn record(y1: f64, d1: bool, y2: f64, d2: bool, x: Vec<f64>) -> IllnessDeathRecord {
        IllnessDeathRecord {
            y1,
            d1,
            y2,
            d2,
            covariates: x,
        }
    }

    fn single(rec: IllnessDeathRecord) -> IllnessDeathDataset {
        let names = (0..rec.covariates.len()).map(|j| format!("x{j}")).collect();
        IllnessDeathDataset::new(vec![rec], names).unwrap()
    }

    fn sim_linear(
        n: usize,
        theta: f64,
        betas: [Vec<f64>; 3],
        censor_rate: f64,
        seed: u64,
    ) -> IllnessDeathDataset {
        let spec = SimSpec {
            n,
            p: betas[0].len(),
            rho: 0.2,
            kind: SimKind::IllnessDeath {
                betas,
                phi: PHI,
                theta,
            },
            censoring: Censoring::ExponentialRate { rate: censor_rate },
        };
        match simulate(&spec, seed).unwrap() {
            SimResult::IllnessDeath(ds) => ds,
            _ => unreachable!(),
        }
    }

    fn test_betas() -> [Vec<f64>; 3] {
        [
            vec![0.5, -0.5, 0.25],
            vec![-0.4, 0.3, 0.2],
            vec![0.3, 0.2, -0.4],
        ]
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            let order = crate::util::argsort(v);
            let mut r = vec![0.0; v.len()];
            for (k, &i) in order.iter().enumerate() {
                r[i] = k as f64;
            }
            r
        };
        let (ra, rb) = (rank(a), rank(b));
        let mean = (a.len() as f64 - 1.0) / 2.0;
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for i in 0..a.len() {
            num += (ra[i] - mean) * (rb[i] - mean);
            da += (ra[i] - mean).powi(2);
            db += (rb[i] - mean).powi(2);
        }
        num / (da * db).sqrt()
    }

    #[test]
    fn hazards_reduce_to_the_unit_exponential_baseline() {
        let params = unit_params(2);
        let x = ndarray::array![0.4, -1.0];
        let out = transition_hazards(&params, 0.37, None, &x.view(), 1.0).unwrap();
        assert_eq!(out, [1.0, 1.0, 1.0]);
        let with_prog = transition_hazards(&params, 0.37, Some(0.2), &x.view(), 1.0).unwrap();
        assert_eq!(with_prog, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn hazards_scale_with_shape_risk_and_frailty() {
        let mut params = unit_params(1);
        params.phi[0] = [1.0, 2.0];
        let x = ndarray::array![0.0];
        let t = 0.63;
        let out = transition_hazards(&params, t, None, &x.view(), 1.0).unwrap();
        assert!((out[0] - 2.0 * t).abs() < 1e-14);

        // doubling exp(h) doubles the hazard; frailty multiplies it
        let params = linear_params(
            [[1.0, 1.0]; 3],
            1.0,
            [&[2f64.ln()], &[2f64.ln()], &[2f64.ln()]],
        );
        let base = transition_hazards(&params, t, None, &ndarray::array![0.0].view(), 1.0).unwrap();
        let boosted =
            transition_hazards(&params, t, None, &ndarray::array![1.0].view(), 1.0).unwrap();
        let frail = transition_hazards(&params, t, None, &ndarray::array![0.0].view(), 3.0).unwrap();
        for g in 0..3 {
            assert!((boosted[g] - 2.0 * base[g]).abs() < 1e-12);
            assert!((frail[g] - 3.0 * base[g]).abs() < 1e-12);
        }
    }

    #[test]
    fn the_sojourn_clock_requires_a_progression_time_inside_the_window() {
        let params = unit_params(1);
        let x = ndarray::array![0.0];
        assert!(transition_hazards(&params, 1.0, Some(1.0), &x.view(), 1.0).is_err());
        assert!(transition_hazards(&params, 1.0, Some(1.5), &x.view(), 1.0).is_err());
        assert!(transition_hazards(&params, 1.0, Some(0.0), &x.view(), 1.0).is_err());
        assert!(transition_hazards(&params, 0.0, None, &x.view(), 1.0).is_err());
        assert!(transition_hazards(&params, 1.0, None, &x.view(), -0.5).is_err());
    }

    #[test]
    fn a_fully_censored_record_approaches_the_independent_exponential_limit() {
        // as theta -> 0 the frailty degenerates to one and the contribution
        // becomes Lambda1(y1) + Lambda2(y1) = 2 y1 for unit baselines
        let mut params = unit_params(1);
        params.theta = 1e-6;
        let ds = single(record(0.7, false, 0.7, false, vec![0.0]));
        let value = marginal_neg_log_likelihood(&params, &ds).unwrap();
        assert!((value - 1.4).abs() < 1e-4);
    }

    #[test]
    fn small_theta_separates_the_two_dispersion_exponent_patterns() {
        // the derived exponent pattern (1+theta*A)^(-1/theta-d) keeps the
        // independent-model limit; the swapped pattern
        // (1+A/theta)^(-theta-d) collapses to certainty instead
        let mut params = unit_params(1);
        params.theta = 1e-6;
        let a = 1.4;
        let derived = marginal_neg_log_likelihood(&params, &single(record(0.7, false, 0.7, false, vec![0.0]))).unwrap();
        let swapped = (params.theta + 0.0) * (a / params.theta).ln_1p();
        assert!((derived - a).abs() < 1e-4);
        assert!((swapped - a).abs() > 1.0);
    }

    #[test]
    fn likelihood_matches_the_frailty_quadrature_oracle() {
        let mut rng = stream_rng(7, 0);
        let mut worst: f64 = 0.0;
        for draw in 0..100 {
            let p = 3;
            let phi = [
                [rng.gen_range(0.2..2.0), rng.gen_range(0.6..1.8)],
                [rng.gen_range(0.2..2.0), rng.gen_range(0.6..1.8)],
                [rng.gen_range(0.2..2.0), rng.gen_range(0.6..1.8)],
            ];
            let theta = rng.gen_range(0.3..3.0);
            let h = [0, 1, 2].map(|_| RiskFunction::Linear {
                coefficients: Array1::from(
                    (0..p).map(|_| rng.gen_range(-0.8..0.8)).collect::<Vec<_>>(),
                ),
            });
            let params = ScrParameters { phi, theta, h };
            let x: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t1: f64 = rng.gen_range(0.2..1.5);
            let t2: f64 = t1 + rng.gen_range(0.2..1.5);
            let rec = match draw % 4 {
                0 => record(t1, false, t1, false, x),
                1 => record(t1, true, t2, false, x),
                2 => record(t1, false, t1, true, x),
                _ => record(t1, true, t2, true, x),
            };
            let analytic = marginal_neg_log_likelihood(&params, &single(rec.clone())).unwrap();
            let quad = quadrature_neg_log_likelihood(&params, &rec, 64).unwrap();
            worst = worst.max(((analytic - quad).exp() - 1.0).abs());
        }
        assert!(worst < 1e-6, "worst likelihood rel err {worst:e}");
    }

    #[test]
    fn the_dataset_likelihood_adds_over_records() {
        let params = linear_params(PHI, 0.8, [&[0.3, -0.2], &[0.1, 0.4], &[-0.3, 0.2]]);
        let recs = vec![
            record(0.5, true, 1.1, true, vec![0.2, -0.5]),
            record(0.9, false, 0.9, true, vec![-1.0, 0.3]),
            record(1.4, false, 1.4, false, vec![0.0, 0.8]),
        ];
        let names = vec!["a".into(), "b".into()];
        let ds = IllnessDeathDataset::new(recs.clone(), names).unwrap();
        let total = marginal_neg_log_likelihood(&params, &ds).unwrap();
        let sum: f64 = recs
            .into_iter()
            .map(|r| marginal_neg_log_likelihood(&params, &single(r)).unwrap())
            .sum();
        assert_eq!(total, sum);
    }

    #[test]
    fn an_overflowing_risk_names_the_failing_record() {
        let params = linear_params(PHI, 1.0, [&[800.0], &[0.0], &[0.0]]);
        let ds = IllnessDeathDataset::new(
            vec![
                record(0.5, true, 1.0, true, vec![0.0]),
                record(0.5, true, 1.0, true, vec![1.0]),
            ],
            vec!["x".into()],
        )
        .unwrap();
        let err = marginal_neg_log_likelihood(&params, &ds).unwrap_err();
        assert!(err.to_string().contains("record 2"), "{err}");
    }

    #[test]
    fn linear_gradients_match_central_differences() {
        let ds = sim_linear(30, 1.0, test_betas(), 0.3, 3);
        let trainer = Trainer {
            data: &ds,
            proto: HProto::Linear { p: 3 },
            dropout: 0.0,
            mask_seed: 0,
        };
        let mut flat = trainer.init_flat();
        let mut rng = stream_rng(4, 0);
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.4..0.4);
        }
        let (_, grad) = trainer.value_and_grad(&flat, 0).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..flat.len() {
            let mut plus = flat.clone();
            plus[j] += step;
            let mut minus = flat.clone();
            minus[j] -= step;
            let fd = (trainer.value_clean(&plus).unwrap() - trainer.value_clean(&minus).unwrap())
                / (2.0 * step);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(1.0));
        }
        assert!(worst < 1e-5, "worst gradient rel err {worst:e}");
    }

    #[test]
    fn network_gradients_match_central_differences_under_dropout() {
        let ds = sim_linear(20, 1.0, test_betas(), 0.3, 6);
        let mut seed_source = stream_rng(12, 0);
        let templates = net_templates(3, &[4], &mut seed_source).unwrap();
        let trainer = Trainer {
            data: &ds,
            proto: HProto::Nets { templates },
            dropout: 0.3,
            mask_seed: 9,
        };
        let mut flat = trainer.init_flat();
        // move every parameter (and so every relu pre-activation) off zero
        let mut rng = stream_rng(13, 0);
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
        let (_, grad) = trainer.value_and_grad(&flat, 5).unwrap();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for j in 0..flat.len() {
            let mut plus = flat.clone();
            plus[j] += step;
            let mut minus = flat.clone();
            minus[j] -= step;
            let fd = (trainer.value_masked(&plus, 5).unwrap()
                - trainer.value_masked(&minus, 5).unwrap())
                / (2.0 * step);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(1.0));
        }
        assert!(worst < 1e-5, "worst gradient rel err {worst:e}");
    }

    #[test]
    fn the_linear_fit_recovers_the_generating_parameters() {
        let ds = sim_linear(3000, 2.0, test_betas(), 0.25, 42);
        let fit = fit_scr(
            &ds,
            &ScrMode::Linear,
            &ScrOptions {
                epochs: 800,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.converged);
        assert!(
            (1.6..=2.4).contains(&fit.params.theta),
            "theta {}",
            fit.params.theta
        );
        let truth = test_betas();
        for g in 0..3 {
            let RiskFunction::Linear { coefficients } = &fit.params.h[g] else {
                panic!("linear mode fits linear risks");
            };
            for (a, b) in coefficients.iter().zip(&truth[g]) {
                assert!((a - b).abs() < 0.25, "transition {} coefficient {a} vs {b}", g + 1);
            }
        }
        // the reported objective is exactly the public likelihood value
        assert_eq!(
            fit.neg_log_lik,
            marginal_neg_log_likelihood(&fit.params, &ds).unwrap()
        );
    }

    #[test]
    fn the_objective_trace_never_increases_without_dropout() {
        let ds = sim_linear(300, 1.0, test_betas(), 0.25, 9);
        let fit = fit_scr(
            &ds,
            &ScrMode::Linear,
            &ScrOptions {
                epochs: 200,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(fit.trace.len() >= 2);
        for w in fit.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        assert!(*fit.trace.last().unwrap() < fit.trace[0]);
    }

    #[test]
    fn a_zero_hidden_layer_network_matches_the_linear_mode() {
        let ds = sim_linear(600, 1.0, test_betas(), 0.25, 11);
        let lin = fit_scr(
            &ds,
            &ScrMode::Linear,
            &ScrOptions {
                epochs: 600,
                ..Default::default()
            },
        )
        .unwrap();
        let net = fit_scr(
            &ds,
            &ScrMode::Dnn { hidden: vec![] },
            &ScrOptions {
                epochs: 600,
                lr: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((net.neg_log_lik - lin.neg_log_lik).abs() < 1e-3);
        for g in 0..3 {
            let RiskFunction::Linear { coefficients } = &lin.params.h[g] else {
                panic!()
            };
            // a bias-free direction read off the centered network
            let mut grad = vec![0.0; 3];
            for j in 0..3 {
                let mut x = Array1::zeros(3);
                x[j] = 1e-5;
                grad[j] = net.params.h[g].value(&x.view()).unwrap() / 1e-5;
            }
            let dot: f64 = grad.iter().zip(coefficients).map(|(a, b)| a * b).sum();
            let na: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = coefficients.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dot / (na * nb) > 0.99, "transition {} cosine", g + 1);
        }
    }

    #[test]
    fn the_network_mode_ranks_a_linear_truth_correctly() {
        let betas = test_betas();
        let ds = sim_linear(600, 1.0, betas.clone(), 0.25, 11);
        let fit = fit_scr(
            &ds,
            &ScrMode::Dnn { hidden: vec![8] },
            &ScrOptions {
                epochs: 200,
                lr: 0.1,
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let mut fitted = Vec::new();
        let mut truth = Vec::new();
        for r in ds.records() {
            let x = Array1::from(r.covariates.clone());
            fitted.push(fit.params.h[0].value(&x.view()).unwrap());
            truth.push(
                betas[0]
                    .iter()
                    .zip(&r.covariates)
                    .map(|(b, v)| b * v)
                    .sum::<f64>(),
            );
        }
        let rho = spearman(&fitted, &truth);
        assert!(rho > 0.9, "spearman {rho}");
    }

    #[test]
    fn centering_pins_every_risk_mode_to_zero_at_the_origin() {
        let ds = sim_linear(80, 1.0, test_betas(), 0.3, 14);
        let fit = fit_scr(
            &ds,
            &ScrMode::Dnn { hidden: vec![4] },
            &ScrOptions {
                epochs: 20,
                lr: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        let origin = Array1::zeros(3);
        for g in 0..3 {
            assert_eq!(fit.params.h[g].value(&origin.view()).unwrap(), 0.0);
        }
        let lin = linear_params(PHI, 1.0, [&[0.4, -0.3], &[0.2, 0.1], &[0.0, 0.5]]);
        let origin = Array1::zeros(2);
        for g in 0..3 {
            assert_eq!(lin.h[g].value(&origin.view()).unwrap(), 0.0);
        }
    }

    #[test]
    fn fits_are_identical_across_reruns_and_thread_counts() {
        let ds = sim_linear(150, 1.0, test_betas(), 0.3, 17);
        let opts = ScrOptions {
            epochs: 30,
            lr: 0.1,
            dropout: 0.2,
            seed: 4,
            bootstrap_b: 8,
            ..Default::default()
        };
        let mode = ScrMode::Dnn { hidden: vec![3] };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let fit = pool.install(|| fit_scr(&ds, &mode, &opts)).unwrap();
            serde_json::to_string(&fit).unwrap()
        };
        let one = run(1);
        let four = run(4);
        let again = run(4);
        assert_eq!(one, four);
        assert_eq!(four, again);
    }

    #[test]
    fn the_grid_search_records_the_chosen_point() {
        let ds = sim_linear(240, 1.0, test_betas(), 0.3, 19);
        let grid = vec![
            HyperPoint {
                hidden: vec![2],
                lr: 0.2,
                dropout: 0.0,
            },
            HyperPoint {
                hidden: vec![4],
                lr: 0.2,
                dropout: 0.0,
            },
        ];
        let fit = fit_scr(
            &ds,
            &ScrMode::Dnn { hidden: vec![16] },
            &ScrOptions {
                epochs: 25,
                grid: grid.clone(),
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let chosen = fit.hyperparams.expect("grid search records its choice");
        assert!(grid.contains(&chosen));
        let RiskFunction::Net { network } = &fit.params.h[0] else {
            panic!("dnn mode fits networks");
        };
        assert_eq!(network.layers[0].biases.len(), chosen.hidden[0]);
    }

    #[test]
    fn the_default_grid_spans_the_declared_axes() {
        let grid = default_hyper_grid();
        assert_eq!(grid.len(), 24);
        assert!(grid.iter().any(|p| p.hidden == vec![8]));
        assert!(grid.iter().any(|p| p.hidden == vec![32, 32]));
        assert!(grid.iter().any(|p| p.lr == 1e-3 && p.dropout == 0.2));
        assert_eq!(default_dnn_hidden(), vec![16, 16]);
    }

    #[test]
    fn the_bootstrap_interval_brackets_the_point_estimate() {
        let ds = sim_linear(250, 1.0, test_betas(), 0.25, 23);
        let fit = fit_scr(
            &ds,
            &ScrMode::Linear,
            &ScrOptions {
                epochs: 150,
                bootstrap_b: 16,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let (lo, hi) = fit.theta_ci.expect("bootstrap requested");
        assert!(lo <= fit.params.theta && fit.params.theta <= hi);
        assert!(lo < hi);
    }

    #[test]
    fn a_missing_transition_type_is_named() {
        // deaths only, no progressions
        let recs: Vec<IllnessDeathRecord> = (0..10)
            .map(|i| {
                let t = 0.3 + 0.1 * i as f64;
                record(t, false, t, i % 2 == 0, vec![0.1 * i as f64])
            })
            .collect();
        let ds = IllnessDeathDataset::new(recs, vec!["x".into()]).unwrap();
        let err = fit_scr(&ds, &ScrMode::Linear, &ScrOptions::default()).unwrap_err();
        assert!(err.to_string().contains("progression"), "{err}");
    }

    #[test]
    fn option_misuse_is_rejected() {
        let ds = sim_linear(40, 1.0, test_betas(), 0.3, 29);
        let bad_lr = ScrOptions {
            lr: 0.0,
            ..Default::default()
        };
        assert!(fit_scr(&ds, &ScrMode::Linear, &bad_lr).is_err());
        let bad_dropout = ScrOptions {
            dropout: 1.0,
            ..Default::default()
        };
        assert!(fit_scr(&ds, &ScrMode::Dnn { hidden: vec![4] }, &bad_dropout).is_err());
        let linear_grid = ScrOptions {
            grid: default_hyper_grid(),
            ..Default::default()
        };
        assert!(fit_scr(&ds, &ScrMode::Linear, &linear_grid).is_err());
        let linear_dropout = ScrOptions {
            dropout: 0.2,
            ..Default::default()
        };
        assert!(fit_scr(&ds, &ScrMode::Linear, &linear_dropout).is_err());
    }

    #[test]
    fn prediction_starts_at_certainty() {
        let params = linear_params(PHI, 2.0, [&[0.4], &[-0.2], &[0.3]]);
        let x = ndarray::array![0.7];
        let curves = predict_transitions(&params, &x.view(), &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(curves.pfs[0], 1.0);
        assert_eq!(curves.cif_prog[0], 0.0);
        assert_eq!(curves.cif_death[0], 0.0);
        assert_eq!(curves.survival[0], 1.0);
    }

    #[test]
    fn one_step_probabilities_conserve_mass_on_every_grid_point() {
        let params = linear_params(PHI, 2.0, [&[0.4, -0.1], &[-0.2, 0.3], &[0.3, 0.2]]);
        let x = ndarray::array![0.7, -0.4];
        let times: Vec<f64> = (1..=40).map(|k| 0.12 * k as f64).collect();
        let curves = predict_transitions(&params, &x.view(), &times).unwrap();
        for k in 0..times.len() {
            let total = curves.pfs[k] + curves.cif_prog[k] + curves.cif_death[k];
            assert!((total - 1.0).abs() < 1e-9, "t={} total={total}", times[k]);
        }
    }

    #[test]
    fn prediction_curves_are_monotone() {
        let params = linear_params(PHI, 1.0, [&[0.4], &[-0.2], &[0.3]]);
        let x = ndarray::array![0.5];
        let times: Vec<f64> = (1..=30).map(|k| 0.15 * k as f64).collect();
        let curves = predict_transitions(&params, &x.view(), &times).unwrap();
        for w in curves.pfs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for w in curves.survival.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        for w in curves.cif_prog.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for w in curves.cif_death.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        for k in 0..times.len() {
            assert!(curves.survival[k] >= curves.pfs[k]);
        }
    }

    #[test]
    fn predictions_match_simulated_trajectories() {
        let theta = 2.0;
        let params = linear_params(PHI, theta, [&[0.0], &[0.0], &[0.0]]);
        let x = ndarray::array![0.0];
        let times = [0.4, 0.9, 1.6, 2.5];
        let curves = predict_transitions(&params, &x.view(), &times).unwrap();
        let spec = SimSpec {
            n: 100_000,
            p: 1,
            rho: 0.0,
            kind: SimKind::IllnessDeath {
                betas: [vec![0.0], vec![0.0], vec![0.0]],
                phi: PHI,
                theta,
            },
            censoring: Censoring::None,
        };
        let SimResult::IllnessDeath(mc) = simulate(&spec, 21).unwrap() else {
            unreachable!()
        };
        let n = mc.n() as f64;
        for (k, &t) in times.iter().enumerate() {
            let mut pfs = 0.0;
            let mut prog = 0.0;
            let mut surv = 0.0;
            for r in mc.records() {
                pfs += f64::from(r.y1 > t);
                prog += f64::from(r.d1 && r.y1 <= t);
                surv += f64::from(r.y2 > t);
            }
            for (analytic, hits) in [
                (curves.pfs[k], pfs),
                (curves.cif_prog[k], prog),
                (curves.survival[k], surv),
            ] {
                let rate = hits / n;
                let se = (rate * (1.0 - rate) / n).sqrt();
                assert!(
                    (analytic - rate).abs() < 3.0 * se,
                    "t={t}: analytic {analytic} vs simulated {rate} (se {se:e})"
                );
            }
        }
    }

    #[test]
    fn prediction_grids_are_validated() {
        let params = unit_params(1);
        let x = ndarray::array![0.0];
        assert!(predict_transitions(&params, &x.view(), &[]).is_err());
        assert!(predict_transitions(&params, &x.view(), &[0.5, 0.5]).is_err());
        assert!(predict_transitions(&params, &x.view(), &[-0.5, 0.5]).is_err());
    }

    #[test]
    fn risk_sweeps_move_one_covariate_only() {
        let params = linear_params(PHI, 1.0, [&[0.5, -0.2], &[0.1, 0.3], &[-0.4, 0.2]]);
        let base = ndarray::array![1.0, 2.0];
        let values = [-1.0, 0.0, 1.0];
        let rows = risk_sweep(&params, &base.view(), 1, &values).unwrap();
        for (row, v) in rows.iter().zip(values) {
            assert!((row[0] - (0.5 - 0.2 * v)).abs() < 1e-12);
            assert!((row[1] - (0.1 + 0.3 * v)).abs() < 1e-12);
            assert!((row[2] - (-0.4 + 0.2 * v)).abs() < 1e-12);
        }
        assert!(risk_sweep(&params, &base.view(), 2, &values).is_err());
    }

    #[test]
    fn the_subdistribution_power_relation_hits_hand_values() {
        let baseline = StepFunction::new(vec![1.0, 2.0], vec![0.3, 0.5], 0.0).unwrap();
        let model = CifModel::new(
            vec![baseline],
            ndarray::array![2f64.ln()],
        )
        .unwrap();
        // beta = 0 direction: x = 0 leaves the baseline untouched
        let f_base = cif_predict(&model, &ndarray::array![0.0].view(), 0, 1.5).unwrap();
        assert!((f_base - 0.3).abs() < 1e-15);
        // exp(x beta) = 2 at F0 = 0.5: 1 - 0.25
        let f_double = cif_predict(&model, &ndarray::array![1.0].view(), 0, 2.5).unwrap();
        assert_eq!(f_double, 0.75);
        assert!(cif_predict(&model, &ndarray::array![1.0].view(), 1, 1.0).is_err());
        assert!(cif_predict(&model, &ndarray::array![1.0, 2.0].view(), 0, 1.0).is_err());
    }

    #[test]
    fn cif_curves_stay_monotone_within_the_unit_interval() {
        let baseline = StepFunction::new(
            vec![0.5, 1.0, 2.0, 4.0],
            vec![0.1, 0.35, 0.6, 0.8],
            0.0,
        )
        .unwrap();
        let model = CifModel::new(vec![baseline], ndarray::array![0.7, -0.4]).unwrap();
        for x in [ndarray::array![0.0, 0.0], ndarray::array![1.5, -1.0]] {
            let mut prev = 0.0;
            for k in 0..=40 {
                let t = 0.12 * k as f64;
                let f = cif_predict(&model, &x.view(), 0, t).unwrap();
                assert!((0.0..1.0).contains(&f));
                assert!(f >= prev - 1e-12);
                prev = f;
            }
        }
    }

    #[test]
    fn degenerate_cif_baselines_are_rejected() {
        let decreasing = StepFunction::new(vec![1.0, 2.0], vec![0.5, 0.3], 0.0).unwrap();
        assert!(CifModel::new(vec![decreasing], ndarray::array![0.0]).is_err());
        let saturated = StepFunction::new(vec![1.0], vec![1.0], 0.0).unwrap();
        assert!(CifModel::new(vec![saturated], ndarray::array![0.0]).is_err());
        assert!(CifModel::new(vec![], ndarray::array![0.0]).is_err());
    }

    #[test]
    fn parameter_validation_rejects_nonpositive_values() {
        let mut params = unit_params(1);
        params.phi[1][0] = 0.0;
        assert!(params.validate().is_err());
        let mut params = unit_params(1);
        params.phi[2][1] = f64::NAN;
        assert!(params.validate().is_err());
        let mut params = unit_params(1);
        params.theta = -1.0;
        assert!(params.validate().is_err());
        let mut params = unit_params(2);
        params.h[1] = RiskFunction::Linear {
            coefficients: ndarray::array![0.1],
        };
        assert!(params.validate().is_err());
    }

    #[test]
    fn fits_serialize_to_json() {
        let ds = sim_linear(100, 1.0, test_betas(), 0.3, 31);
        let fit = fit_scr(
            &ds,
            &ScrMode::Dnn { hidden: vec![3] },
            &ScrOptions {
                epochs: 15,
                lr: 0.1,
                ..Default::default()
            },
        )
        .unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        let back: ScrFit = serde_json::from_str(&json).unwrap();
        assert_eq!(fit, back);
    }
}
