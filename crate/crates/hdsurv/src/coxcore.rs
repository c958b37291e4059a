//! Cox partial likelihood, its derivatives, and the unpenalized Newton
//! maximum partial likelihood estimator. This is the objective shared by the
//! penalized path solver, screening, resampling inference, boosting, and the
//! network loss.

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::nonparam::StepFunction;
use crate::util::argsort;
use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Precomputed time ordering and tied-time blocks. Risk sums use a single
/// descending pass, so every likelihood evaluation is O(n p) after the sort
/// done once at construction. Ties use the Breslow convention: tied events
/// share one risk-set denominator that includes all of them.
pub struct PartialLikelihood {
    /// Ascending time order, ties broken by lower index.
    order: Vec<usize>,
    /// (start, end) positions in `order` per distinct time, ascending, with
    /// the number of events in the block.
    blocks: Vec<(usize, usize, usize)>,
    events: Vec<bool>,
    n_events: usize,
}

impl PartialLikelihood {
    pub fn new(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.is_empty() || times.len() != events.len() {
            return Err(Error::validation(
                "times and events must be equal length and non-empty",
            ));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("times must be finite"));
        }
        let n_events = events.iter().filter(|&&e| e).count();
        if n_events == 0 {
            return Err(Error::validation("partial likelihood needs at least one event"));
        }
        let order = argsort(times);
        let mut blocks = Vec::new();
        let mut start = 0;
        while start < order.len() {
            let t = times[order[start]];
            let mut end = start;
            let mut d = 0;
            while end < order.len() && times[order[end]] == t {
                if events[order[end]] {
                    d += 1;
                }
                end += 1;
            }
            blocks.push((start, end, d));
            start = end;
        }
        Ok(PartialLikelihood {
            order,
            blocks,
            events: events.to_vec(),
            n_events,
        })
    }

    pub fn for_dataset(ds: &SurvivalDataset) -> Result<Self> {
        PartialLikelihood::new(ds.times(), ds.events())
    }

    pub fn n(&self) -> usize {
        self.order.len()
    }

    pub fn n_events(&self) -> usize {
        self.n_events
    }

    fn check_eta(&self, eta: &Array1<f64>) -> Result<()> {
        if eta.len() != self.order.len() {
            return Err(Error::validation("linear predictor length mismatch"));
        }
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("linear predictor must be finite"));
        }
        Ok(())
    }

    /// Per-block scaled risk sums S0*(t) = sum_{Y_j >= t} exp(eta_j - M),
    /// descending accumulation, returned in ascending block order together
    /// with the global shift M.
    fn scaled_risk_sums(&self, eta: &Array1<f64>) -> (Vec<f64>, f64) {
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = vec![0.0; self.blocks.len()];
        let mut running = 0.0;
        for (b, &(start, end, _)) in self.blocks.iter().enumerate().rev() {
            for pos in start..end {
                running += (eta[self.order[pos]] - shift).exp();
            }
            s0[b] = running;
        }
        (s0, shift)
    }

    /// Negative log partial likelihood at a given linear predictor.
    pub fn value(&self, eta: &Array1<f64>) -> Result<f64> {
        self.check_eta(eta)?;
        let (s0, shift) = self.scaled_risk_sums(eta);
        let mut value = 0.0;
        for (b, &(start, end, d)) in self.blocks.iter().enumerate() {
            if d == 0 {
                continue;
            }
            value += d as f64 * (s0[b].ln() + shift);
            for pos in start..end {
                let i = self.order[pos];
                if self.events[i] {
                    value -= eta[i];
                }
            }
        }
        Ok(value)
    }

    /// Value and the gradient with respect to the linear predictor itself:
    /// d/d eta_i = -delta_i + exp(eta_i) * H0(Y_i) with H0 the Breslow
    /// cumulative hazard. Boosting and the network loss consume this.
    pub fn value_and_eta_gradient(&self, eta: &Array1<f64>) -> Result<(f64, Array1<f64>)> {
        self.check_eta(eta)?;
        let (s0, shift) = self.scaled_risk_sums(eta);
        let mut value = 0.0;
        let mut grad = Array1::zeros(eta.len());
        let mut cum_hazard = 0.0;
        for (b, &(start, end, d)) in self.blocks.iter().enumerate() {
            if d > 0 {
                value += d as f64 * (s0[b].ln() + shift);
                cum_hazard += d as f64 / s0[b];
            }
            for pos in start..end {
                let i = self.order[pos];
                if self.events[i] {
                    value -= eta[i];
                    grad[i] -= 1.0;
                }
                grad[i] += (eta[i] - shift).exp() * cum_hazard;
            }
        }
        Ok((value, grad))
    }

    /// Value and gradient with respect to beta; O(n p).
    pub fn value_and_gradient(
        &self,
        x: &ArrayView2<f64>,
        beta: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>)> {
        let eta = x.dot(beta);
        let (value, eta_grad) = self.value_and_eta_gradient(&eta)?;
        Ok((value, x.t().dot(&eta_grad)))
    }

    /// Value, gradient, and Hessian with respect to beta; O(n p^2). The
    /// Hessian is assembled from its upper triangle and mirrored, so it is
    /// exactly symmetric.
    pub fn value_gradient_hessian(
        &self,
        x: &ArrayView2<f64>,
        beta: &Array1<f64>,
    ) -> Result<(f64, Array1<f64>, Array2<f64>)> {
        let p = x.ncols();
        let eta = x.dot(beta);
        self.check_eta(&eta)?;
        let shift = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut value = 0.0;
        let mut grad = Array1::<f64>::zeros(p);
        let mut hess = Array2::<f64>::zeros((p, p));
        let mut s0 = 0.0;
        let mut s1 = Array1::<f64>::zeros(p);
        let mut s2 = Array2::<f64>::zeros((p, p));

        for &(start, end, d) in self.blocks.iter().rev() {
            for pos in start..end {
                let i = self.order[pos];
                let w = (eta[i] - shift).exp();
                s0 += w;
                let xi = x.row(i);
                for j in 0..p {
                    let wx = w * xi[j];
                    s1[j] += wx;
                    for k in j..p {
                        s2[(j, k)] += wx * xi[k];
                    }
                }
            }
            if d == 0 {
                continue;
            }
            value += d as f64 * (s0.ln() + shift);
            let dd = d as f64;
            let sbar: Vec<f64> = (0..p).map(|j| s1[j] / s0).collect();
            for j in 0..p {
                grad[j] += dd * sbar[j];
                for k in j..p {
                    hess[(j, k)] += dd * (s2[(j, k)] / s0 - sbar[j] * sbar[k]);
                }
            }
            for pos in start..end {
                let i = self.order[pos];
                if self.events[i] {
                    value -= eta[i];
                    let xi = x.row(i);
                    for j in 0..p {
                        grad[j] -= xi[j];
                    }
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                hess[(j, k)] = hess[(k, j)];
            }
        }
        Ok((value, grad, hess))
    }

    /// Breslow baseline cumulative hazard at the given linear predictor:
    /// steps of d_t / sum_{R(t)} exp(eta_j) at each distinct event time.
    pub fn breslow_baseline(&self, times: &[f64], eta: &Array1<f64>) -> Result<StepFunction> {
        self.check_eta(eta)?;
        let (s0, shift) = self.scaled_risk_sums(eta);
        let mut knots = Vec::new();
        let mut values = Vec::new();
        let mut h = 0.0;
        for (b, &(start, _, d)) in self.blocks.iter().enumerate() {
            if d == 0 {
                continue;
            }
            h += d as f64 * (-shift).exp() / s0[b];
            knots.push(times[self.order[start]]);
            values.push(h);
        }
        StepFunction::new(knots, values, 0.0)
    }
}

pub fn neg_log_partial_likelihood(ds: &SurvivalDataset, beta: &Array1<f64>) -> Result<f64> {
    if beta.len() != ds.p() {
        return Err(Error::validation("beta length mismatch"));
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("beta must be finite"));
    }
    let pl = PartialLikelihood::for_dataset(ds)?;
    pl.value(&ds.x().dot(beta))
}

pub fn score_and_hessian(
    ds: &SurvivalDataset,
    beta: &Array1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    if beta.len() != ds.p() {
        return Err(Error::validation("beta length mismatch"));
    }
    let pl = PartialLikelihood::for_dataset(ds)?;
    let (_, g, h) = pl.value_gradient_hessian(&ds.x().view(), beta)?;
    Ok((g, h))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoxFit {
    pub beta: Vec<f64>,
    pub neg_log_pl: f64,
    pub score_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub baseline_chf: StepFunction,
    pub warnings: Vec<String>,
}

/// Coefficient magnitude beyond which monotone-likelihood separation is
/// flagged: a log hazard ratio of 10 per unit is outside any plausibly
/// identified regime.
const SEPARATION_BOUND: f64 = 10.0;

/// Unpenalized Newton MPLE with step-halving.
pub fn fit_mple(ds: &SurvivalDataset, opts: &CoxOptions) -> Result<CoxFit> {
    let pl = PartialLikelihood::for_dataset(ds)?;
    if ds.p() >= pl.n_events() {
        return Err(Error::validation(format!(
            "{} covariates with only {} events over-parameterizes the partial \
             likelihood; use the penalized path solver instead",
            ds.p(),
            pl.n_events()
        )));
    }
    let x = ds.x().view();
    let mut beta = Array1::<f64>::zeros(ds.p());
    let (mut value, mut grad, mut hess) = pl.value_gradient_hessian(&x, &beta)?;
    let mut iterations = 0;
    let mut converged = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) <= opts.tol;

    while !converged && iterations < opts.max_iter {
        let direction = crate::linalg::solve_spd(&hess, &grad.mapv(|g| -g))?;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let cand = &beta + &direction.mapv(|d| d * step);
            let cand_value = pl.value(&x.dot(&cand))?;
            if cand_value < value {
                beta = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        let (v, g, h) = pl.value_gradient_hessian(&x, &beta)?;
        value = v;
        grad = g;
        hess = h;
        converged = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) <= opts.tol;
    }

    let score_norm = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let mut warnings = Vec::new();
    if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
        warnings.push(
            "coefficient magnitude exceeds 10; monotone likelihood (separation) suspected"
                .to_string(),
        );
    }
    let baseline_chf = pl.breslow_baseline(ds.times(), &ds.x().dot(&beta))?;
    Ok(CoxFit {
        beta: beta.to_vec(),
        neg_log_pl: value,
        score_norm,
        iterations,
        converged,
        baseline_chf,
        warnings,
    })
}
