//! Penalized Cox solver: monotone accelerated proximal gradient on
//! (1/n) * negative log partial likelihood + eta * Pen(beta), regularization
//! paths with warm starts, and event-stratified cross-validation of eta.
//!
//! The likelihood term is averaged over subjects so that eta is commensurate
//! with coefficient magnitudes; this is what makes the SCAD knots (at eta
//! and alpha*eta on the coefficient scale) meaningful and matches the usual
//! convention of path solvers. Reported neg_log_pl values stay on the sum
//! scale used everywhere else.

use crate::coxcore::{CoxFit, PartialLikelihood};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::penalties::{
    self, scad_lla_weights, PenaltyKind, PenaltySpec,
};
use crate::util::stream_rng;
use ndarray::{Array1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathOptions {
    pub n_etas: usize,
    pub eta_min_ratio: f64,
    /// Convergence: max absolute coefficient change of a proximal step.
    pub tol: f64,
    pub max_iter: usize,
    /// Outer local-linear-approximation rounds for SCAD.
    pub scad_lla_steps: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            n_etas: 100,
            eta_min_ratio: 0.01,
            tol: 1e-7,
            max_iter: 5000,
            scad_lla_steps: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathFit {
    /// Strictly decreasing grid.
    pub etas: Vec<f64>,
    /// One coefficient vector per grid point.
    pub betas: Vec<Vec<f64>>,
    /// Nonzero counts per grid point.
    pub dfs: Vec<usize>,
    pub cv_scores: Option<Vec<f64>>,
    pub selected_eta: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PathFit {
    pub fn selected_beta(&self) -> Option<&[f64]> {
        let eta = self.selected_eta?;
        let idx = self.etas.iter().position(|e| *e == eta)?;
        Some(&self.betas[idx])
    }
}

struct SolveOutcome {
    beta: Array1<f64>,
    iterations: usize,
    converged: bool,
    final_change: f64,
    /// Objective value after every accepted iterate (monotone by
    /// construction of the monotone FISTA variant).
    trace: Vec<f64>,
}

/// Monotone FISTA with backtracking on the smoothness constant. The
/// objective trace is non-increasing because each iterate keeps the previous
/// point whenever the accelerated proximal step fails to improve.
fn mfista(
    pl: &PartialLikelihood,
    x: &ArrayView2<f64>,
    spec: &PenaltySpec,
    beta0: Array1<f64>,
    opts: &PathOptions,
) -> Result<SolveOutcome> {
    let n = pl.n() as f64;
    let smooth = |b: &Array1<f64>| -> Result<f64> { Ok(pl.value(&x.dot(b))? / n) };
    let cost = |b: &Array1<f64>| {
        penalties::penalty_cost_prevalidated(spec, b.as_slice().expect("contiguous"))
    };

    let mut x_cur = beta0;
    let mut f_cur = smooth(&x_cur)? + cost(&x_cur);
    let mut y = x_cur.clone();
    let mut t = 1.0f64;
    let mut lip = 1.0;
    let mut trace = vec![f_cur];
    let mut converged = false;
    let mut iterations = 0;
    let mut final_change = f64::INFINITY;

    for _ in 0..opts.max_iter {
        let (fy_sum, gy_sum) = pl.value_and_gradient(x, &y)?;
        let fy = fy_sum / n;
        let gy = gy_sum.mapv(|g| g / n);

        let (z, fz) = loop {
            let step = 1.0 / lip;
            let target: Vec<f64> = y
                .iter()
                .zip(gy.iter())
                .map(|(yi, gi)| yi - step * gi)
                .collect();
            let z = Array1::from(penalties::prox_prevalidated(spec, &target, step)?);
            let fz = smooth(&z)?;
            let diff = &z - &y;
            let quad = fy + gy.dot(&diff) + 0.5 * lip * diff.dot(&diff);
            if fz <= quad + 1e-12 {
                break (z, fz);
            }
            lip *= 2.0;
            if lip > 1e15 {
                return Err(Error::numerical(
                    "proximal-gradient backtracking failed to find a valid step",
                ));
            }
        };

        let f_z = fz + cost(&z);
        final_change = z
            .iter()
            .zip(x_cur.iter())
            .fold(0.0f64, |a, (zi, xi)| a.max((zi - xi).abs()));

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let (x_next, f_next) = if f_z <= f_cur {
            (z.clone(), f_z)
        } else {
            (x_cur.clone(), f_cur)
        };
        y = &x_next
            + &((&z - &x_next).mapv(|v| v * (t / t_next)))
            + &((&x_next - &x_cur).mapv(|v| v * ((t - 1.0) / t_next)));
        x_cur = x_next;
        f_cur = f_next;
        t = t_next;
        trace.push(f_cur);
        iterations += 1;
        if final_change <= opts.tol {
            converged = true;
            break;
        }
    }

    Ok(SolveOutcome {
        beta: x_cur,
        iterations,
        converged,
        final_change,
        trace,
    })
}

/// One penalized solve; SCAD runs as lasso followed by re-weighted lasso
/// rounds with local-linear-approximation weights.
fn solve_one(
    pl: &PartialLikelihood,
    x: &ArrayView2<f64>,
    spec: &PenaltySpec,
    beta0: Array1<f64>,
    opts: &PathOptions,
) -> Result<SolveOutcome> {
    if spec.kind != PenaltyKind::Scad {
        return mfista(pl, x, spec, beta0, opts);
    }
    let alpha = spec.scad_alpha();
    let lasso = PenaltySpec::new(PenaltyKind::Lasso, spec.eta);
    let mut out = mfista(pl, x, &lasso, beta0, opts)?;
    for _ in 0..opts.scad_lla_steps {
        let w = scad_lla_weights(spec.eta, alpha, out.beta.as_slice().expect("contiguous"));
        let surrogate = PenaltySpec::new(PenaltyKind::AdaptiveLasso, spec.eta).with_weights(w);
        let prev = out.beta.clone();
        out = mfista(pl, x, &surrogate, prev.clone(), opts)?;
        let moved = out
            .beta
            .iter()
            .zip(prev.iter())
            .fold(0.0f64, |a, (b, p)| a.max((b - p).abs()));
        if moved <= opts.tol {
            break;
        }
    }
    Ok(out)
}

fn ensure_solver_supported(spec: &PenaltySpec, p: usize) -> Result<()> {
    spec.validate(p)?;
    if spec.kind == PenaltyKind::FusedLasso {
        return Err(Error::unsupported(
            "the fused lasso is value-only; the path solver does not support it",
        ));
    }
    Ok(())
}

/// Smallest eta at which the sparsity-inducing penalties keep beta = 0,
/// from the subgradient condition at the origin; ridge (never sparse) uses
/// the same quantity purely as a grid anchor.
fn eta_max(spec: &PenaltySpec, grad0: &Array1<f64>) -> Result<f64> {
    let sup = grad0.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    let value = match spec.kind {
        PenaltyKind::Lasso | PenaltyKind::Scad | PenaltyKind::Ridge | PenaltyKind::FusedLasso => {
            sup
        }
        PenaltyKind::ElasticNet | PenaltyKind::KernelElasticNet => sup / spec.alpha.unwrap(),
        PenaltyKind::AdaptiveLasso => {
            let w = spec.weights.as_ref().expect("validated");
            let mut m = 0.0f64;
            for (g, &wj) in grad0.iter().zip(w) {
                if wj > 0.0 {
                    m = m.max(g.abs() / wj);
                }
            }
            m
        }
        PenaltyKind::GroupLasso => {
            let groups = spec.groups.as_ref().expect("validated");
            groups
                .iter()
                .map(|g| g.iter().map(|&j| grad0[j] * grad0[j]).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max)
        }
    };
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::numerical(
            "gradient at the origin is flat; cannot anchor the eta grid",
        ));
    }
    Ok(value)
}

fn eta_grid(top: f64, opts: &PathOptions) -> Vec<f64> {
    let k = opts.n_etas.max(1);
    if k == 1 {
        return vec![top];
    }
    let log_top = top.ln();
    let log_bot = (top * opts.eta_min_ratio).ln();
    (0..k)
        .map(|i| (log_top + (log_bot - log_top) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn standardization_warning(ds: &SurvivalDataset) -> Option<String> {
    if ds.is_standardized() {
        None
    } else {
        Some(
            "dataset is not standardized; penalized coefficients are scale-dependent"
                .to_string(),
        )
    }
}

fn build_cox_fit(
    ds: &SurvivalDataset,
    pl: &PartialLikelihood,
    out: SolveOutcome,
    mut warnings: Vec<String>,
) -> Result<CoxFit> {
    if !out.converged {
        warnings.push(format!(
            "solver stopped before reaching tolerance (last step change {:.3e})",
            out.final_change
        ));
    }
    let eta_lin = ds.x().dot(&out.beta);
    let neg_log_pl = pl.value(&eta_lin)?;
    let baseline_chf = pl.breslow_baseline(ds.times(), &eta_lin)?;
    Ok(CoxFit {
        beta: out.beta.to_vec(),
        neg_log_pl,
        score_norm: out.final_change,
        iterations: out.iterations,
        converged: out.converged,
        baseline_chf,
        warnings,
    })
}

/// Penalized fit at a single eta. score_norm reports the final proximal-step
/// change (the convergence criterion), not a score norm: the penalized
/// stationarity condition is a subgradient inclusion.
pub fn fit_penalized(ds: &SurvivalDataset, spec: &PenaltySpec, opts: &PathOptions) -> Result<CoxFit> {
    let (fit, _) = fit_penalized_traced(ds, spec, opts)?;
    Ok(fit)
}

/// As fit_penalized, additionally returning the objective value after each
/// solver iteration (for SCAD: of the final re-weighted surrogate). The
/// trace is monotone non-increasing.
pub fn fit_penalized_traced(
    ds: &SurvivalDataset,
    spec: &PenaltySpec,
    opts: &PathOptions,
) -> Result<(CoxFit, Vec<f64>)> {
    ensure_solver_supported(spec, ds.p())?;
    let pl = PartialLikelihood::for_dataset(ds)?;
    let out = solve_one(&pl, &ds.x().view(), spec, Array1::zeros(ds.p()), opts)?;
    let trace = out.trace.clone();
    let warnings = standardization_warning(ds).into_iter().collect();
    Ok((build_cox_fit(ds, &pl, out, warnings)?, trace))
}

fn path_betas(
    pl: &PartialLikelihood,
    x: &ArrayView2<f64>,
    spec: &PenaltySpec,
    etas: &[f64],
    opts: &PathOptions,
) -> Result<(Vec<Array1<f64>>, usize)> {
    let mut betas = Vec::with_capacity(etas.len());
    let mut warm = Array1::zeros(x.ncols());
    let mut unconverged = 0;
    for &eta in etas {
        let point = spec.clone().with_eta(eta);
        let out = solve_one(pl, x, &point, warm, opts)?;
        if !out.converged {
            unconverged += 1;
        }
        warm = out.beta.clone();
        betas.push(out.beta);
    }
    Ok((betas, unconverged))
}

/// Regularization path over a log-spaced eta grid with warm starts.
pub fn fit_path(ds: &SurvivalDataset, spec: &PenaltySpec, opts: &PathOptions) -> Result<PathFit> {
    ensure_solver_supported(spec, ds.p())?;
    if spec.kind == PenaltyKind::AdaptiveLasso && spec.weights.is_none() {
        return Err(Error::validation(
            "adaptive lasso path needs weights; supply them or use cross_validate, \
             which derives defaults from a ridge fit",
        ));
    }
    let pl = PartialLikelihood::for_dataset(ds)?;
    let x = ds.x().view();
    let (_, grad0) = pl.value_and_gradient(&x, &Array1::zeros(ds.p()))?;
    let grad0 = grad0.mapv(|g| g / pl.n() as f64);
    let etas = eta_grid(eta_max(spec, &grad0)?, opts);
    let (betas, unconverged) = path_betas(&pl, &x, spec, &etas, opts)?;
    let mut warnings: Vec<String> = standardization_warning(ds).into_iter().collect();
    if unconverged > 0 {
        warnings.push(format!("{unconverged} path points stopped before tolerance"));
    }
    Ok(PathFit {
        dfs: betas.iter().map(|b| b.iter().filter(|v| **v != 0.0).count()).collect(),
        betas: betas.into_iter().map(|b| b.to_vec()).collect(),
        etas,
        cv_scores: None,
        selected_eta: None,
        warnings,
    })
}

/// Event-stratified fold assignment. Requested fold counts larger than the
/// event count are reduced so no fold is event-free.
pub(crate) fn event_stratified_folds(
    events: &[bool],
    k: usize,
    seed: u64,
) -> Result<(Vec<usize>, usize, Vec<String>)> {
    let n = events.len();
    let n_events = events.iter().filter(|&&e| e).count();
    let mut warnings = Vec::new();
    let mut k_eff = k.min(n);
    if k_eff > n_events {
        k_eff = n_events;
        warnings.push(format!(
            "reduced folds from {k} to {k_eff} so every fold holds an event"
        ));
    }
    if k_eff < 2 {
        return Err(Error::validation(
            "cross-validation needs at least 2 folds with events",
        ));
    }
    let mut event_idx: Vec<usize> = (0..n).filter(|&i| events[i]).collect();
    let mut censored_idx: Vec<usize> = (0..n).filter(|&i| !events[i]).collect();
    event_idx.shuffle(&mut stream_rng(seed, 1));
    censored_idx.shuffle(&mut stream_rng(seed, 2));
    let mut assign = vec![0usize; n];
    for (i, &idx) in event_idx.iter().enumerate() {
        assign[idx] = i % k_eff;
    }
    for (i, &idx) in censored_idx.iter().enumerate() {
        assign[idx] = i % k_eff;
    }
    Ok((assign, k_eff, warnings))
}

/// Default adaptive-lasso weights 1 / |ridge beta|, with the ridge eta
/// chosen by cross-validation on the same folds.
pub fn adaptive_default_weights(
    ds: &SurvivalDataset,
    k: usize,
    seed: u64,
    opts: &PathOptions,
) -> Result<Vec<f64>> {
    let ridge = PenaltySpec::new(PenaltyKind::Ridge, 1.0);
    let cv = cross_validate(ds, &ridge, k, seed, opts)?;
    let beta = cv
        .selected_beta()
        .ok_or_else(|| Error::numerical("ridge cross-validation selected no eta"))?;
    Ok(beta.iter().map(|b| 1.0 / b.abs().max(1e-8)).collect())
}

/// Cross-validated path. The criterion is the Verweij-van Houwelingen
/// partial-likelihood deviance: sum over folds of l_full(beta_train) -
/// l_train(beta_train), minimized over the grid; ties take the larger eta.
pub fn cross_validate(
    ds: &SurvivalDataset,
    spec: &PenaltySpec,
    k: usize,
    seed: u64,
    opts: &PathOptions,
) -> Result<PathFit> {
    let spec = if spec.kind == PenaltyKind::AdaptiveLasso && spec.weights.is_none() {
        spec.clone()
            .with_weights(adaptive_default_weights(ds, k, seed, opts)?)
    } else {
        spec.clone()
    };
    ensure_solver_supported(&spec, ds.p())?;

    let pl_full = PartialLikelihood::for_dataset(ds)?;
    let x_full = ds.x().view();
    let (_, grad0) = pl_full.value_and_gradient(&x_full, &Array1::zeros(ds.p()))?;
    let grad0 = grad0.mapv(|g| g / pl_full.n() as f64);
    let etas = eta_grid(eta_max(&spec, &grad0)?, opts);

    let (assignment, k_eff, mut warnings) = event_stratified_folds(ds.events(), k, seed)?;

    let fold_scores: Vec<Vec<f64>> = (0..k_eff)
        .into_par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let train_rows: Vec<usize> =
                (0..ds.n()).filter(|&i| assignment[i] != fold).collect();
            let train = ds.subset(&train_rows)?;
            let pl_train = PartialLikelihood::for_dataset(&train)?;
            let (betas, _) = path_betas(&pl_train, &train.x().view(), &spec, &etas, opts)?;
            let mut scores = Vec::with_capacity(etas.len());
            for beta in &betas {
                let l_full = pl_full.value(&ds.x().dot(beta))?;
                let l_train = pl_train.value(&train.x().dot(beta))?;
                scores.push(l_full - l_train);
            }
            Ok(scores)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cv_scores = vec![0.0; etas.len()];
    for fold in &fold_scores {
        for (s, f) in cv_scores.iter_mut().zip(fold) {
            *s += f;
        }
    }

    let (betas, unconverged) = path_betas(&pl_full, &x_full, &spec, &etas, opts)?;
    if unconverged > 0 {
        warnings.push(format!("{unconverged} path points stopped before tolerance"));
    }
    if let Some(w) = standardization_warning(ds) {
        warnings.push(w);
    }

    let mut best = 0;
    for (i, s) in cv_scores.iter().enumerate() {
        if *s < cv_scores[best] {
            best = i;
        }
    }
    Ok(PathFit {
        dfs: betas.iter().map(|b| b.iter().filter(|v| **v != 0.0).count()).collect(),
        betas: betas.into_iter().map(|b| b.to_vec()).collect(),
        selected_eta: Some(etas[best]),
        etas,
        cv_scores: Some(cv_scores),
        warnings,
    })
}

/// Sup-norm of the lasso stationarity violation at beta, on the mean-scale
/// gradient: active coordinates must satisfy grad_j = -eta * w_j * sign, and
/// inactive ones |grad_j| <= eta * w_j.
pub fn lasso_kkt_residual(
    ds: &SurvivalDataset,
    beta: &[f64],
    eta: f64,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let pl = PartialLikelihood::for_dataset(ds)?;
    let b = Array1::from(beta.to_vec());
    let (_, grad) = pl.value_and_gradient(&ds.x().view(), &b)?;
    let n = pl.n() as f64;
    let mut worst = 0.0f64;
    for j in 0..beta.len() {
        let w = weights.map_or(1.0, |w| w[j]);
        let g = grad[j] / n;
        let violation = if beta[j] != 0.0 {
            (g + eta * w * beta[j].signum()).abs()
        } else {
            (g.abs() - eta * w).max(0.0)
        };
        worst = worst.max(violation);
    }
    Ok(worst)
}

/// Tidy CSV for plotting: one row per (eta index, coefficient) pair.
pub fn write_path_csv(path: impl AsRef<Path>, fit: &PathFit) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    writer.write_record(["eta", "j", "beta"])?;
    for (eta, beta) in fit.etas.iter().zip(&fit.betas) {
        for (j, b) in beta.iter().enumerate() {
            writer.write_record([format!("{eta}"), format!("{j}"), format!("{b}")])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset_from_rows;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Exponential-baseline proportional hazards generator used by several
    /// solver tests.
    fn simulate_cox(
        seed: u64,
        n: usize,
        p: usize,
        beta: &[f64],
        censor_rate: f64,
    ) -> SurvivalDataset {
        let mut rng = stream_rng(seed, 0);
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            let lp: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
            let u: f64 = rng.gen_range(1e-12..1.0);
            let t = -u.ln() / lp.exp();
            let c: f64 = {
                let v: f64 = rng.gen_range(1e-12..1.0);
                -v.ln() / censor_rate
            };
            times.push(t.min(c));
            events.push(t <= c);
            rows.push(row);
        }
        if !events.iter().any(|&e| e) {
            events[0] = true;
        }
        dataset_from_rows(&times, &events, &rows).unwrap()
    }

    #[test]
    fn lasso_above_eta_max_is_exactly_zero() {
        let ds = simulate_cox(1, 40, 3, &[1.0, -0.5, 0.0], 0.2);
        let pl = PartialLikelihood::for_dataset(&ds).unwrap();
        let (_, g0) = pl
            .value_and_gradient(&ds.x().view(), &Array1::zeros(3))
            .unwrap();
        let top = g0.iter().fold(0.0f64, |a, g| a.max(g.abs())) / ds.n() as f64;
        let spec = PenaltySpec::new(PenaltyKind::Lasso, top * 1.01);
        let fit = fit_penalized(&ds, &spec, &PathOptions::default()).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(fit.converged);
    }

    #[test]
    fn ridge_matches_golden_section_oracle() {
        let ds = simulate_cox(2, 30, 1, &[0.8], 0.3);
        let eta = 0.2;
        let spec = PenaltySpec::new(PenaltyKind::Ridge, eta);
        let fit = fit_penalized(&ds, &spec, &PathOptions::default()).unwrap();

        let pl = PartialLikelihood::for_dataset(&ds).unwrap();
        let obj = |b: f64| {
            let beta = Array1::from(vec![b]);
            pl.value(&ds.x().dot(&beta)).unwrap() / ds.n() as f64 + eta * b * b
        };
        let golden = 0.5 * (5.0f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        let (mut m1, mut m2) = (hi - golden * (hi - lo), lo + golden * (hi - lo));
        let (mut f1, mut f2) = (obj(m1), obj(m2));
        for _ in 0..200 {
            if f1 < f2 {
                hi = m2;
                m2 = m1;
                f2 = f1;
                m1 = hi - golden * (hi - lo);
                f1 = obj(m1);
            } else {
                lo = m1;
                m1 = m2;
                f1 = f2;
                m2 = lo + golden * (hi - lo);
                f2 = obj(m2);
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!(
            (fit.beta[0] - oracle).abs() < 1e-5,
            "solver {} vs golden-section {}",
            fit.beta[0],
            oracle
        );
    }

    #[test]
    fn path_grid_shape_and_sparsity_endpoints() {
        let ds = simulate_cox(3, 50, 4, &[1.0, 0.0, -1.0, 0.0], 0.2);
        let opts = PathOptions {
            n_etas: 25,
            ..PathOptions::default()
        };
        let lasso = fit_path(&ds, &PenaltySpec::new(PenaltyKind::Lasso, 1.0), &opts).unwrap();
        assert_eq!(lasso.etas.len(), 25);
        assert!(lasso.etas.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(lasso.dfs[0], 0);
        assert!((lasso.etas[0] * opts.eta_min_ratio - *lasso.etas.last().unwrap()).abs() < 1e-12);

        let ridge = fit_path(&ds, &PenaltySpec::new(PenaltyKind::Ridge, 1.0), &opts).unwrap();
        assert!(ridge.dfs.iter().all(|&d| d == 4));
    }

    #[test]
    fn warm_start_matches_cold_restart() {
        let ds = simulate_cox(4, 60, 5, &[1.0, -1.0, 0.5, 0.0, 0.0], 0.25);
        let opts = PathOptions {
            n_etas: 20,
            ..PathOptions::default()
        };
        let spec = PenaltySpec::new(PenaltyKind::Lasso, 1.0);
        let path = fit_path(&ds, &spec, &opts).unwrap();
        let pl = PartialLikelihood::for_dataset(&ds).unwrap();
        let n = ds.n() as f64;
        for &idx in &[5usize, 12] {
            let eta = path.etas[idx];
            let cold = fit_penalized(&ds, &spec.clone().with_eta(eta), &opts).unwrap();
            let obj = |b: &[f64]| {
                let beta = Array1::from(b.to_vec());
                pl.value(&ds.x().dot(&beta)).unwrap() / n
                    + eta * b.iter().map(|v| v.abs()).sum::<f64>()
            };
            let warm_obj = obj(&path.betas[idx]);
            let cold_obj = obj(&cold.beta);
            assert!(
                (warm_obj - cold_obj).abs() < 1e-6,
                "warm {warm_obj} cold {cold_obj} at eta {eta}"
            );
        }
    }

    #[test]
    fn lasso_kkt_holds_along_path() {
        let ds = simulate_cox(5, 70, 6, &[1.0, -0.8, 0.0, 0.0, 0.6, 0.0], 0.25).standardize().unwrap();
        let opts = PathOptions {
            n_etas: 15,
            ..PathOptions::default()
        };
        let path = fit_path(&ds, &PenaltySpec::new(PenaltyKind::Lasso, 1.0), &opts).unwrap();
        for (idx, beta) in path.betas.iter().enumerate() {
            let r = lasso_kkt_residual(&ds, beta, path.etas[idx], None).unwrap();
            assert!(r <= 1e-5, "kkt residual {r} at index {idx}");
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let ds = simulate_cox(6, 50, 4, &[1.0, -0.5, 0.3, 0.0], 0.3);
        for spec in [
            PenaltySpec::new(PenaltyKind::Lasso, 0.05),
            PenaltySpec::new(PenaltyKind::Ridge, 0.05),
            PenaltySpec::new(PenaltyKind::ElasticNet, 0.05).with_alpha(0.5),
        ] {
            let (_, trace) = fit_penalized_traced(&ds, &spec, &PathOptions::default()).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn elastic_net_near_one_matches_lasso() {
        let ds = simulate_cox(7, 60, 5, &[1.0, -1.0, 0.0, 0.5, 0.0], 0.25);
        let eta = 0.08;
        let lasso = fit_penalized(
            &ds,
            &PenaltySpec::new(PenaltyKind::Lasso, eta),
            &PathOptions::default(),
        )
        .unwrap();
        let en = fit_penalized(
            &ds,
            &PenaltySpec::new(PenaltyKind::ElasticNet, eta).with_alpha(0.999),
            &PathOptions::default(),
        )
        .unwrap();
        for (a, b) in en.beta.iter().zip(&lasso.beta) {
            assert!((a - b).abs() < 1e-3, "en {a} lasso {b}");
        }
    }

    #[test]
    fn scad_shrinks_strong_signal_less_than_lasso() {
        let mut beta = vec![0.0; 10];
        beta[0] = 3.0;
        let ds = simulate_cox(8, 500, 10, &beta, 0.1);
        let eta = 0.3;
        let opts = PathOptions::default();
        let lasso =
            fit_penalized(&ds, &PenaltySpec::new(PenaltyKind::Lasso, eta), &opts).unwrap();
        let scad = fit_penalized(&ds, &PenaltySpec::new(PenaltyKind::Scad, eta), &opts).unwrap();
        assert!(
            (scad.beta[0] - 3.0).abs() < (lasso.beta[0] - 3.0).abs(),
            "scad {} lasso {}",
            scad.beta[0],
            lasso.beta[0]
        );
    }

    #[test]
    fn group_lasso_zeros_whole_groups() {
        let ds = simulate_cox(9, 80, 6, &[1.0, 0.8, 0.0, 0.0, 0.0, 0.0], 0.25);
        let spec = PenaltySpec::new(PenaltyKind::GroupLasso, 1.0)
            .with_groups(vec![vec![0, 1], vec![2, 3], vec![4, 5]]);
        let path = fit_path(
            &ds,
            &spec,
            &PathOptions {
                n_etas: 20,
                ..PathOptions::default()
            },
        )
        .unwrap();
        assert_eq!(path.dfs[0], 0);
        for beta in &path.betas {
            for g in [[0usize, 1], [2, 3], [4, 5]] {
                let z0 = beta[g[0]] == 0.0;
                let z1 = beta[g[1]] == 0.0;
                assert_eq!(z0, z1, "group sparsity must be all-or-none");
            }
        }
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let ds = simulate_cox(10, 50, 4, &[1.0, -1.0, 0.0, 0.0], 0.25);
        let opts = PathOptions {
            n_etas: 15,
            ..PathOptions::default()
        };
        let spec = PenaltySpec::new(PenaltyKind::Lasso, 1.0);
        let a = cross_validate(&ds, &spec, 5, 42, &opts).unwrap();
        let b = cross_validate(&ds, &spec, 5, 42, &opts).unwrap();
        assert_eq!(a.selected_eta.unwrap().to_bits(), b.selected_eta.unwrap().to_bits());
        let (sa, sb) = (a.cv_scores.unwrap(), b.cv_scores.unwrap());
        for (x, y) in sa.iter().zip(&sb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn leave_one_out_returns_finite_scores() {
        let ds = simulate_cox(11, 10, 2, &[1.0, 0.0], 0.2);
        let opts = PathOptions {
            n_etas: 10,
            ..PathOptions::default()
        };
        let fit = cross_validate(&ds, &PenaltySpec::new(PenaltyKind::Lasso, 1.0), 10, 3, &opts)
            .unwrap();
        assert!(fit.cv_scores.unwrap().iter().all(|s| s.is_finite()));
        assert!(fit.selected_eta.is_some());
    }

    #[test]
    fn fold_reduction_warns_when_events_scarce() {
        let times: Vec<f64> = (1..=12).map(|i| i as f64).collect();
        let mut events = vec![false; 12];
        events[0] = true;
        events[5] = true;
        events[9] = true;
        let (assign, k_eff, warnings) = event_stratified_folds(&events, 6, 7).unwrap();
        assert_eq!(k_eff, 3);
        assert!(!warnings.is_empty());
        for fold in 0..k_eff {
            let has_event = (0..12).any(|i| assign[i] == fold && events[i]);
            assert!(has_event, "fold {fold} lacks an event");
        }
        let _ = times;
    }

    #[test]
    fn cv_selects_support_on_sparse_signal() {
        let mut beta = vec![0.0; 200];
        for j in 0..5 {
            beta[j] = 1.0;
        }
        let ds = simulate_cox(12, 100, 200, &beta, 0.15).standardize().unwrap();
        let opts = PathOptions {
            n_etas: 40,
            ..PathOptions::default()
        };
        let fit = cross_validate(&ds, &PenaltySpec::new(PenaltyKind::Lasso, 1.0), 5, 99, &opts)
            .unwrap();
        let selected = fit.selected_beta().unwrap();
        let hits = (0..5).filter(|&j| selected[j] != 0.0).count();
        assert!(hits >= 4, "recovered only {hits} of 5 true signals");
    }

    #[test]
    fn adaptive_defaults_derive_from_ridge() {
        let ds = simulate_cox(13, 60, 4, &[1.5, 0.0, -1.5, 0.0], 0.25);
        let opts = PathOptions {
            n_etas: 12,
            ..PathOptions::default()
        };
        let w = adaptive_default_weights(&ds, 4, 21, &opts).unwrap();
        // Strong coordinates get smaller weights than null ones.
        assert!(w[0] < w[1]);
        assert!(w[2] < w[3]);
        let fit = cross_validate(
            &ds,
            &PenaltySpec::new(PenaltyKind::AdaptiveLasso, 1.0),
            4,
            21,
            &opts,
        )
        .unwrap();
        assert!(fit.selected_eta.is_some());
    }

    #[test]
    fn fused_lasso_rejected_by_solver() {
        let ds = simulate_cox(14, 20, 2, &[0.5, 0.5], 0.2);
        let err = fit_penalized(
            &ds,
            &PenaltySpec::new(PenaltyKind::FusedLasso, 0.1),
            &PathOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn path_csv_is_tidy() {
        let ds = simulate_cox(15, 30, 2, &[1.0, 0.0], 0.2);
        let path = fit_path(
            &ds,
            &PenaltySpec::new(PenaltyKind::Lasso, 1.0),
            &PathOptions {
                n_etas: 5,
                ..PathOptions::default()
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("path.csv");
        write_path_csv(&file, &path).unwrap();
        let content = std::fs::read_to_string(&file).unwrap();
        let mut lines = content.lines();
        assert_eq!(lines.next().unwrap(), "eta,j,beta");
        assert_eq!(content.lines().count(), 1 + 5 * 2);
    }
}
