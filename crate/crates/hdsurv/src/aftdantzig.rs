//! Accelerated failure time estimation on the log time scale: Buckley-James
//! imputation of censored outcomes through the residual Kaplan-Meier tail,
//! and the Dantzig selector (the L1-minimal coefficient vector subject to a
//! sup-norm bound on the covariate-residual correlations), iterated to a
//! fixed point for censored data.

use crate::coxnet::event_stratified_folds;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linmodel;
use crate::lp::{self, Constraint, LpOutcome, LpProblem};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy)]
pub struct DantzigOptions {
    /// Sup-norm change of beta below which the outer loop stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DantzigOptions {
    fn default() -> Self {
        Self { tol: 1e-5, max_iter: 50 }
    }
}

/// Fitted Dantzig selector. `imputed_outcomes` holds the Buckley-James
/// outcomes that entered the final program, so the selector constraint
/// |X' P_n (T* - X beta)|_inf <= eta_q holds for the stored fields up to
/// solver tolerance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DantzigFit {
    pub beta: Vec<f64>,
    pub eta_q: f64,
    pub iterations: usize,
    pub converged: bool,
    pub imputed_outcomes: Vec<f64>,
}

/// Buckley-James imputation at `beta`: events keep log Y_i; a censored
/// observation gets its conditional expectation given the event exceeds the
/// observed residual, under the Kaplan-Meier law of the residuals. When the
/// largest residual is censored its mass is treated as an event so the tail
/// integral stays finite.
pub fn buckley_james_impute(ds: &SurvivalDataset, beta: &[f64]) -> Result<Vec<f64>> {
    let n = ds.n();
    if beta.len() != ds.p() {
        return Err(Error::validation("coefficient length does not match covariates"));
    }
    if ds.event_count() == 0 {
        return Err(Error::validation(
            "all observations are censored; the residual distribution is unidentified",
        ));
    }
    if ds.times().iter().any(|&t| t <= 0.0) {
        return Err(Error::validation(
            "log-scale survival models require strictly positive times",
        ));
    }
    let beta = Array1::from(beta.to_vec());
    let log_y: Vec<f64> = ds.times().iter().map(|t| t.ln()).collect();
    let resid: Vec<f64> = (0..n).map(|i| log_y[i] - ds.covariate_row(i).dot(&beta)).collect();

    let max_resid = resid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let km_event: Vec<bool> = (0..n)
        .map(|i| ds.events()[i] || resid[i] == max_resid)
        .collect();

    // Kaplan-Meier masses at distinct event residuals, ascending.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].partial_cmp(&resid[b]).unwrap().then(a.cmp(&b)));
    let mut knots: Vec<f64> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    let mut surv = 1.0;
    let mut pos = 0;
    while pos < n {
        let v = resid[order[pos]];
        let mut d = 0usize;
        let at_risk = n - pos;
        let mut end = pos;
        while end < n && resid[order[end]] == v {
            if km_event[order[end]] {
                d += 1;
            }
            end += 1;
        }
        if d > 0 {
            let mass = surv * d as f64 / at_risk as f64;
            knots.push(v);
            masses.push(mass);
            surv -= mass;
        }
        pos = end;
    }

    let mut tail_value: Vec<f64> = vec![0.0; knots.len() + 1];
    let mut tail_mass: Vec<f64> = vec![0.0; knots.len() + 1];
    for k in (0..knots.len()).rev() {
        tail_value[k] = tail_value[k + 1] + masses[k] * knots[k];
        tail_mass[k] = tail_mass[k + 1] + masses[k];
    }

    let imputed = (0..n)
        .map(|i| {
            if ds.events()[i] {
                return log_y[i];
            }
            // First knot strictly above this residual.
            let k = knots.partition_point(|&v| v <= resid[i]);
            if tail_mass[k] <= 0.0 {
                // No mass above: the residual is at the (corrected) maximum.
                return log_y[i];
            }
            log_y[i] - resid[i] + tail_value[k] / tail_mass[k]
        })
        .collect();
    Ok(imputed)
}

/// L1-minimal beta subject to |X'(y - X beta)|_inf <= eta_q.
pub fn dantzig_linear(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    eta_q: f64,
) -> Result<Array1<f64>> {
    dantzig_weighted(x, y, eta_q, None)
}

/// Weighted variant minimizing sum_j w_j |beta_j| under the same constraint.
pub fn dantzig_weighted(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    eta_q: f64,
    weights: Option<&[f64]>,
) -> Result<Array1<f64>> {
    let p = x.ncols();
    if y.len() != x.nrows() {
        return Err(Error::validation("design and outcome dimensions do not match"));
    }
    if !(eta_q >= 0.0) {
        return Err(Error::validation("eta_q must be non-negative"));
    }
    if let Some(w) = weights {
        if w.len() != p {
            return Err(Error::validation("weight length does not match covariates"));
        }
        if w.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::validation("weights must be positive"));
        }
    }
    let gram = x.t().dot(x);
    let xty = x.t().dot(y);
    // Variables: [beta+ (p), beta- (p)]; rows bound X'X beta within eta of X'y.
    let mut objective = vec![0.0; 2 * p];
    for j in 0..p {
        let w = weights.map_or(1.0, |w| w[j]);
        objective[j] = w;
        objective[p + j] = w;
    }
    let mut constraints = Vec::with_capacity(2 * p);
    for j in 0..p {
        let mut row = vec![0.0; 2 * p];
        for k in 0..p {
            row[k] = gram[(j, k)];
            row[p + k] = -gram[(j, k)];
        }
        constraints.push((row.clone(), Constraint::Le, xty[j] + eta_q));
        constraints.push((row, Constraint::Ge, xty[j] - eta_q));
    }
    match lp::solve(&LpProblem { objective, constraints })? {
        LpOutcome::Optimal { x: sol, .. } => {
            Ok(Array1::from((0..p).map(|j| sol[j] - sol[p + j]).collect::<Vec<_>>()))
        }
        LpOutcome::Unbounded => Err(Error::numerical("selector program is unbounded")),
        LpOutcome::Infeasible => Err(Error::numerical(
            "selector program reported infeasible; the constraint set should contain a least-squares point",
        )),
    }
}

/// AFT Dantzig selector: alternate Buckley-James imputation at the current
/// beta with a weighted selector solve on the column-centered design until
/// the coefficients stop moving.
pub fn dantzig_aft(
    ds: &SurvivalDataset,
    eta_q: f64,
    weights: Option<&[f64]>,
    opts: &DantzigOptions,
) -> Result<DantzigFit> {
    let n = ds.n();
    let p = ds.p();
    if ds.event_count() == 0 {
        return Err(Error::validation("Dantzig AFT fitting needs at least one event"));
    }
    let xc = center_columns(&ds.x().view());
    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut converged = false;
    let mut imputed = buckley_james_impute(ds, &beta)?;

    if ds.event_count() == n {
        // No censoring: the imputation is the identity, one solve suffices.
        let tc = center_vector(&imputed);
        let sol = dantzig_weighted(&xc.view(), &tc.view(), eta_q, weights)?;
        return Ok(DantzigFit {
            beta: sol.to_vec(),
            eta_q,
            iterations: 1,
            converged: true,
            imputed_outcomes: imputed,
        });
    }

    // `imputed` always holds the outcomes that entered the latest solve, so
    // the returned pair satisfies the selector constraint on every exit path.
    loop {
        iterations += 1;
        let tc = center_vector(&imputed);
        let sol = dantzig_weighted(&xc.view(), &tc.view(), eta_q, weights)?;
        let change = sol
            .iter()
            .zip(&beta)
            .fold(0.0f64, |a, (new, old)| a.max((new - old).abs()));
        beta = sol.to_vec();
        if change <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        imputed = buckley_james_impute(ds, &beta)?;
    }
    Ok(DantzigFit { beta, eta_q, iterations, converged, imputed_outcomes: imputed })
}

/// Constraint residual |X' P_n (T* - X beta)|_inf of a fit against its own
/// stored imputed outcomes.
pub fn constraint_residual(ds: &SurvivalDataset, fit: &DantzigFit) -> f64 {
    let xc = center_columns(&ds.x().view());
    let tc = center_vector(&fit.imputed_outcomes);
    let beta = Array1::from(fit.beta.clone());
    let r = &tc - &xc.dot(&beta);
    xc.t().dot(&r).iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// Picks eta_q by k-fold cross-validation on held-out imputed squared error
/// over a log grid anchored at the smallest eta whose solution is zero.
/// Returns the chosen eta and the per-eta CV scores.
pub fn select_eta_q(
    ds: &SurvivalDataset,
    k: usize,
    seed: u64,
    n_etas: usize,
    weights: Option<&[f64]>,
    opts: &DantzigOptions,
) -> Result<(f64, Vec<f64>)> {
    if n_etas < 2 {
        return Err(Error::validation("eta grid needs at least 2 points"));
    }
    let xc = center_columns(&ds.x().view());
    let t0 = center_vector(&buckley_james_impute(ds, &vec![0.0; ds.p()])?);
    let eta_max = xc.t().dot(&t0).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(eta_max > 0.0) {
        return Err(Error::numerical("flat correlation; cannot anchor the eta grid"));
    }
    let grid: Vec<f64> = (0..n_etas)
        .map(|i| {
            let f = i as f64 / (n_etas - 1) as f64;
            eta_max * (0.01f64).powf(f)
        })
        .collect();

    let (assign, k_eff, _warnings) = event_stratified_folds(ds.events(), k, seed)?;
    let mut scores = vec![0.0f64; grid.len()];
    for fold in 0..k_eff {
        let train: Vec<usize> = (0..ds.n()).filter(|&i| assign[i] != fold).collect();
        let test: Vec<usize> = (0..ds.n()).filter(|&i| assign[i] == fold).collect();
        let ds_train = ds.subset(&train)?;
        let ds_test = ds.subset(&test)?;
        if ds_train.event_count() == 0 || ds_test.event_count() == 0 {
            continue;
        }
        for (g, &eta) in grid.iter().enumerate() {
            let fit = dantzig_aft(&ds_train, eta, weights, opts)?;
            let beta = Array1::from(fit.beta.clone());
            let train_fit: Vec<f64> = (0..ds_train.n())
                .map(|i| ds_train.covariate_row(i).dot(&beta))
                .collect();
            let intercept = fit
                .imputed_outcomes
                .iter()
                .zip(&train_fit)
                .map(|(t, f)| t - f)
                .sum::<f64>()
                / ds_train.n() as f64;
            let t_test = buckley_james_impute(&ds_test, &fit.beta)?;
            for i in 0..ds_test.n() {
                let pred = intercept + ds_test.covariate_row(i).dot(&beta);
                scores[g] += (t_test[i] - pred) * (t_test[i] - pred);
            }
        }
    }
    let mut best = 0;
    for (g, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = g;
        }
    }
    Ok((grid[best], scores))
}

/// Adaptive selector weights 1/(|ridge_j| + 1/sqrt(n)) from a ridge fit of
/// the beta = 0 imputed outcomes on the standardized centered design.
pub fn adaptive_weights(ds: &SurvivalDataset) -> Result<Vec<f64>> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::validation("adaptive weights need at least 2 observations"));
    }
    let t0 = center_vector(&buckley_james_impute(ds, &vec![0.0; ds.p()])?);
    let xc = center_columns(&ds.x().view());
    let mut xs = xc.clone();
    let mut sds = vec![1.0; ds.p()];
    for j in 0..ds.p() {
        let col = xc.column(j);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
        if sd > 0.0 {
            sds[j] = sd;
            for i in 0..n {
                xs[(i, j)] /= sd;
            }
        }
    }
    let ridge = linmodel::ridge(&xs.view(), &t0.view(), 1.0)?;
    let floor = 1.0 / (n as f64).sqrt();
    Ok((0..ds.p()).map(|j| 1.0 / ((ridge[j] / sds[j]).abs() + floor)).collect())
}

fn center_columns(x: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for j in 0..x.ncols() {
        let mean = x.column(j).sum() / x.nrows() as f64;
        out.column_mut(j).mapv_inplace(|v| v - mean);
    }
    out
}

fn center_vector(v: &[f64]) -> Array1<f64> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Array1::from(v.iter().map(|x| x - mean).collect::<Vec<_>>())
}
