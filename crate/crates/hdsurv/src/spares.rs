//! Split-select-refit inference: repeated random half-splits with variable
//! selection on one half and low-dimensional partial regressions on the
//! other, aggregated across resamples with infinitesimal-jackknife standard
//! errors. The censored-quantile refit family traced over a grid of levels
//! gives the fused estimator with piecewise-constant coefficient functions.

use crate::coxcore::{fit_mple, CoxOptions};
use crate::cqr::{fit_cqr, QuantileGrid};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::util::{mean, normal_cdf, sample_covariance, sample_variance, shuffled_indices, stream_rng};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Low-dimensional refit applied to the selected set on the refit half.
///
/// `Linear` regresses the raw outcome on the selected columns by least
/// squares with an intercept, `Cox` maximizes the partial likelihood, and
/// `Cqr(tau)` runs the sequential censored quantile solver over the default
/// grid truncated at `tau` and reports the coefficient at the final level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefitFamily {
    Linear,
    Cox,
    Cqr(f64),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SparesOptions {
    /// Subtract the first-order finite-B sampling-noise bias from the
    /// squared-covariance sum before taking the square root. Off by default:
    /// the variance formula is otherwise implemented exactly as published.
    pub finite_b_correction: bool,
}

/// Aggregated inference over B half-sample resamples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResampleInference {
    /// Mean of the per-resample partial regression coefficients.
    pub estimates: Vec<f64>,
    /// ses[j] = sqrt(sum_i cov_ij^2) with cov_ij the sample covariance over
    /// resamples between subject i's refit-half inclusion and coefficient j.
    pub ses: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub p_values: Vec<f64>,
    /// Number of usable resamples; skipped resamples are not counted.
    pub b: usize,
    /// b x n; true when the subject fell in the refit half of that resample.
    pub inclusion: Array2<bool>,
    /// b x p per-resample coefficients.
    pub per_resample: Array2<f64>,
    /// Marks coefficients whose standard error degenerated to zero; their
    /// p-values are 0 for a nonzero estimate and 1 otherwise.
    pub degenerate_se: Vec<bool>,
    pub warnings: Vec<String>,
}

impl ResampleInference {
    pub fn p(&self) -> usize {
        self.estimates.len()
    }

    /// One row per coefficient: j, estimate, se, ci_lower, ci_upper, p.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,estimate,se,ci_lower,ci_upper,p")?;
        for j in 0..self.p() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                j, self.estimates[j], self.ses[j], self.ci_lower[j], self.ci_upper[j], self.p_values[j]
            )?;
        }
        Ok(())
    }
}

/// Per-level inference for the fused censored-quantile estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedCqrInference {
    pub grid: QuantileGrid,
    /// One aggregated inference per grid level, in grid order.
    pub per_tau: Vec<ResampleInference>,
}

impl FusedCqrInference {
    /// Piecewise-constant coefficient function: the estimate at the first
    /// grid level at or above `tau`, carried beyond the last level.
    pub fn coefficient_at(&self, j: usize, tau: f64) -> Result<f64> {
        let p = self.per_tau.first().map(|r| r.p()).unwrap_or(0);
        if j >= p {
            return Err(Error::validation(format!("coefficient index {j} out of range for p = {p}")));
        }
        let taus = self.grid.taus();
        let k = taus.partition_point(|t| *t < tau - 1e-12).min(taus.len() - 1);
        Ok(self.per_tau[k].estimates[j])
    }

    /// One row per (level, coefficient): tau, j, estimate, se, ci bounds, p.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tau,j,estimate,se,ci_lower,ci_upper,p")?;
        for (k, inf) in self.per_tau.iter().enumerate() {
            let tau = self.grid.taus()[k];
            for j in 0..inf.p() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    tau, j, inf.estimates[j], inf.ses[j], inf.ci_lower[j], inf.ci_upper[j], inf.p_values[j]
                )?;
            }
        }
        Ok(())
    }
}

/// Coefficient of variable `j` from the low-dimensional fit of the outcome
/// on columns `selected` united with `j`.
pub fn partial_regression(
    ds_half: &SurvivalDataset,
    selected: &[usize],
    j: usize,
    family: RefitFamily,
) -> Result<f64> {
    let p = ds_half.p();
    if j >= p {
        return Err(Error::validation(format!("target column {j} out of range for p = {p}")));
    }
    if let Some(&bad) = selected.iter().find(|&&c| c >= p) {
        return Err(Error::validation(format!("selected column {bad} out of range for p = {p}")));
    }
    let mut cols = selected.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let pos = match cols.binary_search(&j) {
        Ok(k) => k,
        Err(k) => {
            cols.insert(k, j);
            k
        }
    };
    if cols.len() >= ds_half.n() {
        return Err(Error::validation(format!(
            "{} regression variables do not fit in a refit half of {} rows",
            cols.len(),
            ds_half.n()
        )));
    }
    match family {
        RefitFamily::Linear => {
            let n = ds_half.n();
            let mut design = Array2::ones((n, cols.len() + 1));
            for (c, &col) in cols.iter().enumerate() {
                for i in 0..n {
                    design[(i, c + 1)] = ds_half.x()[(i, col)];
                }
            }
            let y = Array1::from(ds_half.times().to_vec());
            let coef = linalg::least_squares(&design.view(), &y.view())
                .map_err(|e| Error::validation(format!("partial regression on columns {cols:?} failed: {e}")))?;
            Ok(coef[pos + 1])
        }
        RefitFamily::Cox => {
            let sub = ds_half.select_columns(&cols)?;
            let fit = fit_mple(&sub, &CoxOptions::default())?;
            if !fit.converged {
                return Err(Error::numerical(format!(
                    "partial Cox fit on columns {cols:?} did not converge"
                )));
            }
            Ok(fit.beta[pos])
        }
        RefitFamily::Cqr(tau) => {
            let sub = ds_half.select_columns(&cols)?;
            let grid = family_grid(tau)?;
            let fit = fit_cqr(&sub, &grid)?;
            if !fit.estimable.iter().all(|e| *e) {
                return Err(Error::numerical(format!(
                    "censored quantile fit on columns {cols:?} lost estimability before level {tau}"
                )));
            }
            Ok(fit.coefficients[(grid.taus().len() - 1, pos + 1)])
        }
    }
}

/// Split-select-refit inference with B half-sample resamples.
///
/// Per resample the data are split into a selection half and a refit half,
/// `selector` picks a column set from the selection half, and every
/// coefficient is re-estimated on the refit half by partial regression.
pub fn spares_fit<S>(
    ds: &SurvivalDataset,
    selector: &S,
    family: RefitFamily,
    b: usize,
    seed: u64,
) -> Result<ResampleInference>
where
    S: Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync,
{
    spares_fit_with(ds, selector, family, b, seed, &SparesOptions::default())
}

pub fn spares_fit_with<S>(
    ds: &SurvivalDataset,
    selector: &S,
    family: RefitFamily,
    b: usize,
    seed: u64,
    opts: &SparesOptions,
) -> Result<ResampleInference>
where
    S: Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync,
{
    match family {
        RefitFamily::Linear => {
            let (inclusion, mut levels, warnings) =
                run_resamples(ds, selector, b, seed, 1, |d1, s| linear_partial_all(d1, s))?;
            assemble(inclusion, levels.pop().expect("one level"), &warnings, opts)
        }
        RefitFamily::Cox => {
            let (inclusion, mut levels, warnings) =
                run_resamples(ds, selector, b, seed, 1, |d1, s| cox_partial_all(d1, s))?;
            assemble(inclusion, levels.pop().expect("one level"), &warnings, opts)
        }
        RefitFamily::Cqr(tau) => {
            let grid = family_grid(tau)?;
            let mut fused = fused_hdcqr_with(ds, selector, &grid, b, seed, opts)?;
            Ok(fused.per_tau.pop().expect("grid is nonempty"))
        }
    }
}

/// Fused censored-quantile inference: one sequential quantile fit per
/// resample and coefficient over `tau_grid`, aggregated level by level.
pub fn fused_hdcqr<S>(
    ds: &SurvivalDataset,
    selector: &S,
    tau_grid: &QuantileGrid,
    b: usize,
    seed: u64,
) -> Result<FusedCqrInference>
where
    S: Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync,
{
    fused_hdcqr_with(ds, selector, tau_grid, b, seed, &SparesOptions::default())
}

pub fn fused_hdcqr_with<S>(
    ds: &SurvivalDataset,
    selector: &S,
    tau_grid: &QuantileGrid,
    b: usize,
    seed: u64,
    opts: &SparesOptions,
) -> Result<FusedCqrInference>
where
    S: Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync,
{
    let levels = tau_grid.taus().len();
    let (inclusion, mats, warnings) =
        run_resamples(ds, selector, b, seed, levels, |d1, s| cqr_partial_all(d1, s, tau_grid))?;
    let per_tau = mats
        .into_iter()
        .map(|m| assemble(inclusion.clone(), m, &warnings, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(FusedCqrInference {
        grid: tau_grid.clone(),
        per_tau,
    })
}

/// Aggregates stored resample outputs: mean estimates, covariance-based
/// standard errors, 1.96-multiplier intervals and two-sided normal p-values.
pub fn aggregate_resamples(
    inclusion: &Array2<bool>,
    per_resample: &Array2<f64>,
    opts: &SparesOptions,
) -> Result<ResampleInference> {
    let b = inclusion.nrows();
    let n = inclusion.ncols();
    let p = per_resample.ncols();
    if per_resample.nrows() != b {
        return Err(Error::validation(format!(
            "inclusion has {b} resamples but per-resample coefficients have {}",
            per_resample.nrows()
        )));
    }
    if b < 2 {
        return Err(Error::validation("aggregation needs at least 2 resamples"));
    }
    let inc_f: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..b).map(|r| if inclusion[(r, i)] { 1.0 } else { 0.0 }).collect())
        .collect();
    let inc_var_sum: f64 = inc_f.iter().map(|col| sample_variance(col)).sum();

    let mut estimates = vec![0.0; p];
    let mut ses = vec![0.0; p];
    let mut ci_lower = vec![0.0; p];
    let mut ci_upper = vec![0.0; p];
    let mut p_values = vec![0.0; p];
    let mut degenerate = vec![false; p];
    for j in 0..p {
        let col: Vec<f64> = (0..b).map(|r| per_resample[(r, j)]).collect();
        let est = mean(&col);
        let mut sum_sq = 0.0;
        for inc_col in &inc_f {
            let c = sample_covariance(inc_col, &col);
            sum_sq += c * c;
        }
        if opts.finite_b_correction {
            sum_sq = (sum_sq - sample_variance(&col) * inc_var_sum / b as f64).max(0.0);
        }
        let se = sum_sq.sqrt();
        estimates[j] = est;
        ses[j] = se;
        ci_lower[j] = est - 1.96 * se;
        ci_upper[j] = est + 1.96 * se;
        if se == 0.0 {
            degenerate[j] = true;
            p_values[j] = if est != 0.0 { 0.0 } else { 1.0 };
        } else {
            p_values[j] = (2.0 * (1.0 - normal_cdf(est.abs() / se))).min(1.0);
        }
    }
    let mut warnings = Vec::new();
    let n_degenerate = degenerate.iter().filter(|d| **d).count();
    if n_degenerate > 0 {
        warnings.push(format!(
            "{n_degenerate} coefficients have zero resampling standard error; their p-values are degenerate"
        ));
    }
    Ok(ResampleInference {
        estimates,
        ses,
        ci_lower,
        ci_upper,
        p_values,
        b,
        inclusion: inclusion.clone(),
        per_resample: per_resample.clone(),
        degenerate_se: degenerate,
        warnings,
    })
}

/// Selector that ignores the data and always returns the given support.
pub fn oracle_selector(support: Vec<usize>) -> impl Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync {
    move |_ds| Ok(support.clone())
}

/// Marginal screening selector for the linear family: keeps the `d` columns
/// with the largest absolute correlation with the outcome.
pub fn sis_linear_selector(d: usize) -> impl Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync {
    move |ds| {
        let n = ds.n();
        let y = Array1::from(ds.times().to_vec());
        let ym = y.sum() / n as f64;
        let yc = y.mapv(|v| v - ym);
        let ynorm = yc.dot(&yc).sqrt();
        let mut scores = vec![0.0; ds.p()];
        for (j, score) in scores.iter_mut().enumerate() {
            let col = ds.x().column(j);
            let m = col.sum() / n as f64;
            let mut dot = 0.0;
            let mut sq = 0.0;
            for i in 0..n {
                let v = col[i] - m;
                dot += v * yc[i];
                sq += v * v;
            }
            let denom = sq.sqrt() * ynorm;
            *score = if denom > 0.0 { (dot / denom).abs() } else { 0.0 };
        }
        let mut idx: Vec<usize> = (0..ds.p()).collect();
        idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b)));
        let mut kept = idx[..d.min(ds.p())].to_vec();
        kept.sort_unstable();
        Ok(kept)
    }
}

/// Default linear-family selector: lasso on least squares at the
/// cross-validation-optimal penalty, on centered columns and outcome.
pub fn lasso_cv_selector(k: usize, seed: u64) -> impl Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync {
    move |ds| {
        let n = ds.n();
        let y = Array1::from(ds.times().to_vec());
        let ym = y.sum() / n as f64;
        let yc = y.mapv(|v| v - ym);
        let mut xc = ds.x().clone();
        for j in 0..ds.p() {
            let m = xc.column(j).sum() / n as f64;
            xc.column_mut(j).mapv_inplace(|v| v - m);
        }
        let (beta, _eta) = crate::linmodel::lasso_cv(&xc.view(), &yc.view(), k, seed, 50)?;
        Ok(beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect())
    }
}

/// Default Cox-family selector: penalized partial likelihood with a lasso
/// path at the cross-validation-optimal penalty.
pub fn cox_lasso_cv_selector(k: usize, seed: u64) -> impl Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync {
    use crate::coxnet::{cross_validate, PathOptions};
    use crate::penalties::{PenaltyKind, PenaltySpec};
    move |ds| {
        let spec = PenaltySpec::new(PenaltyKind::Lasso, 1.0);
        let fit = cross_validate(ds, &spec, k, seed, &PathOptions::default())?;
        let beta = fit
            .selected_beta()
            .ok_or_else(|| Error::numerical("cross-validation selected no penalty"))?;
        Ok(beta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect())
    }
}

/// Default grid walked by the `Cqr(tau)` refit family: the standard levels
/// strictly below `tau`, then `tau` itself as the final level.
fn family_grid(tau: f64) -> Result<QuantileGrid> {
    if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
        return Err(Error::validation(format!("quantile level {tau} must lie in (0, 1)")));
    }
    let mut taus: Vec<f64> = QuantileGrid::default_grid()
        .taus()
        .iter()
        .copied()
        .filter(|t| *t < tau - 1e-9)
        .collect();
    taus.push(tau);
    QuantileGrid::new(taus)
}

enum ResampleOutcome {
    Kept { inclusion_row: Vec<bool>, betas: Array2<f64> },
    Skipped(String),
}

fn half_split(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let idx = shuffled_indices(n, rng);
    let n1 = (n + 1) / 2;
    let mut d1 = idx[..n1].to_vec();
    let mut d2 = idx[n1..].to_vec();
    d1.sort_unstable();
    d2.sort_unstable();
    (d1, d2)
}

fn run_resamples<S, R>(
    ds: &SurvivalDataset,
    selector: &S,
    b_total: usize,
    seed: u64,
    levels: usize,
    refit: R,
) -> Result<(Array2<bool>, Vec<Array2<f64>>, Vec<String>)>
where
    S: Fn(&SurvivalDataset) -> Result<Vec<usize>> + Sync,
    R: Fn(&SurvivalDataset, &[usize]) -> Result<Array2<f64>> + Sync,
{
    let n = ds.n();
    let p = ds.p();
    if b_total < 2 {
        return Err(Error::validation(format!("B = {b_total} resamples requested; at least 2 are required")));
    }
    if n < 4 {
        return Err(Error::validation(format!("{n} rows are too few to split into working halves")));
    }
    let cap = n as f64 / 2.0 - 2.0;
    let outcomes = (0..b_total)
        .into_par_iter()
        .map(|bi| -> Result<ResampleOutcome> {
            let mut rng = stream_rng(seed, bi as u64 + 1);
            let (d1, d2) = half_split(n, &mut rng);
            let ds2 = ds.subset(&d2)?;
            let mut s = match selector(&ds2) {
                Ok(v) => v,
                Err(e) => return Ok(ResampleOutcome::Skipped(format!("resample {bi}: selector failed: {e}"))),
            };
            s.sort_unstable();
            s.dedup();
            if let Some(&bad) = s.iter().find(|&&c| c >= p) {
                return Err(Error::validation(format!(
                    "selector returned column {bad}, out of range for p = {p}"
                )));
            }
            if s.len() as f64 > cap {
                return Ok(ResampleOutcome::Skipped(format!(
                    "resample {bi}: selector kept {} variables, above the n/2 - 2 = {cap:.1} limit",
                    s.len()
                )));
            }
            let ds1 = ds.subset(&d1)?;
            let betas = match refit(&ds1, &s) {
                Ok(m) => m,
                Err(e) => return Ok(ResampleOutcome::Skipped(format!("resample {bi}: refit failed: {e}"))),
            };
            debug_assert_eq!(betas.dim(), (levels, p));
            let mut row = vec![false; n];
            for &i in &d1 {
                row[i] = true;
            }
            Ok(ResampleOutcome::Kept { inclusion_row: row, betas })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let mut rows: Vec<Vec<bool>> = Vec::new();
    let mut kept: Vec<Array2<f64>> = Vec::new();
    for outcome in outcomes {
        match outcome {
            ResampleOutcome::Kept { inclusion_row, betas } => {
                rows.push(inclusion_row);
                kept.push(betas);
            }
            ResampleOutcome::Skipped(w) => warnings.push(w),
        }
    }
    if rows.is_empty() {
        return Err(Error::numerical(format!(
            "all {b_total} resamples were skipped; first cause: {}",
            warnings.first().map(String::as_str).unwrap_or("unknown")
        )));
    }
    let b_eff = rows.len();
    let inclusion = Array2::from_shape_fn((b_eff, n), |(r, i)| rows[r][i]);
    let mats: Vec<Array2<f64>> = (0..levels)
        .map(|k| Array2::from_shape_fn((b_eff, p), |(r, j)| kept[r][(k, j)]))
        .collect();
    Ok((inclusion, mats, warnings))
}

fn assemble(
    inclusion: Array2<bool>,
    per_resample: Array2<f64>,
    skip_warnings: &[String],
    opts: &SparesOptions,
) -> Result<ResampleInference> {
    if inclusion.nrows() < 2 {
        return Err(Error::numerical(format!(
            "only {} usable resample after {} skips; at least 2 are required",
            inclusion.nrows(),
            skip_warnings.len()
        )));
    }
    let mut out = aggregate_resamples(&inclusion, &per_resample, opts)?;
    if !skip_warnings.is_empty() {
        let mut w = skip_warnings.to_vec();
        w.append(&mut out.warnings);
        out.warnings = w;
    }
    Ok(out)
}

/// Solves L L^T x = rhs given the lower Cholesky factor.
fn chol_solve(l: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let m = l.nrows();
    let mut y = rhs.clone();
    for r in 0..m {
        let mut v = y[r];
        for c in 0..r {
            v -= l[(r, c)] * y[c];
        }
        y[r] = v / l[(r, r)];
    }
    for r in (0..m).rev() {
        let mut v = y[r];
        for c in r + 1..m {
            v -= l[(c, r)] * y[c];
        }
        y[r] = v / l[(r, r)];
    }
    y
}

/// Partial regression coefficients of every column for the linear family.
///
/// Centering absorbs the intercept; each non-selected column's coefficient
/// comes from residualizing it and the outcome against the selected block,
/// which equals the joint least-squares coefficient on S u {j}.
fn linear_partial_all(d1: &SurvivalDataset, s: &[usize]) -> Result<Array2<f64>> {
    let n1 = d1.n();
    let p = d1.p();
    if s.len() + 2 > n1 {
        return Err(Error::validation(format!(
            "refit half has {n1} rows, too few for {} selected variables plus intercept and target",
            s.len()
        )));
    }
    let y = Array1::from(d1.times().to_vec());
    let ym = y.sum() / n1 as f64;
    let yc = y.mapv(|v| v - ym);
    let mut xs = Array2::zeros((n1, s.len()));
    for (c, &j) in s.iter().enumerate() {
        let col = d1.x().column(j);
        let m = col.sum() / n1 as f64;
        for i in 0..n1 {
            xs[(i, c)] = col[i] - m;
        }
    }
    let (l, joint, ry) = if s.is_empty() {
        (None, Array1::zeros(0), yc.clone())
    } else {
        let gram = xs.t().dot(&xs);
        let l = linalg::cholesky(&gram)
            .map_err(|_| Error::validation(format!("selected columns {s:?} are collinear in the refit half")))?;
        let a_y = chol_solve(&l, &xs.t().dot(&yc));
        let ry = &yc - &xs.dot(&a_y);
        (Some(l), a_y, ry)
    };
    let mut out = Array2::zeros((1, p));
    for j in 0..p {
        if let Ok(pos) = s.binary_search(&j) {
            out[(0, j)] = joint[pos];
            continue;
        }
        let col = d1.x().column(j);
        let m = col.sum() / n1 as f64;
        let xcj = Array1::from_shape_fn(n1, |i| col[i] - m);
        let rj = match &l {
            Some(l) => {
                let a = chol_solve(l, &xs.t().dot(&xcj));
                &xcj - &xs.dot(&a)
            }
            None => xcj.clone(),
        };
        let denom = rj.dot(&rj);
        if denom <= 1e-10 * xcj.dot(&xcj) {
            return Err(Error::validation(format!(
                "column {j} is collinear with the selected set {s:?} in the refit half"
            )));
        }
        out[(0, j)] = rj.dot(&ry) / denom;
    }
    Ok(out)
}

fn cox_partial_all(d1: &SurvivalDataset, s: &[usize]) -> Result<Array2<f64>> {
    let p = d1.p();
    let opts = CoxOptions::default();
    let base = if s.is_empty() {
        None
    } else {
        let fit = fit_mple(&d1.select_columns(s)?, &opts)?;
        if !fit.converged {
            return Err(Error::numerical(format!("Cox refit on the selected set {s:?} did not converge")));
        }
        Some(fit)
    };
    let mut out = Array2::zeros((1, p));
    for j in 0..p {
        if let Ok(pos) = s.binary_search(&j) {
            out[(0, j)] = base.as_ref().expect("selected set is nonempty").beta[pos];
            continue;
        }
        let mut cols = s.to_vec();
        let ins = cols.partition_point(|&c| c < j);
        cols.insert(ins, j);
        let fit = fit_mple(&d1.select_columns(&cols)?, &opts)?;
        if !fit.converged {
            return Err(Error::numerical(format!("Cox refit on columns {cols:?} did not converge")));
        }
        out[(0, j)] = fit.beta[ins];
    }
    Ok(out)
}

fn cqr_partial_all(d1: &SurvivalDataset, s: &[usize], grid: &QuantileGrid) -> Result<Array2<f64>> {
    let p = d1.p();
    let levels = grid.taus().len();
    let require_estimable = |fit: &crate::cqr::CqrFit, cols: &[usize]| -> Result<()> {
        if fit.estimable.iter().all(|e| *e) {
            Ok(())
        } else {
            Err(Error::numerical(format!(
                "censored quantile refit on columns {cols:?} lost estimability before the last grid level"
            )))
        }
    };
    let base = if s.is_empty() {
        None
    } else {
        let fit = fit_cqr(&d1.select_columns(s)?, grid)?;
        require_estimable(&fit, s)?;
        Some(fit)
    };
    let mut out = Array2::zeros((levels, p));
    for j in 0..p {
        if let Ok(pos) = s.binary_search(&j) {
            let fit = base.as_ref().expect("selected set is nonempty");
            for k in 0..levels {
                out[(k, j)] = fit.coefficients[(k, pos + 1)];
            }
            continue;
        }
        let mut cols = s.to_vec();
        let ins = cols.partition_point(|&c| c < j);
        cols.insert(ins, j);
        let fit = fit_cqr(&d1.select_columns(&cols)?, grid)?;
        require_estimable(&fit, &cols)?;
        for k in 0..levels {
            out[(k, j)] = fit.coefficients[(k, ins + 1)];
        }
    }
    Ok(out)
}
