//! Censored quantile regression over a grid of quantile levels.
//!
//! Coefficients beta(tau) of the log survival time are estimated
//! sequentially: each level solves a weighted L1 minimization (a linear
//! program) whose subgradient is the martingale estimating function,
//! given the fits at all lower levels.

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{self, Constraint, LpOutcome, LpProblem};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Standardized-scale solution norm beyond which a quantile level is
/// declared non-estimable.
const ESTIMABILITY_BOUND: f64 = 1e3;

/// Residual tolerance for deciding that an observation sits exactly on the
/// fitted quantile plane.
const BOUNDARY_TOL: f64 = 1e-7;

/// Increasing grid of quantile levels in (0, 1) with the cumulative hazard
/// H(tau) = -log(1 - tau) of each level precomputed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "QuantileGridData")]
pub struct QuantileGrid {
    taus: Vec<f64>,
    tau_upper: f64,
    h_values: Vec<f64>,
}

/// Serialized form of a grid; only the levels matter, the derived fields
/// are rebuilt (and the levels revalidated) through `new`.
#[derive(Deserialize)]
struct QuantileGridData {
    taus: Vec<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    tau_upper: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    h_values: Option<Vec<f64>>,
}

impl TryFrom<QuantileGridData> for QuantileGrid {
    type Error = Error;

    fn try_from(data: QuantileGridData) -> Result<Self> {
        QuantileGrid::new(data.taus)
    }
}

impl QuantileGrid {
    pub fn new(taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::validation("quantile grid must be non-empty"));
        }
        let mut prev = 0.0;
        for &t in &taus {
            if !t.is_finite() || t <= prev || t >= 1.0 {
                return Err(Error::validation(
                    "quantile levels must be strictly increasing within (0, 1)",
                ));
            }
            prev = t;
        }
        let tau_upper = *taus.last().unwrap();
        let h_values = taus.iter().map(|&t| -(1.0 - t).ln()).collect();
        Ok(Self { taus, tau_upper, h_values })
    }

    /// Levels 0.05, 0.10, ..., 0.70.
    pub fn default_grid() -> Self {
        Self::new((1..=14).map(|k| k as f64 * 0.05).collect()).unwrap()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn tau_upper(&self) -> f64 {
        self.tau_upper
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h_values
    }

    /// The grid restricted to levels at or below `tau`.
    pub fn truncate_at(&self, tau: f64) -> Result<Self> {
        let taus: Vec<f64> = self.taus.iter().copied().filter(|&t| t <= tau + 1e-12).collect();
        if taus.is_empty() {
            return Err(Error::validation(format!(
                "no grid level lies at or below tau = {tau}"
            )));
        }
        Self::new(taus)
    }
}

/// Quantile-coefficient process on a grid: row k of `coefficients` holds
/// the intercept followed by the covariate slopes at level taus[k].
/// Levels past the estimability limit repeat the last estimable row and
/// are flagged false in `estimable`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CqrFit {
    pub grid: QuantileGrid,
    pub coefficients: Array2<f64>,
    pub estimable: Vec<bool>,
    pub warnings: Vec<String>,
}

impl CqrFit {
    /// Coefficient row at level taus[k], intercept first.
    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.coefficients.row(k)
    }

    /// Tidy CSV: tau, name, value, estimable. `feature_names` must match the
    /// fitted covariates; the intercept row is named "intercept".
    pub fn write_csv<W: Write>(&self, feature_names: &[String], mut out: W) -> Result<()> {
        if feature_names.len() + 1 != self.coefficients.ncols() {
            return Err(Error::validation(
                "feature name count does not match the fitted coefficient columns",
            ));
        }
        writeln!(out, "tau,name,value,estimable")?;
        for (k, &tau) in self.grid.taus().iter().enumerate() {
            for j in 0..self.coefficients.ncols() {
                let name = if j == 0 { "intercept" } else { &feature_names[j - 1] };
                writeln!(
                    out,
                    "{},{},{},{}",
                    tau,
                    name,
                    self.coefficients[(k, j)],
                    self.estimable[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Standard (uncensored) quantile regression of `y` on `x` with an
/// intercept, solved as the residual-splitting linear program. Returns the
/// intercept followed by the slopes.
pub fn quantile_regression(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    tau: f64,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let d = x.ncols() + 1;
    if y.len() != n || n == 0 {
        return Err(Error::validation("quantile regression dimension mismatch"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::validation("tau must lie in (0, 1)"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("quantile regression outcomes must be finite"));
    }
    // Variables: [r+ (n), r- (n), b+ (d), b- (d)].
    let ncols = 2 * n + 2 * d;
    let mut objective = vec![0.0; ncols];
    for i in 0..n {
        objective[i] = tau;
        objective[n + i] = 1.0 - tau;
    }
    let mut constraints = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = vec![0.0; ncols];
        row[i] = 1.0;
        row[n + i] = -1.0;
        row[2 * n] = 1.0;
        row[2 * n + d] = -1.0;
        for j in 1..d {
            row[2 * n + j] = x[(i, j - 1)];
            row[2 * n + d + j] = -x[(i, j - 1)];
        }
        constraints.push((row, Constraint::Eq, y[i]));
    }
    match lp::solve(&LpProblem { objective, constraints })? {
        LpOutcome::Optimal { x: sol, .. } => Ok(Array1::from(
            (0..d).map(|j| sol[2 * n + j] - sol[2 * n + d + j]).collect::<Vec<_>>(),
        )),
        _ => Err(Error::numerical("quantile regression program did not solve")),
    }
}

/// Fits the quantile-coefficient process on `grid` by sequential estimating
/// equations on the log time scale.
///
/// Grid increments use the discrete hazard (tau_{k+1} - tau_k)/(1 - tau_k)
/// of the quantile scale, and observations interpolated by a fitted plane
/// contribute fractional at-risk weights recovered from the LP optimality
/// conditions. Together these make the estimator reduce exactly to plain
/// quantile regression when no observation is censored.
pub fn fit_cqr(ds: &SurvivalDataset, grid: &QuantileGrid) -> Result<CqrFit> {
    let n = ds.n();
    let p = ds.p();
    if n < 2 {
        return Err(Error::validation("quantile regression needs at least 2 observations"));
    }
    if ds.event_count() == 0 {
        return Err(Error::validation("quantile regression needs at least one event"));
    }
    if ds.times().iter().any(|&t| t <= 0.0) {
        return Err(Error::validation(
            "log-scale survival models require strictly positive times",
        ));
    }

    // Standardized design with an explicit leading intercept column.
    let (mut means, mut sds) = (vec![0.0; p], vec![1.0; p]);
    for j in 0..p {
        let col = ds.x().column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        if var.sqrt() == 0.0 {
            return Err(Error::validation(format!(
                "covariate column {j} is constant and collinear with the intercept"
            )));
        }
        means[j] = mean;
        sds[j] = var.sqrt();
    }
    let mut xs = Array2::<f64>::zeros((n, p + 1));
    for i in 0..n {
        xs[(i, 0)] = 1.0;
        for j in 0..p {
            xs[(i, j + 1)] = (ds.x()[(i, j)] - means[j]) / sds[j];
        }
    }
    let z: Vec<f64> = ds.times().iter().map(|t| t.ln()).collect();
    let events: Vec<usize> = (0..n).filter(|&i| ds.events()[i]).collect();

    let taus = grid.taus();
    let m = taus.len();
    let mut coef_std = Array2::<f64>::zeros((m, p + 1));
    let mut estimable = vec![true; m];
    let mut warnings = Vec::new();

    // Cumulative estimating-equation mass per subject; everyone is at risk
    // below the first level, so the opening increment is tau_0/(1 - 0).
    let mut c = vec![taus[0]; n];
    let mut stopped_at: Option<usize> = None;

    for k in 0..m {
        if stopped_at.is_some() {
            estimable[k] = false;
            continue;
        }
        let mut q = Array1::<f64>::zeros(p + 1);
        for i in 0..n {
            q.scaled_add(c[i], &xs.row(i));
        }
        let beta = match solve_level(&xs, &z, &events, &q)? {
            Some(beta) if beta.iter().all(|b| b.abs() <= ESTIMABILITY_BOUND) => beta,
            Some(_) => {
                warnings.push(format!(
                    "solution norm exceeds {ESTIMABILITY_BOUND:e} at tau = {}; higher levels are not estimable",
                    taus[k]
                ));
                stopped_at = Some(k);
                estimable[k] = false;
                continue;
            }
            None => {
                warnings.push(format!(
                    "estimating equation is unbounded at tau = {}; higher levels are not estimable",
                    taus[k]
                ));
                stopped_at = Some(k);
                estimable[k] = false;
                continue;
            }
        };
        for j in 0..=p {
            coef_std[(k, j)] = beta[j];
        }
        if k + 1 < m {
            let at_risk = at_risk_weights(&xs, &z, &events, ds.events(), &beta, &q);
            let w = (taus[k + 1] - taus[k]) / (1.0 - taus[k]);
            for i in 0..n {
                c[i] += w * at_risk[i];
            }
        }
    }

    if let Some(k) = stopped_at {
        if k == 0 {
            return Err(Error::numerical(
                "quantile estimating equation is unbounded at the lowest grid level",
            ));
        }
        for kk in k..m {
            for j in 0..=p {
                coef_std[(kk, j)] = coef_std[(k - 1, j)];
            }
        }
    }

    // Back to the original covariate scale.
    let mut coefficients = Array2::<f64>::zeros((m, p + 1));
    for k in 0..m {
        let mut intercept = coef_std[(k, 0)];
        for j in 0..p {
            let slope = coef_std[(k, j + 1)] / sds[j];
            coefficients[(k, j + 1)] = slope;
            intercept -= slope * means[j];
        }
        coefficients[(k, 0)] = intercept;
    }

    Ok(CqrFit { grid: grid.clone(), coefficients, estimable, warnings })
}

/// One grid level: minimize sum_{events} (x_i'b - z_i)_+ - q'b, whose
/// subgradient is the estimating function. None marks an unbounded program
/// (the estimability limit).
fn solve_level(
    xs: &Array2<f64>,
    z: &[f64],
    events: &[usize],
    q: &Array1<f64>,
) -> Result<Option<Array1<f64>>> {
    let ne = events.len();
    let d = xs.ncols();
    // Variables: [u (ne), b+ (d), b- (d)].
    let ncols = ne + 2 * d;
    let mut objective = vec![0.0; ncols];
    for e in 0..ne {
        objective[e] = 1.0;
    }
    for j in 0..d {
        objective[ne + j] = -q[j];
        objective[ne + d + j] = q[j];
    }
    let mut constraints = Vec::with_capacity(ne);
    for (e, &i) in events.iter().enumerate() {
        let mut row = vec![0.0; ncols];
        row[e] = -1.0;
        for j in 0..d {
            row[ne + j] = xs[(i, j)];
            row[ne + d + j] = -xs[(i, j)];
        }
        constraints.push((row, Constraint::Le, z[i]));
    }
    match lp::solve(&LpProblem { objective, constraints })? {
        LpOutcome::Optimal { x: sol, .. } => Ok(Some(Array1::from(
            (0..d).map(|j| sol[ne + j] - sol[ne + d + j]).collect::<Vec<_>>(),
        ))),
        LpOutcome::Unbounded => Ok(None),
        LpOutcome::Infeasible => {
            Err(Error::numerical("quantile step program is infeasible"))
        }
    }
}

/// At-risk weight of every observation against the fitted plane `beta`.
/// Events strictly below the plane are fully below (weight 0), strictly
/// above fully at risk (weight 1); events on the plane receive the
/// fractional split that satisfies the level's optimality condition
/// sum_i below_i x_i = q. Censored observations use the hard indicator.
fn at_risk_weights(
    xs: &Array2<f64>,
    z: &[f64],
    events: &[usize],
    is_event: &[bool],
    beta: &Array1<f64>,
    q: &Array1<f64>,
) -> Vec<f64> {
    let n = xs.nrows();
    let d = xs.ncols();
    let fitted: Vec<f64> = (0..n).map(|i| xs.row(i).dot(beta)).collect();
    let mut below = vec![0.0; n];
    let mut boundary = Vec::new();
    let mut rhs = q.clone();
    for &i in events {
        let tol = BOUNDARY_TOL * (1.0 + z[i].abs());
        let r = fitted[i] - z[i];
        if r > tol {
            below[i] = 1.0;
            rhs -= &xs.row(i);
        } else if r >= -tol {
            boundary.push(i);
        }
    }
    if !boundary.is_empty() && boundary.len() <= d {
        let mut a = Array2::<f64>::zeros((d, boundary.len()));
        for (col, &i) in boundary.iter().enumerate() {
            for j in 0..d {
                a[(j, col)] = xs[(i, j)];
            }
        }
        if let Ok(frac) = linalg::least_squares(&a.view(), &rhs.view()) {
            for (col, &i) in boundary.iter().enumerate() {
                below[i] = frac[col].clamp(0.0, 1.0);
            }
        }
    }
    (0..n)
        .map(|i| {
            if is_event[i] {
                1.0 - below[i]
            } else if z[i] >= fitted[i] - BOUNDARY_TOL * (1.0 + z[i].abs()) {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}
