//! Linear-model utilities backing the resampling engine's linear family and
//! the Dantzig selector's adaptive weights: ridge, lasso by coordinate
//! descent on (1/2n)||y - Xb||^2 + eta ||b||_1, and cross-validated lasso.

use crate::error::{Error, Result};
use crate::util::stream_rng;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

/// Ridge solution of (X'X + eta I) b = X'y on the given (usually centered)
/// data.
pub fn ridge(x: &ArrayView2<f64>, y: &ArrayView1<f64>, eta: f64) -> Result<Array1<f64>> {
    if !(eta > 0.0) {
        return Err(Error::validation("ridge eta must be positive"));
    }
    if x.nrows() != y.len() {
        return Err(Error::validation("ridge dimension mismatch"));
    }
    let mut gram: Array2<f64> = x.t().dot(x);
    for j in 0..gram.nrows() {
        gram[(j, j)] += eta;
    }
    let xty = x.t().dot(y);
    crate::linalg::solve_spd(&gram, &xty)
}

/// Lasso by cyclic coordinate descent. Objective (1/2n)||y - Xb||^2 +
/// eta ||b||_1; converges when the max coefficient change is below tol.
pub fn lasso(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    eta: f64,
    beta0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<Array1<f64>> {
    let n = x.nrows();
    let p = x.ncols();
    if y.len() != n {
        return Err(Error::validation("lasso dimension mismatch"));
    }
    if eta < 0.0 {
        return Err(Error::validation("lasso eta must be non-negative"));
    }
    let nf = n as f64;
    let col_sq: Vec<f64> = (0..p)
        .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let mut beta = match beta0 {
        Some(b) => Array1::from(b.to_vec()),
        None => Array1::zeros(p),
    };
    let mut residual = y.to_owned() - x.dot(&beta);
    for _ in 0..max_iter {
        let mut max_change = 0.0f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = x.column(j).dot(&residual) / nf + col_sq[j] * old;
            let new = rho.signum() * (rho.abs() - eta).max(0.0) / col_sq[j];
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    residual[i] -= delta * x[(i, j)];
                }
                beta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= tol {
            break;
        }
    }
    Ok(beta)
}

/// Cross-validated lasso over a log grid from eta_max = ||X'y/n||_inf.
/// Returns the coefficient vector at the CV-optimal eta and that eta.
/// Inputs are used as-is; center or standardize beforehand when needed.
pub fn lasso_cv(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    k: usize,
    seed: u64,
    n_etas: usize,
) -> Result<(Array1<f64>, f64)> {
    let n = x.nrows();
    if k < 2 || k > n {
        return Err(Error::validation("lasso_cv needs 2 <= k <= n"));
    }
    let nf = n as f64;
    let xty = x.t().dot(y);
    let top = xty.iter().fold(0.0f64, |a, v| a.max(v.abs())) / nf;
    if !(top > 0.0) {
        return Err(Error::numerical("flat gradient; cannot anchor the eta grid"));
    }
    let grid: Vec<f64> = (0..n_etas)
        .map(|i| {
            let f = i as f64 / (n_etas.max(2) - 1) as f64;
            (top.ln() + (top * 0.01).ln() * f - top.ln() * f).exp()
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, 3));
    let assign: Vec<usize> = {
        let mut a = vec![0usize; n];
        for (i, &idx) in order.iter().enumerate() {
            a[idx] = i % k;
        }
        a
    };

    let mut scores = vec![0.0f64; grid.len()];
    for fold in 0..k {
        let train_rows: Vec<usize> = (0..n).filter(|&i| assign[i] != fold).collect();
        let test_rows: Vec<usize> = (0..n).filter(|&i| assign[i] == fold).collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            continue;
        }
        let xt = select_rows(x, &train_rows);
        let yt = Array1::from(train_rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let xv = select_rows(x, &test_rows);
        let yv = Array1::from(test_rows.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let mut warm: Option<Array1<f64>> = None;
        for (g, &eta) in grid.iter().enumerate() {
            let beta = lasso(
                &xt.view(),
                &yt.view(),
                eta,
                warm.as_ref().map(|b| b.as_slice().unwrap()),
                1e-8,
                10_000,
            )?;
            let pred = xv.dot(&beta);
            scores[g] += (&yv - &pred).iter().map(|r| r * r).sum::<f64>();
            warm = Some(beta);
        }
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[best] {
            best = i;
        }
    }
    let beta = lasso(x, y, grid[best], None, 1e-9, 20_000)?;
    Ok((beta, grid[best]))
}

pub(crate) fn select_rows(x: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..x.ncols() {
            out[(r, j)] = x[(i, j)];
        }
    }
    out
}
