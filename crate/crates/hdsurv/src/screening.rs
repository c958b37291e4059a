//! Ultra-high-dimensional marginal feature screening: sure independence
//! screening by univariate Cox coefficients and by concordance, returning
//! the top-d covariates ahead of a penalized fit.

use crate::coxcore::{fit_mple, CoxOptions};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::nonparam::c_index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    TopD,
    ScoreCutoff,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenResult {
    /// Marginal importance per covariate.
    pub scores: Vec<f64>,
    /// Retained indices, ascending; selected as the d largest scores with
    /// ties broken toward the lower index.
    pub kept: Vec<usize>,
    pub threshold_rule: ThresholdRule,
    pub d: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Conventional SIS retention size, floor(n / log n), at least 1.
pub fn default_retention(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    ((n as f64 / (n as f64).ln()).floor() as usize).max(1)
}

fn top_d(scores: &[f64], d: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut kept = idx[..d].to_vec();
    kept.sort_unstable();
    kept
}

fn check_d(d: usize, p: usize) -> Result<()> {
    if d == 0 || d > p {
        return Err(Error::validation(format!(
            "retention size d = {d} must satisfy 1 <= d <= p = {p}"
        )));
    }
    Ok(())
}

fn column_variance(ds: &SurvivalDataset, j: usize) -> f64 {
    let col = ds.x().column(j);
    let mean = col.sum() / col.len() as f64;
    col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
}

/// Sure independence screening: scores are |beta_j| from the univariate Cox
/// MPLE per covariate. Zero-variance or non-converged columns score 0 with
/// a warning.
pub fn marginal_cox_screen(ds: &SurvivalDataset, d: usize) -> Result<ScreenResult> {
    check_d(d, ds.p())?;
    let opts = CoxOptions::default();
    let results: Vec<(f64, Option<String>)> = (0..ds.p())
        .into_par_iter()
        .map(|j| -> Result<(f64, Option<String>)> {
            if column_variance(ds, j) == 0.0 {
                return Ok((
                    0.0,
                    Some(format!(
                        "column '{}' has zero variance; scored 0",
                        ds.feature_names()[j]
                    )),
                ));
            }
            let uni = ds.select_columns(&[j])?;
            let fit = fit_mple(&uni, &opts)?;
            if fit.converged {
                Ok((fit.beta[0].abs(), None))
            } else {
                Ok((
                    0.0,
                    Some(format!(
                        "marginal fit for column '{}' did not converge; scored 0",
                        ds.feature_names()[j]
                    )),
                ))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = results.iter().map(|(s, _)| *s).collect();
    let warnings: Vec<String> = results.into_iter().filter_map(|(_, w)| w).collect();
    Ok(ScreenResult {
        kept: top_d(&scores, d),
        scores,
        threshold_rule: ThresholdRule::TopD,
        d,
        warnings,
    })
}

/// Concordance screening: scores are |C_j - 1/2| where C_j is the C-index of
/// covariate j used directly as a risk score. A constant column yields
/// all-tied comparable pairs, hence C = 1/2 and score 0.
pub fn concordance_screen(ds: &SurvivalDataset, d: usize) -> Result<ScreenResult> {
    check_d(d, ds.p())?;
    let results: Vec<(f64, Option<String>)> = (0..ds.p())
        .into_par_iter()
        .map(|j| -> Result<(f64, Option<String>)> {
            let col: Vec<f64> = ds.x().column(j).to_vec();
            match c_index(ds.times(), ds.events(), &col) {
                Ok(c) => Ok(((c - 0.5).abs(), None)),
                Err(_) => Ok((
                    0.0,
                    Some(format!(
                        "no comparable pairs for column '{}'; scored 0",
                        ds.feature_names()[j]
                    )),
                )),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = results.iter().map(|(s, _)| *s).collect();
    let warnings: Vec<String> = results.into_iter().filter_map(|(_, w)| w).collect();
    Ok(ScreenResult {
        kept: top_d(&scores, d),
        scores,
        threshold_rule: ThresholdRule::TopD,
        d,
        warnings,
    })
}

/// Cutoff-based retention over precomputed scores, for pipelines that prefer
/// an absolute threshold to a fixed count.
pub fn keep_by_cutoff(scores: &[f64], cutoff: f64) -> ScreenResult {
    let kept: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= cutoff).collect();
    ScreenResult {
        scores: scores.to_vec(),
        d: kept.len(),
        kept,
        threshold_rule: ThresholdRule::ScoreCutoff,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset_from_rows;
    use crate::util::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn signal_dataset(seed: u64, n: usize, beta1: f64) -> SurvivalDataset {
        let mut rng = stream_rng(seed, 0);
        let mut rows = Vec::new();
        let mut times = Vec::new();
        let mut events = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
            let u: f64 = rng.gen_range(1e-12..1.0);
            times.push(-u.ln() / (beta1 * x[0]).exp());
            events.push(rng.gen_bool(0.85));
            rows.push(x);
        }
        if !events.iter().any(|&e| e) {
            events[0] = true;
        }
        dataset_from_rows(&times, &events, &rows).unwrap()
    }

    #[test]
    fn marginal_screen_finds_the_signal() {
        let ds = signal_dataset(3, 500, 2.0);
        let res = marginal_cox_screen(&ds, 1).unwrap();
        assert_eq!(res.kept, vec![0]);
        assert!(res.scores[0] > res.scores[1] && res.scores[0] > res.scores[2]);
        assert_eq!(res.threshold_rule, ThresholdRule::TopD);
    }

    #[test]
    fn d_equal_p_keeps_everything() {
        let ds = signal_dataset(4, 60, 1.0);
        let res = marginal_cox_screen(&ds, 3).unwrap();
        assert_eq!(res.kept, vec![0, 1, 2]);
    }

    #[test]
    fn duplicated_columns_score_identically() {
        let ds = signal_dataset(5, 80, 1.0);
        let mut rows = Vec::new();
        for i in 0..ds.n() {
            let v = ds.x()[(i, 0)];
            rows.push(vec![v, v, ds.x()[(i, 1)]]);
        }
        let dup = dataset_from_rows(ds.times(), ds.events(), &rows).unwrap();
        let res = marginal_cox_screen(&dup, 2).unwrap();
        assert!((res.scores[0] - res.scores[1]).abs() < 1e-10);
        // Tie resolves to the lower index.
        assert!(res.kept.contains(&0));
        let conc = concordance_screen(&dup, 2).unwrap();
        assert_eq!(conc.scores[0], conc.scores[1]);
    }

    #[test]
    fn zero_variance_column_scores_zero_with_warning() {
        let ds = signal_dataset(6, 50, 1.5);
        let mut rows = Vec::new();
        for i in 0..ds.n() {
            rows.push(vec![ds.x()[(i, 0)], 7.0]);
        }
        let with_const = dataset_from_rows(ds.times(), ds.events(), &rows).unwrap();
        let res = marginal_cox_screen(&with_const, 1).unwrap();
        assert_eq!(res.scores[1], 0.0);
        assert!(res.warnings.iter().any(|w| w.contains("zero variance")));
        assert_eq!(res.kept, vec![0]);

        let conc = concordance_screen(&with_const, 1).unwrap();
        assert_eq!(conc.scores[1], 0.0);
    }

    #[test]
    fn perfect_negative_time_covariate_scores_half() {
        let times: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let events = vec![true; 20];
        let rows: Vec<Vec<f64>> = times.iter().map(|t| vec![-t, 1.0_f64.min(*t)]).collect();
        let ds = dataset_from_rows(&times, &events, &rows).unwrap();
        let res = concordance_screen(&ds, 1).unwrap();
        assert!((res.scores[0] - 0.5).abs() < 1e-12);
        assert_eq!(res.kept, vec![0]);
    }

    #[test]
    fn independent_covariate_scores_near_half_centered() {
        let mut rng = stream_rng(9, 0);
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
        let events = vec![true; n];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
            .collect();
        let ds = dataset_from_rows(&times, &events, &rows).unwrap();
        let res = concordance_screen(&ds, 2).unwrap();
        assert!(res.scores[0] < 0.05 && res.scores[1] < 0.05);
    }

    #[test]
    fn scores_invariant_to_increasing_time_transform() {
        let ds = signal_dataset(10, 120, 1.2);
        let warped: Vec<f64> = ds.times().iter().map(|t| (t * 3.0).exp()).collect();
        let ds2 = dataset_from_rows(
            &warped,
            ds.events(),
            &(0..ds.n()).map(|i| ds.x().row(i).to_vec()).collect::<Vec<_>>(),
        )
        .unwrap();
        for (a, b) in [
            (marginal_cox_screen(&ds, 2).unwrap(), marginal_cox_screen(&ds2, 2).unwrap()),
            (concordance_screen(&ds, 2).unwrap(), concordance_screen(&ds2, 2).unwrap()),
        ] {
            for (x, y) in a.scores.iter().zip(&b.scores) {
                assert!((x - y).abs() < 1e-12);
            }
            assert_eq!(a.kept, b.kept);
        }
    }

    #[test]
    fn default_retention_rule() {
        assert_eq!(default_retention(100), 21);
        assert_eq!(default_retention(3), 2);
        assert_eq!(default_retention(2), 1);
    }

    #[test]
    fn cutoff_rule_keeps_scores_at_or_above() {
        let res = keep_by_cutoff(&[0.1, 0.5, 0.3, 0.5], 0.3);
        assert_eq!(res.kept, vec![1, 2, 3]);
        assert_eq!(res.d, 3);
        assert_eq!(res.threshold_rule, ThresholdRule::ScoreCutoff);
    }

    #[test]
    fn invalid_d_rejected() {
        let ds = signal_dataset(11, 30, 1.0);
        assert!(marginal_cox_screen(&ds, 0).is_err());
        assert!(marginal_cox_screen(&ds, 4).is_err());
    }
}
