//! Survival support vector machines: a rank objective over comparable pairs,
//! an asymmetric regression objective on log survival times where censored
//! rows penalize only underestimation, and a hybrid mixing both. Models are
//! kernelized through their dual expansion and trained by deterministic
//! averaged subgradient descent.

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::util::stream_rng;
use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const PAIR_CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { bandwidth: f64 },
}

impl Kernel {
    fn value(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { bandwidth } => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-sq / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let Kernel::Rbf { bandwidth } = self {
            if !bandwidth.is_finite() || *bandwidth <= 0.0 {
                return Err(Error::validation(format!("rbf bandwidth {bandwidth} must be positive")));
            }
        }
        Ok(())
    }
}

/// Median pairwise Euclidean distance, the default RBF bandwidth. Uses a
/// seeded subsample of at most 2000 rows when the dataset is larger.
pub fn median_pairwise_bandwidth(ds: &SurvivalDataset, seed: u64) -> Result<f64> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::validation("bandwidth heuristic needs at least two rows"));
    }
    let rows: Vec<usize> = if n <= 2000 {
        (0..n).collect()
    } else {
        let mut rng = stream_rng(seed, 13);
        let mut idx: Vec<usize> = (0..n).collect();
        for k in 0..2000 {
            let swap = rng.gen_range(k..n);
            idx.swap(k, swap);
        }
        let mut kept = idx[..2000].to_vec();
        kept.sort_unstable();
        kept
    };
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in rows.iter().skip(a + 1) {
            let sq: f64 = ds
                .covariate_row(i)
                .iter()
                .zip(ds.covariate_row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(sq.sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let m = dists.len();
    let median = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    if median <= 0.0 {
        return Err(Error::validation("median pairwise distance is zero; covariate rows coincide"));
    }
    Ok(median)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmMode {
    Rank,
    Regression,
    Hybrid { mix: f64 },
}

#[derive(Debug, Clone)]
pub struct SvmOptions {
    pub epochs: usize,
    /// Step at iteration t is step_scale / sqrt(t).
    pub step_scale: f64,
    /// Comparable pairs beyond this count are subsampled with the seed.
    pub pair_cap: usize,
    pub seed: u64,
    /// Objective snapshot interval for the averaged iterate.
    pub eval_every: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            epochs: 500,
            step_scale: 1.0,
            pair_cap: 50_000,
            seed: 0,
            eval_every: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub mode: SvmMode,
    pub gamma: f64,
    /// Kernel-expansion coefficients of psi over the training rows.
    pub dual_coefficients: Vec<f64>,
    /// None in rank mode, which only scores relative orderings.
    pub intercept: Option<f64>,
    /// Training covariate rows referenced by the dual expansion.
    pub training_x: Array2<f64>,
    /// Objective at the averaged iterate, snapshotted every eval_every steps.
    pub objective_trace: Vec<f64>,
    pub objective: f64,
    pub warnings: Vec<String>,
}

impl SvmModel {
    /// Decision values: predicted log survival time in regression and hybrid
    /// modes, a pure ordering score (higher = longer survival) in rank mode.
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.training_x.ncols() {
            return Err(Error::validation(format!(
                "{} prediction columns but the model was trained on {}",
                x.ncols(),
                self.training_x.ncols()
            )));
        }
        let a = self.intercept.unwrap_or(0.0);
        let mut out = Vec::with_capacity(x.nrows());
        for r in 0..x.nrows() {
            let row: Vec<f64> = x.row(r).to_vec();
            let mut f = a;
            for (m, alpha) in self.dual_coefficients.iter().enumerate() {
                if *alpha != 0.0 {
                    f += alpha * self.kernel.value(&self.training_x.row(m).to_vec(), &row);
                }
            }
            out.push(f);
        }
        Ok(out)
    }
}

/// Rank mode: hinge over comparable pairs, no intercept.
pub fn fit_rank_svm(ds: &SurvivalDataset, kernel: Kernel, gamma: f64, opts: &SvmOptions) -> Result<SvmModel> {
    fit_core(ds, kernel, gamma, SvmMode::Rank, opts)
}

/// Regression mode on log survival times with one-sided censoring loss.
pub fn fit_regression_svm(ds: &SurvivalDataset, kernel: Kernel, gamma: f64, opts: &SvmOptions) -> Result<SvmModel> {
    fit_core(ds, kernel, gamma, SvmMode::Regression, opts)
}

/// Hybrid objective: gamma * [mix * rank loss + (1 - mix) * regression loss].
pub fn fit_hybrid_svm(
    ds: &SurvivalDataset,
    kernel: Kernel,
    gamma: f64,
    mix: f64,
    opts: &SvmOptions,
) -> Result<SvmModel> {
    if !(0.0..=1.0).contains(&mix) || !mix.is_finite() {
        return Err(Error::validation(format!("hybrid mix {mix} must lie in [0, 1]")));
    }
    fit_core(ds, kernel, gamma, SvmMode::Hybrid { mix }, opts)
}

/// Comparable pairs (i, j): subject i failed strictly before subject j's
/// observed time, so their ordering is identified despite censoring.
fn comparable_pairs(times: &[f64], events: &[bool]) -> Vec<(u32, u32)> {
    let n = times.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if times[i] < times[j] {
                pairs.push((i as u32, j as u32));
            }
        }
    }
    pairs
}

fn rank_contribution(f: &[f64], pairs: &[(u32, u32)], weight: f64) -> (f64, Vec<f64>) {
    let n = f.len();
    let partials: Vec<(f64, Vec<f64>)> = pairs
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut g = vec![0.0; n];
            for &(i, j) in chunk {
                let (i, j) = (i as usize, j as usize);
                let margin = 1.0 - (f[j] - f[i]);
                if margin > 0.0 {
                    loss += weight * margin;
                    g[i] += weight;
                    g[j] -= weight;
                }
            }
            (loss, g)
        })
        .collect();
    let mut loss = 0.0;
    let mut g = vec![0.0; n];
    for (l, pg) in partials {
        loss += l;
        for (acc, v) in g.iter_mut().zip(pg) {
            *acc += v;
        }
    }
    (loss, g)
}

/// Asymmetric regression loss at predictions f + a: underestimating any row
/// costs the shortfall, overestimating costs only when the row is an event.
fn regression_contribution(
    z: &[f64],
    events: &[bool],
    f: &[f64],
    a: f64,
    weight: f64,
) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.0;
    let mut g = vec![0.0; f.len()];
    let mut ga = 0.0;
    for i in 0..f.len() {
        let r = z[i] - f[i] - a;
        if r > 0.0 {
            loss += weight * r;
            g[i] -= weight;
            ga -= weight;
        } else if events[i] && r < 0.0 {
            loss += weight * (-r);
            g[i] += weight;
            ga += weight;
        }
    }
    (loss, g, ga)
}

struct Problem<'a> {
    k: Array2<f64>,
    pairs: Vec<(u32, u32)>,
    z: Vec<f64>,
    events: &'a [bool],
    gamma: f64,
    w_rank: f64,
    w_reg: f64,
}

impl Problem<'_> {
    fn objective(&self, alpha: &Array1<f64>, a: f64) -> f64 {
        let f = self.k.dot(alpha);
        let fs = f.as_slice().expect("contiguous");
        let mut obj = 0.5 * alpha.dot(&f);
        if self.w_rank > 0.0 {
            obj += self.gamma * rank_contribution(fs, &self.pairs, self.w_rank).0;
        }
        if self.w_reg > 0.0 {
            obj += self.gamma * regression_contribution(&self.z, self.events, fs, a, self.w_reg).0;
        }
        obj
    }
}

/// Exact minimizer over the intercept given fixed f: the one-dimensional
/// loss is piecewise linear in a, so the first residual knot where the right
/// derivative turns non-negative is optimal.
fn best_intercept(z: &[f64], events: &[bool], f: &[f64]) -> f64 {
    let mut knots: Vec<f64> = z.iter().zip(f).map(|(zi, fi)| zi - fi).collect();
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let resid: Vec<f64> = z.iter().zip(f).map(|(zi, fi)| zi - fi).collect();
    for cand in &knots {
        let above = resid.iter().filter(|r| **r > *cand).count() as i64;
        let event_at_or_below = resid
            .iter()
            .zip(events)
            .filter(|(r, e)| **e && **r <= *cand)
            .count() as i64;
        if event_at_or_below - above >= 0 {
            return *cand;
        }
    }
    *knots.last().expect("nonempty dataset")
}

fn fit_core(
    ds: &SurvivalDataset,
    kernel: Kernel,
    gamma: f64,
    mode: SvmMode,
    opts: &SvmOptions,
) -> Result<SvmModel> {
    kernel.validate()?;
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::validation(format!("gamma {gamma} must be positive")));
    }
    if opts.epochs == 0 || opts.eval_every == 0 {
        return Err(Error::validation("epochs and eval_every must be positive"));
    }
    let n = ds.n();
    let (w_rank, w_reg, with_intercept) = match mode {
        SvmMode::Rank => (1.0, 0.0, false),
        SvmMode::Regression => (0.0, 1.0, true),
        SvmMode::Hybrid { mix } => (mix, 1.0 - mix, true),
    };
    let mut warnings = Vec::new();

    let mut pairs = Vec::new();
    if w_rank > 0.0 {
        pairs = comparable_pairs(ds.times(), ds.events());
        if pairs.is_empty() {
            return Err(Error::validation("no comparable pairs: every ordering is censored or tied"));
        }
        if pairs.len() > opts.pair_cap {
            let total = pairs.len();
            let mut rng = stream_rng(opts.seed, 11);
            for k in 0..opts.pair_cap {
                let swap = rng.gen_range(k..total);
                pairs.swap(k, swap);
            }
            pairs.truncate(opts.pair_cap);
            pairs.sort_unstable();
            warnings.push(format!("subsampled {} of {total} comparable pairs", opts.pair_cap));
        }
    }

    let mut z = Vec::new();
    if w_reg > 0.0 {
        if ds.event_count() == 0 {
            return Err(Error::validation(
                "regression loss needs at least one event; otherwise the intercept is unbounded",
            ));
        }
        if let Some(t) = ds.times().iter().find(|t| **t <= 0.0) {
            return Err(Error::validation(format!("log survival targets need positive times, got {t}")));
        }
        z = ds.times().iter().map(|t| t.ln()).collect();
    }

    let mut k = Array2::zeros((n, n));
    for i in 0..n {
        let ri: Vec<f64> = ds.covariate_row(i).to_vec();
        for j in i..n {
            let v = kernel.value(&ri, &ds.covariate_row(j).to_vec());
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }

    let problem = Problem {
        k,
        pairs,
        z,
        events: ds.events(),
        gamma,
        w_rank,
        w_reg,
    };

    let mut alpha = Array1::zeros(n);
    let mut a = 0.0f64;
    let mut alpha_avg = Array1::zeros(n);
    let mut a_avg = 0.0f64;
    let mut trace = Vec::new();
    for t in 1..=opts.epochs {
        let f = problem.k.dot(&alpha);
        let fs = f.as_slice().expect("contiguous");
        let mut g = vec![0.0; n];
        let mut ga = 0.0;
        if problem.w_rank > 0.0 {
            let (_, gr) = rank_contribution(fs, &problem.pairs, problem.w_rank);
            for (acc, v) in g.iter_mut().zip(gr) {
                *acc += v;
            }
        }
        if problem.w_reg > 0.0 {
            let (_, gr, gra) = regression_contribution(&problem.z, problem.events, fs, a, problem.w_reg);
            for (acc, v) in g.iter_mut().zip(gr) {
                *acc += v;
            }
            ga += gra;
        }
        // Functional-space step: the regularizer's gradient is psi itself,
        // so the dual coefficients contract before absorbing the loss pull.
        let eta = opts.step_scale / (t as f64).sqrt();
        let shrink = 1.0 - eta.min(1.0);
        for (am, gm) in alpha.iter_mut().zip(&g) {
            *am = shrink * *am - eta * gamma * gm;
        }
        if with_intercept {
            a -= eta * gamma * ga;
        }
        // Weight iterate t by t: discounts the large burn-in steps and gives
        // the usual strongly-convex averaged-subgradient rate.
        let w = 2.0 / (t as f64 + 1.0);
        for (avg, cur) in alpha_avg.iter_mut().zip(&alpha) {
            *avg += (cur - *avg) * w;
        }
        a_avg += (a - a_avg) * w;
        if t % opts.eval_every == 0 || t == opts.epochs {
            trace.push(problem.objective(&alpha_avg, a_avg));
        }
    }

    if with_intercept && problem.w_reg > 0.0 {
        let f = problem.k.dot(&alpha_avg);
        a_avg = best_intercept(&problem.z, problem.events, f.as_slice().expect("contiguous"));
        trace.push(problem.objective(&alpha_avg, a_avg));
    }

    let objective = *trace.last().expect("at least one snapshot");
    Ok(SvmModel {
        kernel,
        mode,
        gamma,
        dual_coefficients: alpha_avg.to_vec(),
        intercept: if with_intercept { Some(a_avg) } else { None },
        training_x: ds.x().clone(),
        objective_trace: trace,
        objective,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset_from_rows;
    use crate::linalg;
    use crate::nonparam::c_index;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(times: &[f64], events: &[bool], rows: &[Vec<f64>]) -> SurvivalDataset {
        dataset_from_rows(times, events, rows).unwrap()
    }

    /// log T = 1 + 0.8 x0 - 0.5 x1 + noise, with independent censoring.
    fn aft_instance(seed: u64, n: usize, censor: bool) -> SurvivalDataset {
        let mut rng = stream_rng(seed, 0);
        let mut rows = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            let x0: f64 = StandardNormal.sample(&mut rng);
            let x1: f64 = StandardNormal.sample(&mut rng);
            let e: f64 = StandardNormal.sample(&mut rng);
            let t = (1.0 + 0.8 * x0 - 0.5 * x1 + 0.3 * e).exp();
            let c = if censor { (1.4 + rng.gen_range(0.0..2.0f64)).exp() } else { f64::INFINITY };
            rows.push(vec![x0, x1]);
            times.push(t.min(c));
            events.push(t <= c);
        }
        dataset(&times, &events, &rows)
    }

    #[test]
    fn separable_pair_reaches_perfect_concordance() {
        let ds = dataset(&[1.0, 2.0], &[true, true], &[vec![0.0], vec![1.0]]);
        let model = fit_rank_svm(&ds, Kernel::Linear, 10.0, &SvmOptions::default()).unwrap();
        let f = model.predict(&ds.x().view()).unwrap();
        let risk: Vec<f64> = f.iter().map(|v| -v).collect();
        assert_eq!(c_index(ds.times(), ds.events(), &risk).unwrap(), 1.0);
        assert!(model.intercept.is_none());
    }

    #[test]
    fn rank_loss_ignores_constant_shifts() {
        let pairs = vec![(0u32, 1u32), (0, 2), (1, 2)];
        // Dyadic scores and shift keep the shifted differences exact.
        let f = [0.25, -0.5, 0.75];
        let shifted: Vec<f64> = f.iter().map(|v| v + 4.0).collect();
        let (l0, g0) = rank_contribution(&f, &pairs, 1.0);
        let (l1, g1) = rank_contribution(&shifted, &pairs, 1.0);
        assert_eq!(l0.to_bits(), l1.to_bits());
        assert_eq!(g0, g1);
        let rough: Vec<f64> = f.iter().map(|v| v + 5.3).collect();
        let (l2, _) = rank_contribution(&rough, &pairs, 1.0);
        assert_abs_diff_eq!(l2, l0, epsilon = 1e-12);
    }

    #[test]
    fn rank_pairs_at_margin_contribute_exactly_the_hinge() {
        let pairs = vec![(0u32, 1u32), (0, 2)];
        // First pair clears the unit margin, second violates it by 0.75.
        let f = [0.0, 1.5, 0.25];
        let (loss, g) = rank_contribution(&f, &pairs, 1.0);
        assert_abs_diff_eq!(loss, 0.75, epsilon = 1e-15);
        assert_eq!(g[1], 0.0);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[2], -1.0);
    }

    #[test]
    fn duplicated_points_with_quarter_gamma_keep_the_decision_function() {
        let ds = aft_instance(3, 10, false);
        let model = fit_rank_svm(&ds, Kernel::Linear, 2.0, &SvmOptions::default()).unwrap();
        let mut times = ds.times().to_vec();
        times.extend_from_slice(ds.times());
        let mut events = ds.events().to_vec();
        events.extend_from_slice(ds.events());
        let mut rows: Vec<Vec<f64>> = (0..ds.n()).map(|i| ds.covariate_row(i).to_vec()).collect();
        let copy = rows.clone();
        rows.extend(copy);
        let doubled = dataset(&times, &events, &rows);
        // Each comparable pair becomes four copies, so gamma/4 compensates.
        let model2 = fit_rank_svm(&doubled, Kernel::Linear, 0.5, &SvmOptions::default()).unwrap();
        let f1 = model.predict(&ds.x().view()).unwrap();
        let f2 = model2.predict(&ds.x().view()).unwrap();
        for (a, b) in f1.iter().zip(&f2) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn rbf_kernel_beats_linear_on_sinusoidal_risk() {
        let mut rng = stream_rng(17, 0);
        let gen = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let mut rows = Vec::with_capacity(n);
            let mut times = Vec::with_capacity(n);
            for _ in 0..n {
                let x: f64 = rng.gen_range(-3.0..3.0);
                let e: f64 = StandardNormal.sample(rng);
                rows.push(vec![x]);
                times.push((-x.sin() + 0.2 * e).exp());
            }
            dataset(&times, &vec![true; n], &rows)
        };
        let train = gen(&mut rng, 80);
        let test = gen(&mut rng, 60);
        let opts = SvmOptions::default();
        let linear = fit_rank_svm(&train, Kernel::Linear, 1.0, &opts).unwrap();
        let bw = median_pairwise_bandwidth(&train, 1).unwrap();
        let rbf = fit_rank_svm(&train, Kernel::Rbf { bandwidth: bw }, 1.0, &opts).unwrap();
        let c_of = |model: &SvmModel| {
            let f = model.predict(&test.x().view()).unwrap();
            let risk: Vec<f64> = f.iter().map(|v| -v).collect();
            c_index(test.times(), test.events(), &risk).unwrap()
        };
        let (cl, cr) = (c_of(&linear), c_of(&rbf));
        assert!(cr > cl, "rbf {cr} vs linear {cl}");
        assert!(cr > 0.8, "rbf {cr}");
    }

    #[test]
    fn constant_outcome_is_interpolated() {
        let mut rng = stream_rng(23, 0);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
        let times = vec![2.0f64.exp(); 20];
        let ds = dataset(&times, &vec![true; 20], &rows);
        let model = fit_regression_svm(&ds, Kernel::Linear, 1.0, &SvmOptions::default()).unwrap();
        let preds = model.predict(&ds.x().view()).unwrap();
        for p in preds {
            assert_abs_diff_eq!(p, 2.0, epsilon = 0.05);
        }
    }

    #[test]
    fn censored_rows_above_their_time_cost_nothing() {
        let z = [1.0, 1.0];
        let events = [false, true];
        let (l0, g, ga) = regression_contribution(&z, &events, &[1.5, 1.0], 0.0, 1.0);
        // Censored row predicted above its observed time: no loss, no pull.
        assert_eq!(l0, 0.0);
        assert_eq!(g[0], 0.0);
        assert_eq!(ga, 0.0);
        let (l1, ..) = regression_contribution(&z, &events, &[2.5, 1.0], 0.0, 1.0);
        assert_eq!(l1, 0.0);
        // The same overestimation on an event row costs the excess.
        let (l2, ..) = regression_contribution(&z, &events, &[1.0, 2.0], 0.0, 1.0);
        assert_abs_diff_eq!(l2, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn regression_beats_the_intercept_baseline_out_of_sample() {
        let train = aft_instance(31, 100, true);
        let test = aft_instance(32, 80, false);
        let opts = SvmOptions::default();
        let model = fit_regression_svm(&train, Kernel::Linear, 1.0, &opts).unwrap();
        let zero_rows: Vec<Vec<f64>> = vec![vec![0.0, 0.0]; train.n()];
        let flat = dataset(train.times(), train.events(), &zero_rows);
        let baseline = fit_regression_svm(&flat, Kernel::Linear, 1.0, &opts).unwrap();
        let truth: Vec<f64> = test.times().iter().map(|t| t.ln()).collect();
        let mae = |preds: &[f64]| -> f64 {
            preds.iter().zip(&truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / truth.len() as f64
        };
        let model_mae = mae(&model.predict(&test.x().view()).unwrap());
        let base_mae = mae(&baseline.predict(&Array2::zeros((test.n(), 2)).view()).unwrap());
        assert!(model_mae < base_mae, "model {model_mae} vs baseline {base_mae}");
    }

    #[test]
    fn hybrid_endpoints_match_the_pure_modes_bitwise() {
        let ds = aft_instance(41, 30, true);
        let opts = SvmOptions::default();
        let rank = fit_rank_svm(&ds, Kernel::Linear, 1.5, &opts).unwrap();
        let hybrid1 = fit_hybrid_svm(&ds, Kernel::Linear, 1.5, 1.0, &opts).unwrap();
        for (a, b) in rank.dual_coefficients.iter().zip(&hybrid1.dual_coefficients) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(hybrid1.intercept, Some(0.0));
        let fr = rank.predict(&ds.x().view()).unwrap();
        let fh = hybrid1.predict(&ds.x().view()).unwrap();
        for (a, b) in fr.iter().zip(&fh) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let reg = fit_regression_svm(&ds, Kernel::Linear, 1.5, &opts).unwrap();
        let hybrid0 = fit_hybrid_svm(&ds, Kernel::Linear, 1.5, 0.0, &opts).unwrap();
        for (a, b) in reg.dual_coefficients.iter().zip(&hybrid0.dual_coefficients) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(reg.intercept.unwrap().to_bits(), hybrid0.intercept.unwrap().to_bits());
    }

    #[test]
    fn hybrid_objective_sits_between_the_pure_optima() {
        let ds = aft_instance(43, 40, true);
        let opts = SvmOptions::default();
        let o_rank = fit_rank_svm(&ds, Kernel::Linear, 1.0, &opts).unwrap().objective;
        let o_reg = fit_regression_svm(&ds, Kernel::Linear, 1.0, &opts).unwrap().objective;
        let o_half = fit_hybrid_svm(&ds, Kernel::Linear, 1.0, 0.5, &opts).unwrap().objective;
        let lo = o_rank.min(o_reg);
        let hi = o_rank.max(o_reg);
        assert!(o_half >= lo && o_half <= hi, "{o_half} outside [{lo}, {hi}]");
    }

    #[test]
    fn averaged_objective_trace_is_monotone() {
        let ds = aft_instance(47, 50, true);
        let opts = SvmOptions::default();
        let bw = median_pairwise_bandwidth(&ds, 2).unwrap();
        for model in [
            fit_rank_svm(&ds, Kernel::Linear, 1.0, &opts).unwrap(),
            fit_regression_svm(&ds, Kernel::Rbf { bandwidth: bw }, 2.0, &opts).unwrap(),
            fit_hybrid_svm(&ds, Kernel::Linear, 1.0, 0.3, &opts).unwrap(),
        ] {
            for w in model.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-8, "trace rose: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn gram_matrices_are_symmetric_positive_semidefinite() {
        let ds = aft_instance(53, 25, false);
        let bw = median_pairwise_bandwidth(&ds, 3).unwrap();
        for kernel in [Kernel::Linear, Kernel::Rbf { bandwidth: bw }] {
            let n = ds.n();
            let mut k = Array2::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    k[(i, j)] = kernel.value(&ds.covariate_row(i).to_vec(), &ds.covariate_row(j).to_vec());
                }
            }
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(k[(i, j)].to_bits(), k[(j, i)].to_bits());
                }
            }
            for i in 0..n {
                k[(i, i)] += 1e-10;
            }
            assert!(linalg::cholesky(&k).is_ok());
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let all_censored = dataset(&[1.0, 2.0], &[false, false], &[vec![0.0], vec![1.0]]);
        assert!(fit_rank_svm(&all_censored, Kernel::Linear, 1.0, &SvmOptions::default()).is_err());
        let tied = dataset(&[2.0, 2.0], &[true, true], &[vec![0.0], vec![1.0]]);
        assert!(fit_rank_svm(&tied, Kernel::Linear, 1.0, &SvmOptions::default()).is_err());
        assert!(fit_regression_svm(&all_censored, Kernel::Linear, 1.0, &SvmOptions::default()).is_err());
        let ds = dataset(&[1.0, 2.0], &[true, true], &[vec![0.0], vec![1.0]]);
        assert!(fit_rank_svm(&ds, Kernel::Rbf { bandwidth: 0.0 }, 1.0, &SvmOptions::default()).is_err());
        assert!(fit_rank_svm(&ds, Kernel::Linear, -1.0, &SvmOptions::default()).is_err());
        assert!(fit_hybrid_svm(&ds, Kernel::Linear, 1.0, 1.5, &SvmOptions::default()).is_err());
    }

    #[test]
    fn pair_cap_subsamples_deterministically() {
        let ds = aft_instance(59, 40, false);
        let opts = SvmOptions {
            pair_cap: 100,
            ..SvmOptions::default()
        };
        let a = fit_rank_svm(&ds, Kernel::Linear, 1.0, &opts).unwrap();
        let b = fit_rank_svm(&ds, Kernel::Linear, 1.0, &opts).unwrap();
        assert!(a.warnings.iter().any(|w| w.contains("subsampled")));
        for (x, y) in a.dual_coefficients.iter().zip(&b.dual_coefficients) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn bandwidth_heuristic_scales_with_the_data() {
        let ds = aft_instance(61, 30, false);
        let rows: Vec<Vec<f64>> = (0..ds.n()).map(|i| ds.covariate_row(i).iter().map(|v| 2.0 * v).collect()).collect();
        let scaled = dataset(ds.times(), ds.events(), &rows);
        let b1 = median_pairwise_bandwidth(&ds, 5).unwrap();
        let b2 = median_pairwise_bandwidth(&scaled, 5).unwrap();
        assert!(b1 > 0.0);
        assert_abs_diff_eq!(b2, 2.0 * b1, epsilon = 1e-12);
    }

    #[test]
    fn model_serializes_to_json() {
        let ds = aft_instance(67, 12, true);
        let model = fit_hybrid_svm(&ds, Kernel::Linear, 1.0, 0.5, &SvmOptions::default()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        assert!(json.contains("dual_coefficients"));
        assert!(json.contains("mix"));
    }
}
