//! Survival trees grown by recursive partitioning with log-rank splits,
//! bootstrap-aggregated and random-subspace forests of such trees, and
//! gradient boosting of the Cox partial likelihood with least-squares
//! regression-tree learners.

use crate::coxcore::PartialLikelihood;
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::nonparam::{c_index, kaplan_meier, logrank_with_order, nelson_aalen, StepFunction};
use crate::util::{argsort, chi_square_1df_sf, stream_rng};
use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How candidate splits are scored. The residual criteria score the
/// between-child sum of squares of null-model martingale or deviance
/// residuals against a chi-square(1) reference, so all three criteria share
/// the same significance gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitCriterion {
    LogRank,
    MartingaleResiduals,
    DevianceResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    /// Smallest number of events allowed in any terminal node.
    pub min_events: usize,
    /// Depth at which nodes stop splitting; the root sits at depth 0.
    pub max_depth: usize,
    /// Significance level the best candidate split must reach before a node
    /// divides. The gate compares the raw per-node best statistic to a
    /// single chi-square(1) threshold; no multiplicity adjustment is made
    /// across candidate features or thresholds.
    pub alpha_stop: f64,
    pub criterion: SplitCriterion,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            min_events: 5,
            max_depth: 30,
            alpha_stop: 0.05,
            criterion: SplitCriterion::LogRank,
        }
    }
}

impl TreeOptions {
    fn validate(&self) -> Result<()> {
        if self.min_events == 0 {
            return Err(Error::validation("min_events must be at least 1"));
        }
        if !(self.alpha_stop > 0.0 && self.alpha_stop <= 1.0) {
            return Err(Error::validation(format!(
                "alpha_stop {} must lie in (0, 1]",
                self.alpha_stop
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Terminal {
        survival: StepFunction,
        chf: StepFunction,
        n_node: usize,
        events_node: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    /// Arena with the root at index 0; split children point into the arena.
    pub nodes: Vec<Node>,
    pub options: TreeOptions,
    pub n_features: usize,
}

impl SurvivalTree {
    pub fn n_terminals(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Terminal { .. }))
            .count()
    }

    /// Arena index of the terminal that x routes to; values equal to a
    /// threshold go left.
    pub fn leaf_for(&self, x: &ArrayView1<f64>) -> Result<usize> {
        if x.len() != self.n_features {
            return Err(Error::validation(format!(
                "expected {} covariates, got {}",
                self.n_features,
                x.len()
            )));
        }
        if self.nodes.is_empty() {
            return Err(Error::validation("tree has no nodes"));
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Terminal { .. } => return Ok(at),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x[*feature];
                    if !v.is_finite() {
                        return Err(Error::validation(format!(
                            "covariate {feature} is not finite"
                        )));
                    }
                    at = if v <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

pub struct TreePrediction<'t> {
    pub survival: &'t StepFunction,
    pub chf: &'t StepFunction,
    /// Arena index of the terminal that produced the curves.
    pub node: usize,
}

pub fn predict_tree<'t>(tree: &'t SurvivalTree, x: &ArrayView1<f64>) -> Result<TreePrediction<'t>> {
    let node = tree.leaf_for(x)?;
    match &tree.nodes[node] {
        Node::Terminal { survival, chf, .. } => Ok(TreePrediction {
            survival,
            chf,
            node,
        }),
        Node::Split { .. } => Err(Error::numerical("routing stopped at a split node")),
    }
}

/// Grow a tree on the full dataset. Forest fitting goes through
/// `grow_on_rows` directly so each tree sees its own bootstrap multiset.
pub fn grow_tree(ds: &SurvivalDataset, opts: &TreeOptions) -> Result<SurvivalTree> {
    grow_on_rows(ds, (0..ds.n()).collect(), opts, ds.p(), stream_rng(0, 0))
}

fn grow_on_rows(
    ds: &SurvivalDataset,
    rows: Vec<usize>,
    opts: &TreeOptions,
    mtry: usize,
    rng: ChaCha8Rng,
) -> Result<SurvivalTree> {
    opts.validate()?;
    let events = rows.iter().filter(|&&r| ds.events()[r]).count();
    if events < 2 * opts.min_events {
        return Err(Error::validation(format!(
            "growing a tree needs at least {} events at the root, found {events}",
            2 * opts.min_events
        )));
    }
    let mut grower = Grower {
        ds,
        opts,
        mtry,
        rng,
        nodes: Vec::new(),
    };
    grower.grow(rows, 0)?;
    Ok(SurvivalTree {
        nodes: grower.nodes,
        options: opts.clone(),
        n_features: ds.p(),
    })
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    statistic: f64,
    p_value: f64,
}

struct Grower<'d> {
    ds: &'d SurvivalDataset,
    opts: &'d TreeOptions,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> Result<usize> {
        let times: Vec<f64> = rows.iter().map(|&r| self.ds.times()[r]).collect();
        let events: Vec<bool> = rows.iter().map(|&r| self.ds.events()[r]).collect();
        let d_node = events.iter().filter(|&&e| e).count();
        // A split must leave min_events events on each side, so nodes short
        // of twice that can never divide and skip the scan entirely.
        let splittable =
            depth < self.opts.max_depth && d_node >= 2 * self.opts.min_events && self.ds.p() > 0;
        let best = if splittable {
            self.best_split(&rows, &times, &events)?
        } else {
            None
        };
        let best = match best {
            Some(b) if b.p_value < self.opts.alpha_stop => b,
            _ => return self.push_terminal(&times, &events),
        };
        let x = self.ds.x();
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in &rows {
            if x[[r, best.feature]] <= best.threshold {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let l = self.grow(left_rows, depth + 1)?;
        let r = self.grow(right_rows, depth + 1)?;
        if let Node::Split { left, right, .. } = &mut self.nodes[at] {
            *left = l;
            *right = r;
        }
        Ok(at)
    }

    fn push_terminal(&mut self, times: &[f64], events: &[bool]) -> Result<usize> {
        let survival = kaplan_meier(times, events)?;
        let chf = nelson_aalen(times, events)?;
        self.nodes.push(Node::Terminal {
            survival,
            chf,
            n_node: times.len(),
            events_node: events.iter().filter(|&&e| e).count(),
        });
        Ok(self.nodes.len() - 1)
    }

    /// Features considered at one split. With mtry = p the draw is skipped,
    /// so bagging consumes no randomness beyond the bootstrap and a forest
    /// with full mtry reproduces it exactly.
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.ds.p();
        if self.mtry >= p {
            return (0..p).collect();
        }
        let mut idx: Vec<usize> = (0..p).collect();
        for k in 0..self.mtry {
            let j = self.rng.gen_range(k..p);
            idx.swap(k, j);
        }
        idx.truncate(self.mtry);
        idx.sort_unstable();
        idx
    }

    /// Largest-statistic candidate over midpoints of sorted unique values,
    /// restricted to splits leaving min_events events in both children. The
    /// significance gate is applied by the caller.
    fn best_split(
        &mut self,
        rows: &[usize],
        times: &[f64],
        events: &[bool],
    ) -> Result<Option<BestSplit>> {
        let n = rows.len();
        let features = self.candidate_features();
        let order = argsort(times);
        let d_node = events.iter().filter(|&&e| e).count();
        let residuals = match self.opts.criterion {
            SplitCriterion::LogRank => None,
            SplitCriterion::MartingaleResiduals => Some(node_residuals(times, events, false)?),
            SplitCriterion::DevianceResiduals => Some(node_residuals(times, events, true)?),
        };
        let x = self.ds.x();
        let mut mask = vec![false; n];
        let mut best: Option<BestSplit> = None;
        for j in features {
            let vals: Vec<f64> = rows.iter().map(|&r| x[[r, j]]).collect();
            let mut uniq = vals.clone();
            uniq.sort_unstable_by(f64::total_cmp);
            uniq.dedup();
            for w in uniq.windows(2) {
                let (a, b) = (w[0], w[1]);
                let mut thr = a + 0.5 * (b - a);
                // adjacent floats can round the midpoint onto an endpoint
                if !(thr > a && thr < b) {
                    thr = a;
                }
                let mut left_events = 0usize;
                for k in 0..n {
                    mask[k] = vals[k] <= thr;
                    if mask[k] && events[k] {
                        left_events += 1;
                    }
                }
                if left_events < self.opts.min_events
                    || d_node - left_events < self.opts.min_events
                {
                    continue;
                }
                let (statistic, p_value) = match &residuals {
                    None => {
                        let lr = logrank_with_order(&order, times, events, &mask);
                        (lr.statistic, lr.p_value)
                    }
                    Some(res) => residual_split_statistic(res, &mask),
                };
                if best.as_ref().map_or(true, |cur| statistic > cur.statistic) {
                    best = Some(BestSplit {
                        feature: j,
                        threshold: thr,
                        statistic,
                        p_value,
                    });
                }
            }
        }
        Ok(best)
    }
}

/// Null-model martingale residuals within a node, delta_i - H(Y_i) with H
/// the node Nelson-Aalen estimate; optionally transformed to deviance form.
fn node_residuals(times: &[f64], events: &[bool], deviance: bool) -> Result<Vec<f64>> {
    let chf = nelson_aalen(times, events)?;
    let mart: Vec<f64> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| if e { 1.0 } else { 0.0 } - chf.eval(t))
        .collect();
    if !deviance {
        return Ok(mart);
    }
    Ok(mart
        .iter()
        .zip(events)
        .map(|(&m, &e)| {
            let event_term = if e { (1.0 - m).ln() } else { 0.0 };
            let arg = (-2.0 * (m + event_term)).max(0.0);
            m.signum() * arg.sqrt()
        })
        .collect())
}

/// Between-child sum of squares over the node residual variance; under a
/// null split this is approximately chi-square with one degree of freedom.
fn residual_split_statistic(residuals: &[f64], mask: &[bool]) -> (f64, f64) {
    let n = residuals.len() as f64;
    let mut n1 = 0.0;
    let mut s1 = 0.0;
    let mut s = 0.0;
    for (r, &m) in residuals.iter().zip(mask) {
        s += r;
        if m {
            n1 += 1.0;
            s1 += r;
        }
    }
    let n2 = n - n1;
    if n1 == 0.0 || n2 == 0.0 {
        return (0.0, 1.0);
    }
    let mean = s / n;
    let tss: f64 = residuals.iter().map(|r| (r - mean) * (r - mean)).sum();
    if tss <= f64::EPSILON * n {
        return (0.0, 1.0);
    }
    let diff = s1 / n1 - (s - s1) / n2;
    let bss = n1 * n2 / n * diff * diff;
    let statistic = bss / (tss / (n - 1.0));
    (statistic, chi_square_1df_sf(statistic))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<SurvivalTree>,
    pub b: usize,
    /// Features drawn per split; equal to p this reproduces bagging exactly.
    pub mtry: usize,
    /// Rows of the training data left out of each tree's bootstrap sample.
    pub oob_indices: Vec<Vec<usize>>,
    pub seed: u64,
    /// Distinct training event times, the fixed grid over which mortality
    /// accumulates the ensemble CHF.
    pub event_times: Vec<f64>,
}

/// Bootstrap-aggregated survival trees; every split sees all features.
pub fn bagging_fit(ds: &SurvivalDataset, b: usize, opts: &TreeOptions, seed: u64) -> Result<Forest> {
    fit_forest(ds, b, ds.p(), opts, seed, true)
}

/// Random survival forest: bagging plus a fresh mtry-feature draw per split.
pub fn rsf_fit(
    ds: &SurvivalDataset,
    b: usize,
    mtry: usize,
    opts: &TreeOptions,
    seed: u64,
) -> Result<Forest> {
    fit_forest(ds, b, mtry, opts, seed, true)
}

fn fit_forest(
    ds: &SurvivalDataset,
    b: usize,
    mtry: usize,
    opts: &TreeOptions,
    seed: u64,
    bootstrap: bool,
) -> Result<Forest> {
    opts.validate()?;
    if b == 0 {
        return Err(Error::validation("a forest needs at least one tree"));
    }
    if mtry == 0 || mtry > ds.p() {
        return Err(Error::validation(format!(
            "mtry {mtry} must lie in 1..={}",
            ds.p()
        )));
    }
    let n = ds.n();
    let grown: Result<Vec<(SurvivalTree, Vec<usize>)>> = (0..b)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64 + 1);
            let (rows, oob) = if bootstrap {
                let mut in_bag = vec![false; n];
                let rows: Vec<usize> = (0..n)
                    .map(|_| {
                        let i = rng.gen_range(0..n);
                        in_bag[i] = true;
                        i
                    })
                    .collect();
                let oob = (0..n).filter(|&i| !in_bag[i]).collect();
                (rows, oob)
            } else {
                ((0..n).collect(), Vec::new())
            };
            let tree = grow_on_rows(ds, rows, opts, mtry, rng)?;
            Ok((tree, oob))
        })
        .collect();
    let mut trees = Vec::with_capacity(b);
    let mut oob_indices = Vec::with_capacity(b);
    for (tree, oob) in grown? {
        trees.push(tree);
        oob_indices.push(oob);
    }
    let mut event_times: Vec<f64> = ds
        .times()
        .iter()
        .zip(ds.events())
        .filter(|(_, &e)| e)
        .map(|(&t, _)| t)
        .collect();
    event_times.sort_unstable_by(f64::total_cmp);
    event_times.dedup();
    Ok(Forest {
        trees,
        b,
        mtry,
        oob_indices,
        seed,
        event_times,
    })
}

impl Forest {
    /// Pointwise mean of the per-tree Kaplan-Meier curves.
    pub fn predict_survival(&self, x: &ArrayView1<f64>) -> Result<StepFunction> {
        let curves = self
            .trees
            .iter()
            .map(|t| Ok(predict_tree(t, x)?.survival))
            .collect::<Result<Vec<_>>>()?;
        average_step_functions(&curves)
    }

    /// Pointwise mean of the per-tree Nelson-Aalen cumulative hazards.
    pub fn predict_chf(&self, x: &ArrayView1<f64>) -> Result<StepFunction> {
        let curves = self
            .trees
            .iter()
            .map(|t| Ok(predict_tree(t, x)?.chf))
            .collect::<Result<Vec<_>>>()?;
        average_step_functions(&curves)
    }

    /// Mortality risk score: the ensemble CHF summed over the training
    /// event-time grid. Evaluating every subject on one shared grid keeps
    /// the scores comparable; the CHF's own final value is not, since a
    /// slow-failing node accrues hazard over a longer horizon.
    pub fn mortality(&self, x: &ArrayView1<f64>) -> Result<f64> {
        let chf = self.predict_chf(x)?;
        Ok(self.event_times.iter().map(|&t| chf.eval(t)).sum())
    }

    /// 1 - C-index of out-of-bag mortality, each subject scored only by
    /// trees whose bootstrap sample excluded it. Subjects in every sample
    /// are skipped.
    pub fn oob_error(&self, ds: &SurvivalDataset) -> Result<f64> {
        let n = ds.n();
        let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, oob) in self.oob_indices.iter().enumerate() {
            for &i in oob {
                if i >= n {
                    return Err(Error::validation(
                        "out-of-bag index exceeds the dataset rows",
                    ));
                }
                member[i].push(t);
            }
        }
        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut scores = Vec::new();
        for i in 0..n {
            if member[i].is_empty() {
                continue;
            }
            let x = ds.covariate_row(i);
            let curves = member[i]
                .iter()
                .map(|&t| Ok(predict_tree(&self.trees[t], &x)?.chf))
                .collect::<Result<Vec<_>>>()?;
            let chf = average_step_functions(&curves)?;
            scores.push(self.event_times.iter().map(|&t| chf.eval(t)).sum());
            times.push(ds.times()[i]);
            events.push(ds.events()[i]);
        }
        if times.len() < 2 {
            return Err(Error::validation(
                "too few out-of-bag subjects for a concordance estimate",
            ));
        }
        Ok(1.0 - c_index(&times, &events, &scores)?)
    }
}

/// Pointwise mean of step functions on the union of their knots; the mean
/// is again right-continuous because every input is.
pub fn average_step_functions(curves: &[&StepFunction]) -> Result<StepFunction> {
    if curves.is_empty() {
        return Err(Error::validation("cannot average zero curves"));
    }
    let mut knots: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.knots.iter().copied())
        .collect();
    knots.sort_unstable_by(f64::total_cmp);
    knots.dedup();
    let inv = 1.0 / curves.len() as f64;
    let values = knots
        .iter()
        .map(|&t| curves.iter().map(|c| c.eval(t)).sum::<f64>() * inv)
        .collect();
    let left = curves.iter().map(|c| c.left_value).sum::<f64>() * inv;
    StepFunction::new(knots, values, left)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegressionNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Depth-limited least-squares regression tree; the boosting weak learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<RegressionNode>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict(&self, x: &ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::validation(format!(
                "expected {} covariates, got {}",
                self.n_features,
                x.len()
            )));
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                RegressionNode::Leaf { value } => return Ok(*value),
                RegressionNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x[*feature];
                    if !v.is_finite() {
                        return Err(Error::validation(format!(
                            "covariate {feature} is not finite"
                        )));
                    }
                    at = if v <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Fit to (x, targets) and also return the fitted value per row.
    fn fit(x: &ArrayView2<f64>, targets: &[f64], max_depth: usize) -> (Self, Vec<f64>) {
        let mut grower = LsGrower {
            x: x.view(),
            targets,
            max_depth,
            nodes: Vec::new(),
            fitted: vec![0.0; targets.len()],
        };
        grower.grow((0..targets.len()).collect(), 0);
        let tree = RegressionTree {
            nodes: grower.nodes,
            n_features: x.ncols(),
        };
        (tree, grower.fitted)
    }
}

struct LsGrower<'d> {
    x: ArrayView2<'d, f64>,
    targets: &'d [f64],
    max_depth: usize,
    nodes: Vec<RegressionNode>,
    fitted: Vec<f64>,
}

impl LsGrower<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let sum: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let mean = sum / rows.len() as f64;
        let cut = if depth < self.max_depth && rows.len() >= 2 {
            self.best_cut(&rows)
        } else {
            None
        };
        match cut {
            None => {
                for &r in &rows {
                    self.fitted[r] = mean;
                }
                self.nodes.push(RegressionNode::Leaf { value: mean });
                self.nodes.len() - 1
            }
            Some((feature, threshold)) => {
                let mut left_rows = Vec::new();
                let mut right_rows = Vec::new();
                for &r in &rows {
                    if self.x[[r, feature]] <= threshold {
                        left_rows.push(r);
                    } else {
                        right_rows.push(r);
                    }
                }
                let at = self.nodes.len();
                self.nodes.push(RegressionNode::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let l = self.grow(left_rows, depth + 1);
                let r = self.grow(right_rows, depth + 1);
                if let RegressionNode::Split { left, right, .. } = &mut self.nodes[at] {
                    *left = l;
                    *right = r;
                }
                at
            }
        }
    }

    /// Cut with the largest sum-of-squares reduction, found by a prefix-sum
    /// scan per feature; None when no cut strictly reduces the node SSE.
    fn best_cut(&self, rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let base = total * total / n;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.x.ncols() {
            let mut idx = rows.to_vec();
            idx.sort_unstable_by(|&a, &b| self.x[[a, j]].total_cmp(&self.x[[b, j]]));
            let mut run = 0.0;
            for k in 1..idx.len() {
                run += self.targets[idx[k - 1]];
                let a = self.x[[idx[k - 1], j]];
                let b = self.x[[idx[k], j]];
                if a == b {
                    continue;
                }
                let n_l = k as f64;
                let score = run * run / n_l + (total - run) * (total - run) / (n - n_l);
                if score > base && best.as_ref().map_or(true, |&(_, _, s)| score > s) {
                    let mut thr = a + 0.5 * (b - a);
                    if !(thr > a && thr < b) {
                        thr = a;
                    }
                    best = Some((j, thr, score));
                }
            }
        }
        best.map(|(j, t, _)| (j, t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostFit {
    /// F_0; the ensemble starts from an all-zero linear predictor.
    pub baseline: f64,
    pub learners: Vec<RegressionTree>,
    /// Step sizes actually taken, one per learner; halved from the requested
    /// w whenever a full step would raise the training loss.
    pub weights: Vec<f64>,
    pub m_steps: usize,
    pub seed: u64,
    /// Training negative log partial likelihood after 0..=M steps.
    pub train_negpl: Vec<f64>,
}

impl BoostFit {
    pub fn predict(&self, x: &ArrayView2<f64>) -> Result<Vec<f64>> {
        if let Some(first) = self.learners.first() {
            if x.ncols() != first.n_features {
                return Err(Error::validation(format!(
                    "expected {} covariates, got {}",
                    first.n_features,
                    x.ncols()
                )));
            }
        }
        let mut out = vec![self.baseline; x.nrows()];
        for (tree, &w) in self.learners.iter().zip(&self.weights) {
            for (i, row) in x.rows().into_iter().enumerate() {
                out[i] += w * tree.predict(&row)?;
            }
        }
        Ok(out)
    }
}

/// Gradient boosting of the Cox loss: pseudo-residuals are the pointwise
/// negative gradient of the negative log partial likelihood in the current
/// per-subject predictions, fitted by a depth-limited least-squares tree.
/// The fit is deterministic; the seed is recorded for run manifests.
pub fn boost_fit(
    ds: &SurvivalDataset,
    m: usize,
    w: f64,
    tree_depth: usize,
    seed: u64,
) -> Result<BoostFit> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::validation(format!(
            "step size {w} must lie in (0, 1]"
        )));
    }
    if tree_depth == 0 {
        return Err(Error::validation("boosting trees need depth at least 1"));
    }
    let pl = PartialLikelihood::for_dataset(ds)?;
    let x = ds.x().view();
    let mut eta = Array1::zeros(ds.n());
    let mut trace = vec![pl.value(&eta)?];
    let mut learners = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        let (_, grad) = pl.value_and_eta_gradient(&eta)?;
        let residuals: Vec<f64> = grad.iter().map(|g| -g).collect();
        let (tree, fitted) = RegressionTree::fit(&x, &residuals, tree_depth);
        let direction = Array1::from(fitted);
        let current = *trace.last().unwrap();
        let mut step = w;
        let mut halvings = 0;
        loop {
            let candidate = &eta + &(&direction * step);
            let value = pl.value(&candidate)?;
            if value <= current {
                eta = candidate;
                trace.push(value);
                break;
            }
            halvings += 1;
            if halvings > 40 {
                return Err(Error::numerical(
                    "boosting step failed to decrease the partial likelihood",
                ));
            }
            step *= 0.5;
        }
        learners.push(tree);
        weights.push(step);
    }
    Ok(BoostFit {
        baseline: 0.0,
        learners,
        weights,
        m_steps: m,
        seed,
        train_negpl: trace,
    })
}
