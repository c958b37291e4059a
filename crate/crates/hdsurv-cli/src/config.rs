//! Per-command run configurations. Everything structured lives in the JSON
//! config file; the command line carries only paths, the seed, and the
//! thread bound, which overwrite the matching fields before parsing.

use std::path::PathBuf;

use hdsurv::aftdantzig::DantzigOptions;
use hdsurv::coxcore::CoxOptions;
use hdsurv::coxnet::PathOptions;
use hdsurv::data::{IllnessDeathSchema, SurvivalSchema};
use hdsurv::error::{Error, Result};
use hdsurv::mlp::TrainOptions;
use hdsurv::penalties::{PenaltyKind, PenaltySpec};
use hdsurv::scr::{HyperPoint, ScrMode, ScrOptions};
use hdsurv::simulate::SimSpec;
use hdsurv::svm::SvmOptions;
use hdsurv::trees::{SplitCriterion, TreeOptions};
use ndarray::Array2;
use serde::Deserialize;

/// Draws a synthetic dataset and writes it as CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: SimSpec,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Fits a Cox-family model: Newton MPLE, a penalized path (or one point of
/// it), or a partial-likelihood network.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub method: Option<MethodConfig>,
    pub output: PathBuf,
    /// Tidy eta/j/beta table, written for path fits only.
    #[serde(default)]
    pub csv_output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    Cox {
        #[serde(default)]
        options: CoxOptionsConfig,
    },
    CoxNet {
        hidden: Vec<usize>,
        #[serde(default)]
        train: TrainConfig,
    },
    /// `penalty.eta` set fits that single point; unset traces the path.
    Penalized {
        penalty: PenaltyConfig,
        #[serde(default)]
        path: PathOptionsConfig,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub groups: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
}

impl PenaltyConfig {
    /// Builds the spec at the given tuning value; path and cross-validation
    /// modes generate their own grid and pass a placeholder here.
    pub fn build(&self, eta: f64) -> Result<PenaltySpec> {
        let mut spec = PenaltySpec::new(self.kind, eta);
        if let Some(alpha) = self.alpha {
            spec = spec.with_alpha(alpha);
        }
        if let Some(weights) = &self.weights {
            spec = spec.with_weights(weights.clone());
        }
        if let Some(groups) = &self.groups {
            spec = spec.with_groups(groups.clone());
        }
        if let Some(sigma) = &self.sigma {
            spec = spec.with_sigma(rows_to_matrix(sigma, "sigma")?);
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoxOptionsConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl CoxOptionsConfig {
    pub fn build(&self) -> CoxOptions {
        let mut opts = CoxOptions::default();
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        opts
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
}

impl TrainConfig {
    pub fn build(&self, seed: u64) -> TrainOptions {
        let mut opts = TrainOptions {
            seed,
            ..TrainOptions::default()
        };
        if let Some(v) = self.lr {
            opts.lr = v;
        }
        if let Some(v) = self.epochs {
            opts.epochs = v;
        }
        if let Some(v) = self.dropout {
            opts.dropout = v;
        }
        opts
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathOptionsConfig {
    pub n_etas: Option<usize>,
    pub eta_min_ratio: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub scad_lla_steps: Option<usize>,
}

impl PathOptionsConfig {
    pub fn build(&self) -> PathOptions {
        let mut opts = PathOptions::default();
        if let Some(v) = self.n_etas {
            opts.n_etas = v;
        }
        if let Some(v) = self.eta_min_ratio {
            opts.eta_min_ratio = v;
        }
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        if let Some(v) = self.scad_lla_steps {
            opts.scad_lla_steps = v;
        }
        opts
    }
}

/// Scores held-out covariates with a fitted model artifact.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub model: PathBuf,
    /// Covariate CSV; `drop_columns` removes outcome columns first.
    pub input: PathBuf,
    pub output: PathBuf,
    #[serde(default)]
    pub drop_columns: Vec<String>,
    /// Evaluation grid for curve-producing models; required for the
    /// semi-competing model, defaults to the training event grid for
    /// forests, and switches Cox output from scores to survival curves.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    /// Path-fit artifacts only: evaluate at this grid value instead of the
    /// cross-validated choice.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Forest artifacts only: per-row ensemble mortality CSV.
    #[serde(default)]
    pub mortality_output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Marginal screening; `d` defaults to n / log n.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub method: ScreenMethod,
    #[serde(default)]
    pub d: Option<usize>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenMethod {
    Cox,
    Concordance,
}

/// Resampled post-selection inference.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparesConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub selector: SelectorConfig,
    pub family: FamilyConfig,
    /// Half-sample resamples.
    pub b: usize,
    #[serde(default)]
    pub finite_b_correction: bool,
    pub output: PathBuf,
    #[serde(default)]
    pub csv_output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectorConfig {
    /// Marginal correlation screening; `d` defaults to n / log n.
    Sis {
        #[serde(default)]
        d: Option<usize>,
    },
    /// Cross-validated lasso on the selection half.
    LassoCv { k: usize },
    /// Fixed support, bypassing data-driven selection.
    Oracle { support: Vec<usize> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Linear,
    Cox,
    Cqr { tau: f64 },
    /// One aggregated inference per grid level; `taus` defaults to the
    /// standard 0.05..0.70 grid.
    FusedCqr {
        #[serde(default)]
        taus: Option<Vec<f64>>,
    },
}

/// Censored quantile regression over a tau grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqrConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    #[serde(default)]
    pub taus: Option<Vec<f64>>,
    pub output: PathBuf,
    #[serde(default)]
    pub csv_output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

/// Dantzig selector for the accelerated failure time model.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DantzigConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    /// Fixed constraint level; absent, `select` must provide the
    /// cross-validation design that picks one.
    #[serde(default)]
    pub eta_q: Option<f64>,
    #[serde(default)]
    pub select: Option<EtaSelectConfig>,
    /// Buckley-James-based adaptive constraint weights.
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default)]
    pub options: DantzigOptionsConfig,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaSelectConfig {
    pub k: usize,
    pub n_etas: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DantzigOptionsConfig {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

impl DantzigOptionsConfig {
    pub fn build(&self) -> DantzigOptions {
        let mut opts = DantzigOptions::default();
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.max_iter {
            opts.max_iter = v;
        }
        opts
    }
}

/// Survival support vector machine.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub mode: SvmModeConfig,
    pub kernel: KernelConfig,
    /// Regularization weight of the RKHS norm.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub options: SvmOptionsConfig,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn default_gamma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SvmModeConfig {
    Rank,
    Regression,
    Hybrid { mix: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Linear,
    Rbf { bandwidth: f64 },
    /// Gaussian kernel at the median pairwise distance heuristic.
    RbfMedian,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmOptionsConfig {
    pub epochs: Option<usize>,
    pub step_scale: Option<f64>,
    pub pair_cap: Option<usize>,
    pub eval_every: Option<usize>,
}

impl SvmOptionsConfig {
    pub fn build(&self, seed: u64) -> SvmOptions {
        let mut opts = SvmOptions {
            seed,
            ..SvmOptions::default()
        };
        if let Some(v) = self.epochs {
            opts.epochs = v;
        }
        if let Some(v) = self.step_scale {
            opts.step_scale = v;
        }
        if let Some(v) = self.pair_cap {
            opts.pair_cap = v;
        }
        if let Some(v) = self.eval_every {
            opts.eval_every = v;
        }
        opts
    }
}

/// Random survival forest (bagging when `mtry` equals p).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub b: usize,
    /// Features drawn per split; defaults to ceil(sqrt(p)).
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default)]
    pub tree: TreeConfig,
    /// Score out-of-bag prediction error after fitting.
    #[serde(default = "default_true")]
    pub oob: bool,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    pub min_events: Option<usize>,
    pub max_depth: Option<usize>,
    pub alpha_stop: Option<f64>,
    pub criterion: Option<SplitRule>,
}

impl TreeConfig {
    pub fn build(&self) -> TreeOptions {
        let mut opts = TreeOptions::default();
        if let Some(v) = self.min_events {
            opts.min_events = v;
        }
        if let Some(v) = self.max_depth {
            opts.max_depth = v;
        }
        if let Some(v) = self.alpha_stop {
            opts.alpha_stop = v;
        }
        if let Some(v) = self.criterion {
            opts.criterion = v.into();
        }
        opts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    LogRank,
    MartingaleResiduals,
    DevianceResiduals,
}

impl From<SplitRule> for SplitCriterion {
    fn from(rule: SplitRule) -> Self {
        match rule {
            SplitRule::LogRank => SplitCriterion::LogRank,
            SplitRule::MartingaleResiduals => SplitCriterion::MartingaleResiduals,
            SplitRule::DevianceResiduals => SplitCriterion::DevianceResiduals,
        }
    }
}

/// Gradient boosting of the Cox loss with shallow regression trees.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoostConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    /// Boosting steps.
    pub m: usize,
    #[serde(default = "default_shrinkage")]
    pub shrinkage: f64,
    #[serde(default = "default_tree_depth")]
    pub tree_depth: usize,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn default_shrinkage() -> f64 {
    0.1
}

fn default_tree_depth() -> usize {
    2
}

/// Semi-competing risks: the illness-death gamma-frailty model.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: IllnessDeathSchema,
    pub mode: ScrModeConfig,
    #[serde(default)]
    pub options: ScrOptionsConfig,
    /// Optional per-transition risk sweep around the covariate means.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    pub output: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScrModeConfig {
    Linear,
    /// `hidden` defaults to two layers of 16 units.
    Dnn {
        #[serde(default)]
        hidden: Option<Vec<usize>>,
    },
}

impl ScrModeConfig {
    pub fn build(&self) -> ScrMode {
        match self {
            ScrModeConfig::Linear => ScrMode::Linear,
            ScrModeConfig::Dnn { hidden } => ScrMode::Dnn {
                hidden: hidden.clone().unwrap_or_else(hdsurv::scr::default_dnn_hidden),
            },
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrOptionsConfig {
    pub lr: Option<f64>,
    pub epochs: Option<usize>,
    pub dropout: Option<f64>,
    pub bootstrap_b: Option<usize>,
    /// Explicit architecture/learning-rate/dropout grid.
    pub grid: Option<Vec<HyperPoint>>,
    /// Score the declared default grid instead of an explicit one.
    #[serde(default)]
    pub default_grid: bool,
}

impl ScrOptionsConfig {
    pub fn build(&self, seed: u64) -> Result<ScrOptions> {
        if self.default_grid && self.grid.is_some() {
            return Err(Error::validation(
                "give either an explicit grid or default_grid, not both",
            ));
        }
        let mut opts = ScrOptions {
            seed,
            ..ScrOptions::default()
        };
        if let Some(v) = self.lr {
            opts.lr = v;
        }
        if let Some(v) = self.epochs {
            opts.epochs = v;
        }
        if let Some(v) = self.dropout {
            opts.dropout = v;
        }
        if let Some(v) = self.bootstrap_b {
            opts.bootstrap_b = v;
        }
        if let Some(grid) = &self.grid {
            opts.grid = grid.clone();
        } else if self.default_grid {
            opts.grid = hdsurv::scr::default_hyper_grid();
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub feature: FeatureRef,
    pub values: SweepValues,
    pub output: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Index(usize),
    Name(String),
}

impl FeatureRef {
    pub fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            FeatureRef::Index(j) => {
                if *j >= names.len() {
                    return Err(Error::validation(format!(
                        "sweep feature index {j} out of range for {} covariates",
                        names.len()
                    )));
                }
                Ok(*j)
            }
            FeatureRef::Name(name) => names.iter().position(|n| n == name).ok_or_else(|| {
                Error::validation(format!("sweep feature {name:?} is not a covariate column"))
            }),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SweepValues {
    List(Vec<f64>),
    Range { min: f64, max: f64, count: usize },
}

impl SweepValues {
    pub fn materialize(&self) -> Result<Vec<f64>> {
        match self {
            SweepValues::List(values) => {
                if values.is_empty() {
                    return Err(Error::validation("sweep values must be non-empty"));
                }
                Ok(values.clone())
            }
            SweepValues::Range { min, max, count } => {
                if *count < 2 || !(max > min) {
                    return Err(Error::validation(
                        "sweep range needs max > min and at least two points",
                    ));
                }
                let step = (max - min) / (*count as f64 - 1.0);
                Ok((0..*count).map(|k| min + step * k as f64).collect())
            }
        }
    }
}

/// Cross-validated penalized path; `penalty.eta` is ignored because the
/// grid is generated from the data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: SurvivalSchema,
    pub penalty: PenaltyConfig,
    #[serde(default = "default_folds")]
    pub k: usize,
    #[serde(default)]
    pub path: PathOptionsConfig,
    pub output: PathBuf,
    /// Tidy eta/j/beta table of the cross-validated path.
    #[serde(default)]
    pub csv_output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

fn default_folds() -> usize {
    10
}

pub fn rows_to_matrix(rows: &[Vec<f64>], label: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::validation(format!("{label} rows have unequal lengths")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::validation(format!("{label}: {e}")))
}
