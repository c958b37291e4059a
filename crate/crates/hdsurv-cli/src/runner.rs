//! Command dispatch: parses the per-command config out of the merged JSON
//! value, runs the pipeline, and reports which files were read and written
//! so the caller can assemble the manifest.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hdsurv::error::{Error, Result};
use hdsurv::{aftdantzig, coxcore, coxnet, cqr, data, mlp, screening, scr, simulate, spares, svm, trees};
use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::artifacts::{self, Artifact, Model};
use crate::config::{
    BoostConfig, CqrConfig, CvConfig, DantzigConfig, FamilyConfig, FitConfig, ForestConfig,
    KernelConfig, MethodConfig, PredictConfig, ScreenConfig, ScreenMethod, ScrConfig,
    SelectorConfig, SimulateConfig, SparesConfig, SvmConfig, SvmModeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    Fit,
    Predict,
    Screen,
    Spares,
    Cqr,
    Dantzig,
    Svm,
    Forest,
    Boost,
    Scr,
    Cv,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Fit => "fit",
            CommandKind::Predict => "predict",
            CommandKind::Screen => "screen",
            CommandKind::Spares => "spares",
            CommandKind::Cqr => "cqr",
            CommandKind::Dantzig => "dantzig",
            CommandKind::Svm => "svm",
            CommandKind::Forest => "forest",
            CommandKind::Boost => "boost",
            CommandKind::Scr => "scr",
            CommandKind::Cv => "cv",
        }
    }
}

/// What a finished run touched; the manifest is derived from this.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Data and model files read (the config file is accounted separately).
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// The seed the pipeline consumed; None for deterministic commands.
    pub seed: Option<u64>,
    /// The output the manifest sits next to.
    pub primary_output: PathBuf,
}

impl RunOutcome {
    fn new(primary_output: PathBuf, seed: Option<u64>) -> Self {
        RunOutcome {
            inputs: Vec::new(),
            outputs: vec![primary_output.clone()],
            seed,
            primary_output,
        }
    }
}

pub fn run(kind: CommandKind, config: Value) -> Result<RunOutcome> {
    match kind {
        CommandKind::Simulate => run_simulate(parse(config)?),
        CommandKind::Fit => run_fit(parse(config)?),
        CommandKind::Predict => run_predict(parse(config)?),
        CommandKind::Screen => run_screen(parse(config)?),
        CommandKind::Spares => run_spares(parse(config)?),
        CommandKind::Cqr => run_cqr(parse(config)?),
        CommandKind::Dantzig => run_dantzig(parse(config)?),
        CommandKind::Svm => run_svm(parse(config)?),
        CommandKind::Forest => run_forest(parse(config)?),
        CommandKind::Boost => run_boost(parse(config)?),
        CommandKind::Scr => run_scr(parse(config)?),
        CommandKind::Cv => run_cv(parse(config)?),
    }
}

fn parse<T: DeserializeOwned>(config: Value) -> Result<T> {
    serde_json::from_value(config).map_err(|e| Error::validation(format!("invalid config: {e}")))
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.ok_or_else(|| {
        Error::validation(format!(
            "config field \"seed\" is required for the stochastic {what} command"
        ))
    })
}

fn write_artifact(
    path: &Path,
    command: CommandKind,
    feature_names: &[String],
    model: Model,
) -> Result<()> {
    artifacts::write_json(
        path,
        &Artifact {
            command: command.name().to_string(),
            feature_names: feature_names.to_vec(),
            model,
        },
    )
}

fn run_simulate(cfg: SimulateConfig) -> Result<RunOutcome> {
    let seed = require_seed(cfg.seed, "simulate")?;
    let result = simulate::simulate(&cfg.spec, seed)?;
    match &result {
        simulate::SimResult::Survival(ds) => data::write_csv(&cfg.output, ds)?,
        simulate::SimResult::IllnessDeath(ds) => data::write_illness_death_csv(&cfg.output, ds)?,
        simulate::SimResult::Competing(draws) => {
            let names: Vec<String> = (1..=cfg.spec.p).map(|j| format!("x{j}")).collect();
            artifacts::write_competing_csv(&cfg.output, draws, &names)?;
        }
    }
    Ok(RunOutcome::new(cfg.output, Some(seed)))
}

fn run_fit(cfg: FitConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let method = cfg.method.as_ref().ok_or_else(|| {
        Error::validation("fit config needs a \"method\" object or a --method flag")
    })?;
    let mut seed_used = None;
    let mut path_fit = None;
    let model = match method {
        MethodConfig::Cox { options } => Model::Cox {
            fit: coxcore::fit_mple(&ds, &options.build())?,
        },
        MethodConfig::CoxNet { hidden, train } => {
            let seed = require_seed(cfg.seed, "fit (cox_net method)")?;
            seed_used = Some(seed);
            Model::CoxNetwork {
                fit: mlp::train_cox_net(&ds, hidden, &train.build(seed))?,
            }
        }
        MethodConfig::Penalized { penalty, path } => {
            let opts = path.build();
            match penalty.eta {
                Some(eta) => Model::Cox {
                    fit: coxnet::fit_penalized(&ds, &penalty.build(eta)?, &opts)?,
                },
                None => {
                    let fit = coxnet::fit_path(&ds, &penalty.build(1.0)?, &opts)?;
                    path_fit = Some(fit.clone());
                    Model::Path { fit }
                }
            }
        }
    };
    write_artifact(&cfg.output, CommandKind::Fit, ds.feature_names(), model)?;
    let mut outcome = RunOutcome::new(cfg.output, seed_used);
    outcome.inputs.push(cfg.input);
    if let Some(csv_path) = cfg.csv_output {
        let fit = path_fit.ok_or_else(|| {
            Error::validation("csv_output applies to path fits only; this method writes one model")
        })?;
        coxnet::write_path_csv(&csv_path, &fit)?;
        outcome.outputs.push(csv_path);
    }
    Ok(outcome)
}

fn check_prediction_columns(artifact: &Artifact, names: &[String]) -> Result<()> {
    if names != artifact.feature_names {
        return Err(Error::validation(format!(
            "prediction columns {names:?} do not match the training columns {:?}; \
             use drop_columns for outcome columns",
            artifact.feature_names
        )));
    }
    Ok(())
}

fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::validation("times must be non-empty"));
    }
    let increasing = times.windows(2).all(|w| w[0] < w[1]);
    if !increasing || times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::validation(
            "times must be finite, non-negative, and strictly increasing",
        ));
    }
    Ok(())
}

fn path_beta(fit: &coxnet::PathFit, eta: Option<f64>) -> Result<Vec<f64>> {
    match eta {
        Some(eta) => {
            let idx = fit.etas.iter().position(|e| *e == eta).ok_or_else(|| {
                Error::validation(format!("eta {eta} is not on the fitted grid"))
            })?;
            Ok(fit.betas[idx].clone())
        }
        None => fit
            .selected_beta()
            .map(<[f64]>::to_vec)
            .ok_or_else(|| {
                Error::validation(
                    "path artifact has no cross-validated selection; set \"eta\" to a grid value",
                )
            }),
    }
}

fn run_predict(cfg: PredictConfig) -> Result<RunOutcome> {
    let artifact = artifacts::read_artifact(&cfg.model)?;
    let (names, x) = artifacts::read_matrix_csv(&cfg.input, &cfg.drop_columns)?;
    check_prediction_columns(&artifact, &names)?;
    if let Some(times) = &cfg.times {
        check_grid(times)?;
    }

    let mut outcome = RunOutcome::new(cfg.output.clone(), None);
    outcome.inputs.push(cfg.model.clone());
    outcome.inputs.push(cfg.input.clone());

    match &artifact.model {
        Model::Cox { fit } => {
            let lp = data::linear_predictor(&x, &Array1::from(fit.beta.clone()));
            match &cfg.times {
                None => artifacts::write_score_csv(&cfg.output, "linear_predictor", lp.as_slice().unwrap())?,
                Some(times) => {
                    let rows: Vec<Vec<Vec<f64>>> = lp
                        .iter()
                        .map(|&eta| {
                            vec![times
                                .iter()
                                .map(|&t| (-fit.baseline_chf.eval(t) * eta.exp()).exp())
                                .collect()]
                        })
                        .collect();
                    artifacts::write_curves_csv(&cfg.output, &["survival"], times, &rows)?;
                }
            }
        }
        Model::Path { fit } => {
            let beta = path_beta(fit, cfg.eta)?;
            let lp = data::linear_predictor(&x, &Array1::from(beta));
            artifacts::write_score_csv(&cfg.output, "linear_predictor", lp.as_slice().unwrap())?;
        }
        Model::CoxNetwork { fit } => {
            let scores = fit.network.predict_scores(&x.view())?;
            artifacts::write_score_csv(&cfg.output, "score", &scores)?;
        }
        Model::Svm { model } => {
            let scores = model.predict(&x.view())?;
            artifacts::write_score_csv(&cfg.output, "score", &scores)?;
        }
        Model::Boost { fit } => {
            let scores = fit.predict(&x.view())?;
            artifacts::write_score_csv(&cfg.output, "score", &scores)?;
        }
        Model::Dantzig { fit } => {
            let lp = data::linear_predictor(&x, &Array1::from(fit.beta.clone()));
            artifacts::write_score_csv(&cfg.output, "linear_predictor", lp.as_slice().unwrap())?;
        }
        Model::Forest { forest, .. } => {
            let times = match &cfg.times {
                Some(times) => times.clone(),
                None => forest.event_times.clone(),
            };
            check_grid(&times)?;
            let rows: Vec<Vec<Vec<f64>>> = x
                .outer_iter()
                .collect::<Vec<ArrayView1<f64>>>()
                .par_iter()
                .map(|row| -> Result<Vec<Vec<f64>>> {
                    let survival = forest.predict_survival(row)?;
                    let chf = forest.predict_chf(row)?;
                    Ok(vec![
                        times.iter().map(|&t| survival.eval(t)).collect(),
                        times.iter().map(|&t| chf.eval(t)).collect(),
                    ])
                })
                .collect::<Result<_>>()?;
            artifacts::write_curves_csv(&cfg.output, &["survival", "chf"], &times, &rows)?;
            if let Some(mortality_path) = &cfg.mortality_output {
                let mortality: Vec<f64> = x
                    .outer_iter()
                    .collect::<Vec<ArrayView1<f64>>>()
                    .par_iter()
                    .map(|row| forest.mortality(row))
                    .collect::<Result<_>>()?;
                artifacts::write_score_csv(mortality_path, "mortality", &mortality)?;
                outcome.outputs.push(mortality_path.clone());
            }
        }
        Model::Scr { fit } => {
            let times = cfg.times.clone().ok_or_else(|| {
                Error::validation("semi-competing prediction needs a \"times\" grid")
            })?;
            let rows: Vec<Vec<Vec<f64>>> = x
                .outer_iter()
                .collect::<Vec<ArrayView1<f64>>>()
                .par_iter()
                .map(|row| -> Result<Vec<Vec<f64>>> {
                    let curves = scr::predict_transitions(&fit.params, row, &times)?;
                    Ok(vec![curves.pfs, curves.cif_prog, curves.cif_death, curves.survival])
                })
                .collect::<Result<_>>()?;
            artifacts::write_curves_csv(
                &cfg.output,
                &["pfs", "cif_progression", "cif_death", "survival"],
                &times,
                &rows,
            )?;
        }
        Model::Cqr { fit } => {
            let taus = fit.grid.taus();
            let mut values = Array2::zeros((x.nrows(), taus.len()));
            for (i, row) in x.outer_iter().enumerate() {
                for k in 0..taus.len() {
                    let coef = fit.row(k);
                    values[(i, k)] =
                        coef[0] + row.iter().zip(coef.iter().skip(1)).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            artifacts::write_quantile_csv(&cfg.output, taus, &fit.estimable, &values)?;
        }
        Model::Screen { .. } | Model::Spares { .. } | Model::FusedCqr { .. } => {
            return Err(Error::validation(
                "this artifact records inference, not a predictive model",
            ));
        }
    }
    Ok(outcome)
}

fn run_screen(cfg: ScreenConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let d = cfg
        .d
        .unwrap_or_else(|| screening::default_retention(ds.n()).min(ds.p()));
    let result = match cfg.method {
        ScreenMethod::Cox => screening::marginal_cox_screen(&ds, d)?,
        ScreenMethod::Concordance => screening::concordance_screen(&ds, d)?,
    };
    write_artifact(&cfg.output, CommandKind::Screen, ds.feature_names(), Model::Screen { result })?;
    let mut outcome = RunOutcome::new(cfg.output, None);
    outcome.inputs.push(cfg.input);
    Ok(outcome)
}

fn run_spares(cfg: SparesConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "spares")?;
    let opts = spares::SparesOptions {
        finite_b_correction: cfg.finite_b_correction,
    };
    let selector: Box<dyn Fn(&data::SurvivalDataset) -> Result<Vec<usize>> + Sync> =
        match &cfg.selector {
            SelectorConfig::Sis { d } => {
                let d = d.unwrap_or_else(|| screening::default_retention(ds.n()).min(ds.p()));
                Box::new(spares::sis_linear_selector(d))
            }
            SelectorConfig::LassoCv { k } => Box::new(spares::lasso_cv_selector(*k, seed)),
            SelectorConfig::Oracle { support } => Box::new(spares::oracle_selector(support.clone())),
        };
    let model = match &cfg.family {
        FamilyConfig::Linear => Model::Spares {
            inference: spares::spares_fit_with(&ds, &selector, spares::RefitFamily::Linear, cfg.b, seed, &opts)?,
        },
        FamilyConfig::Cox => Model::Spares {
            inference: spares::spares_fit_with(&ds, &selector, spares::RefitFamily::Cox, cfg.b, seed, &opts)?,
        },
        FamilyConfig::Cqr { tau } => Model::Spares {
            inference: spares::spares_fit_with(&ds, &selector, spares::RefitFamily::Cqr(*tau), cfg.b, seed, &opts)?,
        },
        FamilyConfig::FusedCqr { taus } => {
            let grid = match taus {
                Some(taus) => cqr::QuantileGrid::new(taus.clone())?,
                None => cqr::QuantileGrid::default_grid(),
            };
            Model::FusedCqr {
                inference: spares::fused_hdcqr_with(&ds, &selector, &grid, cfg.b, seed, &opts)?,
            }
        }
    };
    write_artifact(&cfg.output, CommandKind::Spares, ds.feature_names(), model.clone())?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    if let Some(csv_path) = cfg.csv_output {
        let out = BufWriter::new(fs::File::create(&csv_path)?);
        match &model {
            Model::Spares { inference } => inference.write_csv(out)?,
            Model::FusedCqr { inference } => inference.write_csv(out)?,
            _ => unreachable!("spares writes inference artifacts"),
        }
        outcome.outputs.push(csv_path);
    }
    Ok(outcome)
}

fn run_cqr(cfg: CqrConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let grid = match &cfg.taus {
        Some(taus) => cqr::QuantileGrid::new(taus.clone())?,
        None => cqr::QuantileGrid::default_grid(),
    };
    let fit = cqr::fit_cqr(&ds, &grid)?;
    write_artifact(&cfg.output, CommandKind::Cqr, ds.feature_names(), Model::Cqr { fit: fit.clone() })?;
    let mut outcome = RunOutcome::new(cfg.output, None);
    outcome.inputs.push(cfg.input);
    if let Some(csv_path) = cfg.csv_output {
        fit.write_csv(ds.feature_names(), BufWriter::new(fs::File::create(&csv_path)?))?;
        outcome.outputs.push(csv_path);
    }
    Ok(outcome)
}

fn run_dantzig(cfg: DantzigConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let opts = cfg.options.build();
    let weights = if cfg.adaptive {
        Some(aftdantzig::adaptive_weights(&ds)?)
    } else {
        None
    };
    let mut seed_used = None;
    let eta_q = match (cfg.eta_q, &cfg.select) {
        (Some(eta), None) => eta,
        (None, Some(select)) => {
            let seed = require_seed(cfg.seed, "dantzig (cross-validated constraint level)")?;
            seed_used = Some(seed);
            let (eta, _scores) =
                aftdantzig::select_eta_q(&ds, select.k, seed, select.n_etas, weights.as_deref(), &opts)?;
            eta
        }
        (Some(_), Some(_)) => {
            return Err(Error::validation("give either eta_q or select, not both"))
        }
        (None, None) => {
            return Err(Error::validation("dantzig needs eta_q or a select design"))
        }
    };
    let fit = aftdantzig::dantzig_aft(&ds, eta_q, weights.as_deref(), &opts)?;
    write_artifact(&cfg.output, CommandKind::Dantzig, ds.feature_names(), Model::Dantzig { fit })?;
    let mut outcome = RunOutcome::new(cfg.output, seed_used);
    outcome.inputs.push(cfg.input);
    Ok(outcome)
}

fn run_svm(cfg: SvmConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "svm")?;
    let opts = cfg.options.build(seed);
    let kernel = match cfg.kernel {
        KernelConfig::Linear => svm::Kernel::Linear,
        KernelConfig::Rbf { bandwidth } => svm::Kernel::Rbf { bandwidth },
        KernelConfig::RbfMedian => svm::Kernel::Rbf {
            bandwidth: svm::median_pairwise_bandwidth(&ds, seed)?,
        },
    };
    let model = match cfg.mode {
        SvmModeConfig::Rank => svm::fit_rank_svm(&ds, kernel, cfg.gamma, &opts)?,
        SvmModeConfig::Regression => svm::fit_regression_svm(&ds, kernel, cfg.gamma, &opts)?,
        SvmModeConfig::Hybrid { mix } => svm::fit_hybrid_svm(&ds, kernel, cfg.gamma, mix, &opts)?,
    };
    write_artifact(&cfg.output, CommandKind::Svm, ds.feature_names(), Model::Svm { model })?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    Ok(outcome)
}

fn run_forest(cfg: ForestConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "forest")?;
    let mtry = cfg
        .mtry
        .unwrap_or_else(|| (ds.p() as f64).sqrt().ceil() as usize)
        .min(ds.p())
        .max(1);
    let forest = trees::rsf_fit(&ds, cfg.b, mtry, &cfg.tree.build(), seed)?;
    let oob_error = if cfg.oob {
        Some(forest.oob_error(&ds)?)
    } else {
        None
    };
    write_artifact(
        &cfg.output,
        CommandKind::Forest,
        ds.feature_names(),
        Model::Forest { forest, oob_error },
    )?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    Ok(outcome)
}

fn run_boost(cfg: BoostConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "boost")?;
    let fit = trees::boost_fit(&ds, cfg.m, cfg.shrinkage, cfg.tree_depth, seed)?;
    write_artifact(&cfg.output, CommandKind::Boost, ds.feature_names(), Model::Boost { fit })?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    Ok(outcome)
}

fn covariate_means(ds: &data::IllnessDeathDataset) -> Array1<f64> {
    let mut means = Array1::zeros(ds.p());
    for record in ds.records() {
        for (j, value) in record.covariates.iter().enumerate() {
            means[j] += value;
        }
    }
    means / ds.n() as f64
}

fn run_scr(cfg: ScrConfig) -> Result<RunOutcome> {
    let ds = data::load_illness_death_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "scr")?;
    let mode = cfg.mode.build();
    let opts = cfg.options.build(seed)?;
    let fit = scr::fit_scr(&ds, &mode, &opts)?;
    write_artifact(&cfg.output, CommandKind::Scr, ds.feature_names(), Model::Scr { fit: fit.clone() })?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    if let Some(sweep) = &cfg.sweep {
        let feature = sweep.feature.resolve(ds.feature_names())?;
        let values = sweep.values.materialize()?;
        let base = covariate_means(&ds);
        let risks = scr::risk_sweep(&fit.params, &base.view(), feature, &values)?;
        artifacts::write_sweep_csv(&sweep.output, &values, &risks)?;
        outcome.outputs.push(sweep.output.clone());
    }
    Ok(outcome)
}

fn run_cv(cfg: CvConfig) -> Result<RunOutcome> {
    let ds = data::load_csv(&cfg.input, &cfg.schema)?;
    let seed = require_seed(cfg.seed, "cv")?;
    let spec = cfg.penalty.build(1.0)?;
    let fit = coxnet::cross_validate(&ds, &spec, cfg.k, seed, &cfg.path.build())?;
    write_artifact(&cfg.output, CommandKind::Cv, ds.feature_names(), Model::Path { fit: fit.clone() })?;
    let mut outcome = RunOutcome::new(cfg.output, Some(seed));
    outcome.inputs.push(cfg.input);
    if let Some(csv_path) = cfg.csv_output {
        coxnet::write_path_csv(&csv_path, &fit)?;
        outcome.outputs.push(csv_path);
    }
    Ok(outcome)
}

/// Applies the command-line overrides to the raw config object and verifies
/// an embedded "command" field against the invoked subcommand.
pub fn apply_overrides(
    value: &mut Value,
    kind: CommandKind,
    seed: Option<u64>,
    threads: Option<usize>,
    input: Option<&Path>,
    output: Option<&Path>,
    method: Option<&str>,
) -> Result<()> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::validation("config root must be a JSON object"))?;
    if let Some(command) = obj.get("command") {
        match command.as_str() {
            Some(name) if name == kind.name() => {}
            Some(name) => {
                return Err(Error::validation(format!(
                    "config is for the {name:?} command, not {:?}",
                    kind.name()
                )))
            }
            None => return Err(Error::validation("config field \"command\" must be a string")),
        }
        obj.remove("command");
    }
    if let Some(seed) = seed {
        obj.insert("seed".to_string(), Value::from(seed));
    }
    if let Some(threads) = threads {
        obj.insert("threads".to_string(), Value::from(threads));
    }
    if let Some(input) = input {
        if kind == CommandKind::Simulate {
            return Err(Error::validation("simulate reads no input file"));
        }
        obj.insert("input".to_string(), Value::from(input.display().to_string()));
    }
    if let Some(output) = output {
        obj.insert("output".to_string(), Value::from(output.display().to_string()));
    }
    if let Some(method) = method {
        obj.insert("method".to_string(), method_value(method)?);
    }
    Ok(())
}

/// Shorthand --method names; anything richer goes in the config JSON.
fn method_value(name: &str) -> Result<Value> {
    let penalized = |kind: &str| {
        serde_json::json!({"name": "penalized", "penalty": {"kind": kind}})
    };
    match name {
        "cox" => Ok(serde_json::json!({"name": "cox"})),
        "cox-lasso" | "cox_lasso" => Ok(penalized("lasso")),
        "cox-ridge" | "cox_ridge" => Ok(penalized("ridge")),
        other => Err(Error::validation(format!(
            "unknown --method {other:?}; expected cox, cox-lasso, or cox-ridge \
             (configure other penalties in the config file)"
        ))),
    }
}

/// The thread bound, validated, pulled from the merged config.
pub fn thread_bound(value: &Value) -> Result<Option<usize>> {
    match value.get("threads") {
        None | Some(Value::Null) => Ok(None),
        Some(v) => {
            let threads = v
                .as_u64()
                .filter(|&t| t >= 1)
                .ok_or_else(|| Error::validation("threads must be a positive integer"))?;
            Ok(Some(threads as usize))
        }
    }
}
