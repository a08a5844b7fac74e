//! Config-driven experiment orchestration: run the four-step meta-algorithm
//! end to end for a chosen training method, aggregate multi-seed trials into
//! reports, and reproduce the benchmark comparisons at desk scale.

mod experiment;
mod report;
mod repro;

pub use experiment::{make_problem, run_experiment, PORTFOLIO_RISK_AVERSION};
pub use report::{
    mean_sem, render_timing_table, step_timing_summary, ExperimentReport, MeanSem, StepTimingSummary,
    StepTimings, TrialAbort, TrialOutcome,
};
pub use repro::{
    desk_experiment, render_outcome, run_repro, CounterexampleDetail, ReproCheck, ReproName,
    ReproOutcome,
};

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetSpec, Domain, SplitMode};
use crate::error::{Error, Result};
use crate::losses::{FbpConfig, FitConfig, LossFamily};
use crate::nn::TrainConfig;
use crate::sampling::{SamplerConfig, SamplerKind};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "EGL_LAB_THREADS";

/// Apply the `EGL_LAB_THREADS` cap to the global worker pool. Call once at
/// process start, before any parallel work runs.
pub fn init_thread_pool_from_env() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    if threads == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be >= 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool setup failed: {e}")))
}

/// How the predictive model's training objective is obtained.
///
/// The two-stage baseline trains on plain MSE. Every other method prices
/// candidate predictions with the solver and learns a task-specific loss
/// first; they differ in where the candidates come from (Gaussian noise, a
/// converged MSE model, or checkpoints of MSE models) and in whether loss
/// parameters are fit per instance or produced by a shared feature network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Plain MSE training; no learned loss.
    TwoStageMse,
    /// One candidate per instance — the converged MSE model's prediction —
    /// priced and fit with a single scalar weight per instance.
    LzOneSample,
    /// Gaussian candidates, loss parameters fit separately per instance.
    Lodl,
    /// Model-checkpoint candidates, per-instance fits.
    EglMbs,
    /// Gaussian candidates, loss parameters from a shared feature network.
    EglFbp,
    /// Model-checkpoint candidates plus the feature network; when no family
    /// is pinned, tries both directed families and keeps the one with the
    /// better validation decision quality.
    EglFull,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TwoStageMse => "two_stage_mse",
            Method::LzOneSample => "lz_one_sample",
            Method::Lodl => "lodl",
            Method::EglMbs => "egl_mbs",
            Method::EglFbp => "egl_fbp",
            Method::EglFull => "egl_full",
        }
    }

    /// The candidate source this method is defined by, if it uses one.
    pub fn required_sampler_kind(&self) -> Option<SamplerKind> {
        match self {
            Method::TwoStageMse | Method::LzOneSample => None,
            Method::Lodl | Method::EglFbp => Some(SamplerKind::Gaussian),
            Method::EglMbs | Method::EglFull => Some(SamplerKind::ModelBased),
        }
    }

    /// Whether Step 3 goes through the shared feature network.
    pub fn uses_feature_network(&self) -> bool {
        matches!(self, Method::EglFbp | Method::EglFull)
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage_mse" => Ok(Method::TwoStageMse),
            "lz_one_sample" => Ok(Method::LzOneSample),
            "lodl" => Ok(Method::Lodl),
            "egl_mbs" => Ok(Method::EglMbs),
            "egl_fbp" => Ok(Method::EglFbp),
            "egl_full" => Ok(Method::EglFull),
            other => Err(Error::Input(format!(
                "unknown method '{other}' (expected two_stage_mse, lz_one_sample, lodl, \
                 egl_mbs, egl_fbp, or egl_full)"
            ))),
        }
    }
}

fn default_one_hot_users() -> bool {
    true
}

fn default_num_trials() -> usize {
    10
}

fn default_num_baseline_draws() -> usize {
    100
}

/// Everything needed to run one experiment: the dataset, the training
/// method, and the per-step hyperparameters. Loadable from JSON; fields with
/// defaults may be omitted in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub method: Method,
    /// Loss family for the loss-fitting methods. `two_stage_mse` and
    /// `lz_one_sample` ignore it (the latter is scalar-weight by
    /// definition); `egl_full` left unset tries both directed families.
    #[serde(default)]
    pub family: Option<LossFamily>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Unset defaults to temporal splits for portfolio (the labels are a
    /// time series) and shuffled splits everywhere else.
    #[serde(default)]
    pub split_mode: Option<SplitMode>,
    /// Append a one-hot user index to web-advertising model inputs so a
    /// shared model can tell users of one site apart.
    #[serde(default = "default_one_hot_users")]
    pub one_hot_users: bool,
    /// Hidden widths of the predictive model; empty means linear.
    #[serde(default)]
    pub hidden_widths: Vec<usize>,
    /// Step-3 controls for per-instance fits.
    #[serde(default)]
    pub fit: FitConfig,
    /// Step-3 controls for the feature network.
    #[serde(default)]
    pub fbp: FbpConfig,
    /// Step-4 controls for the predictive model.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_num_trials")]
    pub num_trials: usize,
    /// One base seed per trial; every random stream in the trial derives
    /// from it.
    pub seeds: Vec<u64>,
    #[serde(default = "default_num_baseline_draws")]
    pub num_baseline_draws: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("experiment name must be nonempty".into()));
        }
        self.dataset.validate()?;
        self.sampler.validate()?;
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be >= 1".into()));
        }
        if self.seeds.len() != self.num_trials {
            return Err(Error::Config(format!(
                "{} seeds for {} trials; provide one per trial",
                self.seeds.len(),
                self.num_trials
            )));
        }
        if self.num_baseline_draws == 0 {
            return Err(Error::Config("num_baseline_draws must be >= 1".into()));
        }
        if self.hidden_widths.iter().any(|w| *w == 0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        match self.method {
            Method::TwoStageMse | Method::LzOneSample => {}
            Method::Lodl | Method::EglMbs | Method::EglFbp => {
                if self.family.is_none() {
                    return Err(Error::Config(format!(
                        "method {} needs a loss family",
                        self.method.as_str()
                    )));
                }
            }
            Method::EglFull => {}
        }
        if self.method.uses_feature_network() {
            if let Some(family) = self.family {
                if matches!(family, LossFamily::Mse | LossFamily::LzScalar) {
                    return Err(Error::Config(format!(
                        "family {family} has no per-prediction parameters for a feature \
                         network to produce"
                    )));
                }
            }
        }
        if let Some(required) = self.method.required_sampler_kind() {
            if self.sampler.kind != required {
                return Err(Error::Config(format!(
                    "method {} is defined with {:?} sampling, config says {:?}",
                    self.method.as_str(),
                    required,
                    self.sampler.kind
                )));
            }
        }
        Ok(())
    }

    /// Loss families Step 3 will fit, in trial order.
    pub fn candidate_families(&self) -> Vec<LossFamily> {
        match self.method {
            Method::TwoStageMse => Vec::new(),
            Method::LzOneSample => vec![LossFamily::LzScalar],
            Method::Lodl | Method::EglMbs | Method::EglFbp => {
                vec![self.family.expect("validated: family required")]
            }
            Method::EglFull => match self.family {
                Some(family) => vec![family],
                None => vec![
                    LossFamily::DirectedWeightedMse,
                    LossFamily::DirectedQuadratic,
                ],
            },
        }
    }

    pub fn effective_split_mode(&self) -> SplitMode {
        self.split_mode.unwrap_or(match self.dataset.domain {
            Domain::Portfolio => SplitMode::Temporal,
            _ => SplitMode::Iid,
        })
    }
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_str(&raw)?;
    config.validate()?;
    Ok(config)
}

pub fn save_experiment_config(config: &ExperimentConfig, path: &Path) -> Result<()> {
    config.validate()?;
    std::fs::write(path, serde_json::to_string_pretty(config)?)?;
    Ok(())
}
