//! Canned desk-scale reproductions behind `egl-lab repro <name>`.
//!
//! Each bundle runs a small fixed set of experiments (or the allocation
//! counterexample), writes one machine-readable JSON file and one aligned
//! text table into the output directory, and evaluates a handful of
//! qualitative checks — the directional findings the full-scale studies
//! report, at a size a laptop reproduces in minutes. `ReproOutcome::all_pass`
//! tells the CLI whether to exit cleanly.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{DatasetSpec, Domain};
use crate::error::{Error, Result};
use crate::losses::{
    prediction_for_a, run_counterexample, CounterexampleReport, FbpConfig, FitConfig, LossFamily,
    NoiseGrid, WeightFit, DEFAULT_W_MIN,
};
use crate::nn::TrainConfig;
use crate::sampling::{SamplerConfig, SamplerKind};
use crate::seed::derive_seed;

use super::{run_experiment, ExperimentConfig, ExperimentReport, Method};

/// The reproduction bundles the CLI knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReproName {
    /// Standard cubic benchmark: plain MSE lands below the random baseline,
    /// the full learned-loss pipeline lands far above it.
    Table1Cubic,
    /// Hard cubic variant: label-noise candidates leave the learned loss
    /// blind and it fails like MSE; model-based candidates rescue it.
    Table1Hard,
    /// Candidate-sampling and parameter-network ablation on standard cubic.
    Table2Ablation,
    /// Plain-MSE accuracy across domains: the cubic benchmarks are where
    /// squared error is largest, yet (per the other bundles) squared error
    /// is also most misleading there.
    Table4Mse,
    /// The two-scenario allocation example where a faithfully fitted scalar
    /// weight keeps the optimal decision but a nearby weight pair flips it.
    Counterexample,
}

impl ReproName {
    pub const ALL: [ReproName; 5] = [
        ReproName::Table1Cubic,
        ReproName::Table1Hard,
        ReproName::Table2Ablation,
        ReproName::Table4Mse,
        ReproName::Counterexample,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReproName::Table1Cubic => "table1_cubic",
            ReproName::Table1Hard => "table1_hard",
            ReproName::Table2Ablation => "table2_ablation",
            ReproName::Table4Mse => "table4_mse",
            ReproName::Counterexample => "counterexample",
        }
    }
}

impl std::fmt::Display for ReproName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReproName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ReproName::ALL
            .iter()
            .find(|name| name.as_str() == s)
            .copied()
            .ok_or_else(|| {
                let known: Vec<&str> = ReproName::ALL.iter().map(|n| n.as_str()).collect();
                Error::Input(format!(
                    "unknown repro '{s}' (expected one of {})",
                    known.join(", ")
                ))
            })
    }
}

/// One qualitative requirement a bundle evaluates, e.g. "the learned-loss
/// pipeline beats 0.7 mean normalized decision quality".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproCheck {
    pub label: String,
    /// Human-readable statement of the threshold.
    pub requirement: String,
    pub value: f64,
    pub pass: bool,
}

/// Everything the counterexample bundle measured, kept alongside the checks
/// so the JSON artifact stands on its own.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleDetail {
    pub closed_form: CounterexampleReport,
    pub gradient_fit: CounterexampleReport,
    /// A nearby weight pair a noisier empirical fit can land on.
    pub perturbed_w_low: f64,
    pub perturbed_w_high: f64,
    pub perturbed_prediction: f64,
    pub perturbed_resource_to_a: bool,
}

/// Result of one reproduction bundle: the experiment reports (empty for the
/// counterexample), the checks, and the artifact paths written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproOutcome {
    pub name: ReproName,
    pub reports: Vec<ExperimentReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counterexample: Option<CounterexampleDetail>,
    pub checks: Vec<ReproCheck>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl ReproOutcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Desk-scale dataset size: 100 train / 20 validation / 30 test.
const DESK_INSTANCES: usize = 150;
const DESK_SPLIT: [f64; 3] = [2.0 / 3.0, 2.0 / 15.0, 0.2];
const DESK_TRIALS: usize = 10;
const DESK_SEED_TAG: u64 = 9001;

fn desk_seeds() -> Vec<u64> {
    (0..DESK_TRIALS as u64)
        .map(|trial| derive_seed(DESK_SEED_TAG, trial))
        .collect()
}

fn desk_dataset(domain: Domain) -> DatasetSpec {
    // the per-trial seed is overwritten by the harness; shapes are what count
    let mut spec = match domain {
        Domain::Cubic => DatasetSpec::cubic(DESK_INSTANCES, 50, 0),
        Domain::CubicHard => DatasetSpec::cubic_hard(DESK_INSTANCES, 50, 0),
        Domain::Webadv => DatasetSpec::webadv(DESK_INSTANCES, 5, 10, 0),
        Domain::Portfolio => DatasetSpec::portfolio(DESK_INSTANCES, 20, 8, 0),
    };
    spec.split_fractions = DESK_SPLIT;
    spec
}

fn desk_sampler(domain: Domain, method: Method, samples_per_instance: usize) -> SamplerConfig {
    let kind = method
        .required_sampler_kind()
        .unwrap_or(SamplerKind::Gaussian);
    // sigma tracks each domain's label scale; the model-based knobs favor
    // checkpoint diversity (many short trajectories including step zero) —
    // on cubic the decision flips hinge on seeing both slope signs among the
    // fresh initializations, so it gets the most models
    let (sigma, num_models, learning_rate, update_budget) = match domain {
        Domain::Cubic | Domain::CubicHard => (1.0, 16, 0.5, 3_200),
        Domain::Webadv => (0.25, 10, 0.1, 4_000),
        Domain::Portfolio => (0.05, 10, 0.05, 4_000),
    };
    SamplerConfig {
        kind,
        samples_per_instance,
        sigma,
        num_models,
        learning_rate,
        update_budget,
        include_step_zero: true,
        seed: 0,
    }
}

// Cubic regrets span {~0.5, ~4} while candidate deviations at mid-curve are
// large, so the weight floor must sit well below regret/deviation² or the
// floor term alone inverts the fitted ordering between good and bad slopes.
fn desk_w_min(domain: Domain) -> f64 {
    match domain {
        Domain::Cubic | Domain::CubicHard => 1e-3,
        Domain::Webadv | Domain::Portfolio => DEFAULT_W_MIN,
    }
}

fn desk_fit(domain: Domain) -> FitConfig {
    FitConfig {
        w_min: desk_w_min(domain),
        ..FitConfig::default()
    }
}

fn desk_train(domain: Domain) -> TrainConfig {
    let learning_rate = match domain {
        Domain::Cubic | Domain::CubicHard => 0.05,
        Domain::Webadv | Domain::Portfolio => 0.01,
    };
    TrainConfig {
        learning_rate,
        epochs: 120,
        batch_size: 16,
        patience: 12,
        ..TrainConfig::default()
    }
}

fn desk_fbp(domain: Domain) -> FbpConfig {
    // cubic needs the hotter, longer fit: at 1e-3 the parameter network
    // plateaus with near-uniform weights and the trained model's decisions
    // match plain MSE; the slowest seeds stall mid-fit, so patience rides
    // through plateaus and the epoch cap leaves room after them
    let (learning_rate, epochs, patience) = match domain {
        Domain::Cubic | Domain::CubicHard => (1e-2, 150, 25),
        Domain::Webadv | Domain::Portfolio => (1e-3, 60, 10),
    };
    FbpConfig {
        hidden_widths: vec![16, 16],
        w_min: desk_w_min(domain),
        learning_rate,
        epochs,
        batch_size: 8,
        patience,
        ..FbpConfig::default()
    }
}

/// Builds the shared desk-scale experiment the bundles (and the acceptance
/// suite) use: 150 regenerated instances per trial, 10 trials, small models.
/// `family` must follow the method's rules (`ExperimentConfig::validate`);
/// for `egl_full` pass `None` on cubic to race both directed families, or
/// pin one on the larger domains where racing is not worth the wall time.
pub fn desk_experiment(
    domain: Domain,
    method: Method,
    family: Option<LossFamily>,
    samples_per_instance: usize,
) -> ExperimentConfig {
    let hidden_widths = match domain {
        Domain::Cubic | Domain::CubicHard => vec![],
        Domain::Webadv | Domain::Portfolio => vec![16],
    };
    // the portfolio solver is iterative, so economize on baseline draws there
    let num_baseline_draws = match domain {
        Domain::Portfolio => 25,
        _ => 100,
    };
    ExperimentConfig {
        name: format!("{}-{}", domain.as_str(), method.as_str()),
        dataset: desk_dataset(domain),
        method,
        family,
        sampler: desk_sampler(domain, method, samples_per_instance),
        split_mode: None,
        one_hot_users: true,
        hidden_widths,
        fit: desk_fit(domain),
        fbp: desk_fbp(domain),
        train: desk_train(domain),
        num_trials: DESK_TRIALS,
        seeds: desk_seeds(),
        num_baseline_draws,
    }
}

fn bundle_configs(name: ReproName) -> Vec<ExperimentConfig> {
    use LossFamily::DirectedWeightedMse as Dwm;
    match name {
        ReproName::Table1Cubic => vec![
            desk_experiment(Domain::Cubic, Method::TwoStageMse, None, 32),
            desk_experiment(Domain::Cubic, Method::EglFull, None, 32),
        ],
        ReproName::Table1Hard => vec![
            desk_experiment(Domain::CubicHard, Method::Lodl, Some(Dwm), 32),
            desk_experiment(Domain::CubicHard, Method::EglFull, None, 32),
        ],
        ReproName::Table2Ablation => vec![
            desk_experiment(Domain::Cubic, Method::Lodl, Some(Dwm), 32),
            desk_experiment(Domain::Cubic, Method::EglMbs, Some(Dwm), 32),
            desk_experiment(Domain::Cubic, Method::EglFbp, Some(Dwm), 32),
            desk_experiment(Domain::Cubic, Method::EglFull, None, 32),
        ],
        ReproName::Table4Mse => vec![
            desk_experiment(Domain::Cubic, Method::TwoStageMse, None, 32),
            desk_experiment(Domain::CubicHard, Method::TwoStageMse, None, 32),
            desk_experiment(Domain::Webadv, Method::TwoStageMse, None, 32),
            desk_experiment(Domain::Portfolio, Method::TwoStageMse, None, 32),
        ],
        ReproName::Counterexample => vec![],
    }
}

fn check(label: &str, requirement: &str, value: f64, pass: bool) -> ReproCheck {
    ReproCheck {
        label: label.into(),
        requirement: requirement.into(),
        value,
        pass,
    }
}

fn bundle_checks(name: ReproName, reports: &[ExperimentReport]) -> Vec<ReproCheck> {
    match name {
        ReproName::Table1Cubic => {
            let mse = reports[0].test_dq.mean;
            let egl = reports[1].test_dq.mean;
            vec![
                check(
                    "two_stage_mse mean test normalized DQ",
                    "< 0",
                    mse,
                    mse < 0.0,
                ),
                check("egl_full mean test normalized DQ", ">= 0.7", egl, egl >= 0.7),
            ]
        }
        ReproName::Table1Hard => {
            let lodl = reports[0].test_dq.mean;
            let egl = reports[1].test_dq.mean;
            vec![
                check(
                    "lodl (gaussian candidates) mean test normalized DQ",
                    "<= 0",
                    lodl,
                    lodl <= 0.0,
                ),
                check("egl_full mean test normalized DQ", ">= 0.5", egl, egl >= 0.5),
            ]
        }
        ReproName::Table2Ablation => {
            let margin = reports[3].test_dq.mean - reports[0].test_dq.mean;
            vec![check(
                "egl_full minus lodl mean test normalized DQ",
                "> 0.5",
                margin,
                margin > 0.5,
            )]
        }
        ReproName::Table4Mse => {
            let cubic = reports[0].val_mse.mean;
            let webadv = reports[2].val_mse.mean;
            let portfolio = reports[3].val_mse.mean;
            vec![
                check(
                    "cubic minus webadv validation MSE",
                    "> 0",
                    cubic - webadv,
                    cubic > webadv,
                ),
                check(
                    "cubic minus portfolio validation MSE",
                    "> 0",
                    cubic - portfolio,
                    cubic > portfolio,
                ),
            ]
        }
        ReproName::Counterexample => vec![],
    }
}

/// The weight pair the perturbed-fit demonstration uses; close to the
/// converged values yet far enough to push A's optimal prediction over B.
pub const PERTURBED_W_LOW: f64 = 0.385;
pub const PERTURBED_W_HIGH: f64 = 0.582;

fn counterexample_outcome() -> Result<ReproOutcome> {
    let closed = run_counterexample(&NoiseGrid::Evenly15, WeightFit::ClosedForm)?;
    let gd = run_counterexample(&NoiseGrid::Evenly15, WeightFit::GradientDescent)?;
    let (perturbed_prediction, perturbed_to_a) =
        prediction_for_a(PERTURBED_W_LOW, PERTURBED_W_HIGH)?;

    // hand-derived regret tables for the 15-point grid: the resource goes to
    // A only when the prediction clears B's 0.55, so the low scenario loses
    // 0.55 on the four offsets above it and the high scenario loses 0.45 on
    // the four predictions at or below it
    let low_dev = max_table_deviation(&closed.low_regrets, |k| if k >= 11 { 0.55 } else { 0.0 });
    let high_dev = max_table_deviation(&closed.high_regrets, |k| if k <= 3 { 0.45 } else { 0.0 });

    // the closed form must equal the normal-equation ratio recomputed here
    let w_low_direct = scalar_weight_ratio(&closed.low_predictions, 0.0, &closed.low_regrets);
    let w_high_direct = scalar_weight_ratio(&closed.high_predictions, 1.0, &closed.high_regrets);

    let checks = vec![
        check(
            "low-scenario regret table vs hand table (max deviation)",
            "< 1e-12",
            low_dev,
            low_dev < 1e-12,
        ),
        check(
            "high-scenario regret table vs hand table (max deviation)",
            "< 1e-12",
            high_dev,
            high_dev < 1e-12,
        ),
        check(
            "closed-form w_low vs direct ratio (abs diff)",
            "< 1e-9",
            (closed.w_low - w_low_direct).abs(),
            (closed.w_low - w_low_direct).abs() < 1e-9,
        ),
        check(
            "closed-form w_high vs direct ratio (abs diff)",
            "< 1e-9",
            (closed.w_high - w_high_direct).abs(),
            (closed.w_high - w_high_direct).abs() < 1e-9,
        ),
        check(
            "converged fit keeps the allocation with B (prediction for A)",
            "<= 0.55",
            closed.prediction_for_a,
            closed.is_consistent,
        ),
        check(
            "gradient fit agrees with closed form (max weight diff)",
            "< 1e-3",
            (gd.w_low - closed.w_low)
                .abs()
                .max((gd.w_high - closed.w_high).abs()),
            (gd.w_low - closed.w_low).abs() < 1e-3
                && (gd.w_high - closed.w_high).abs() < 1e-3,
        ),
        check(
            "perturbed-pair prediction for A",
            "0.602 +/- 0.001",
            perturbed_prediction,
            (perturbed_prediction - 0.602).abs() <= 1e-3,
        ),
        check(
            "perturbed pair flips the allocation to A (prediction for A)",
            "> 0.55",
            perturbed_prediction,
            perturbed_to_a,
        ),
    ];

    Ok(ReproOutcome {
        name: ReproName::Counterexample,
        reports: vec![],
        counterexample: Some(CounterexampleDetail {
            closed_form: closed,
            gradient_fit: gd,
            perturbed_w_low: PERTURBED_W_LOW,
            perturbed_w_high: PERTURBED_W_HIGH,
            perturbed_prediction,
            perturbed_resource_to_a: perturbed_to_a,
        }),
        checks,
        files: vec![],
    })
}

fn max_table_deviation(regrets: &[f64], expected: impl Fn(usize) -> f64) -> f64 {
    regrets
        .iter()
        .enumerate()
        .map(|(k, r)| (r - expected(k)).abs())
        .fold(0.0, f64::max)
}

fn scalar_weight_ratio(predictions: &[f64], label: f64, regrets: &[f64]) -> f64 {
    let num: f64 = predictions
        .iter()
        .zip(regrets)
        .map(|(p, r)| r * (p - label).powi(2))
        .sum();
    let den: f64 = predictions.iter().map(|p| (p - label).powi(4)).sum();
    num / den
}

/// Runs the named bundle and writes `<name>.json` and `<name>.txt` into
/// `out_dir` (created if needed). Threshold misses do not error — they come
/// back as failed checks for the caller to act on.
pub fn run_repro(name: ReproName, out_dir: &Path) -> Result<ReproOutcome> {
    fs::create_dir_all(out_dir)?;
    let mut outcome = if name == ReproName::Counterexample {
        counterexample_outcome()?
    } else {
        let mut reports = Vec::new();
        for config in bundle_configs(name) {
            reports.push(run_experiment(&config)?);
        }
        let checks = bundle_checks(name, &reports);
        ReproOutcome {
            name,
            reports,
            counterexample: None,
            checks,
            files: vec![],
        }
    };

    let json_path = out_dir.join(format!("{}.json", name.as_str()));
    fs::write(&json_path, serde_json::to_string_pretty(&outcome)?)?;
    let csv_path = out_dir.join(format!("{}.csv", name.as_str()));
    fs::write(&csv_path, render_csv(&outcome))?;
    let text_path = out_dir.join(format!("{}.txt", name.as_str()));
    fs::write(&text_path, render_outcome(&outcome))?;
    outcome.files = vec![json_path, csv_path, text_path];
    Ok(outcome)
}

/// Flat CSV rendering: one `cell` row per experiment in the bundle, one
/// `check` row per threshold; what lands in `<name>.csv`.
fn render_csv(outcome: &ReproOutcome) -> String {
    let mut out = String::from(
        "kind,label,method,test_dq_mean,test_dq_sem,val_dq_mean,val_dq_sem,\
         val_mse_mean,aborted_trials,value,requirement,pass\n",
    );
    for report in &outcome.reports {
        out.push_str(&format!(
            "cell,{},{},{},{},{},{},{},{},,,\n",
            report.config.name,
            report.config.method.as_str(),
            report.test_dq.mean,
            report.test_dq.sem,
            report.val_dq.mean,
            report.val_dq.sem,
            report.val_mse.mean,
            report.aborted.len(),
        ));
    }
    for check in &outcome.checks {
        out.push_str(&format!(
            "check,{},,,,,,,,{},{},{}\n",
            check.label, check.value, check.requirement, check.pass
        ));
    }
    out
}

/// Aligned text rendering of a bundle outcome; what lands in `<name>.txt`.
pub fn render_outcome(outcome: &ReproOutcome) -> String {
    let mut out = String::new();
    let title = outcome.name.as_str();
    out.push_str(title);
    out.push('\n');
    out.push_str(&"=".repeat(title.len()));
    out.push_str("\n\n");

    if let Some(detail) = &outcome.counterexample {
        render_counterexample(&mut out, detail);
    } else {
        render_reports(&mut out, &outcome.reports);
    }

    out.push_str("checks\n------\n");
    for c in &outcome.checks {
        out.push_str(&format!(
            "{}  {:<58} {:>12.6}  (require {})\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.label,
            c.value,
            c.requirement,
        ));
    }
    out.push_str(&format!(
        "\noverall: {}\n",
        if outcome.all_pass() { "PASS" } else { "FAIL" }
    ));
    out
}

fn render_reports(out: &mut String, reports: &[ExperimentReport]) {
    out.push_str(&format!(
        "{:<28} {:<14} {:>18} {:>18} {:>12} {:>9}\n",
        "experiment", "method", "test DQ", "val DQ", "val MSE", "aborted"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<28} {:<14} {:>8.3} ± {:<7.3} {:>8.3} ± {:<7.3} {:>12.4e} {:>6}/{:<2}\n",
            report.config.name,
            report.config.method.as_str(),
            report.test_dq.mean,
            report.test_dq.sem,
            report.val_dq.mean,
            report.val_dq.sem,
            report.val_mse.mean,
            report.aborted.len(),
            report.config.num_trials,
        ));
    }
    out.push('\n');
}

fn render_counterexample(out: &mut String, detail: &CounterexampleDetail) {
    let closed = &detail.closed_form;
    out.push_str(&format!(
        "{:>6} {:>12} {:>12} {:>12} {:>12}\n",
        "offset", "pred (A=0)", "regret", "pred (A=1)", "regret"
    ));
    for k in 0..closed.low_predictions.len() {
        out.push_str(&format!(
            "{:>6} {:>12.4} {:>12.4} {:>12.4} {:>12.4}\n",
            k,
            closed.low_predictions[k],
            closed.low_regrets[k],
            closed.high_predictions[k],
            closed.high_regrets[k],
        ));
    }
    out.push('\n');
    out.push_str(&format!(
        "closed-form fit:  w_low {:.6}  w_high {:.6}  -> prediction for A {:.4} ({})\n",
        closed.w_low,
        closed.w_high,
        closed.prediction_for_a,
        if closed.resource_to_a {
            "flips to A"
        } else {
            "stays with B"
        },
    ));
    let gd = &detail.gradient_fit;
    out.push_str(&format!(
        "gradient fit:     w_low {:.6}  w_high {:.6}  -> prediction for A {:.4} ({})\n",
        gd.w_low,
        gd.w_high,
        gd.prediction_for_a,
        if gd.resource_to_a {
            "flips to A"
        } else {
            "stays with B"
        },
    ));
    out.push_str(&format!(
        "perturbed pair:   w_low {:.6}  w_high {:.6}  -> prediction for A {:.4} ({})\n\n",
        detail.perturbed_w_low,
        detail.perturbed_w_high,
        detail.perturbed_prediction,
        if detail.perturbed_resource_to_a {
            "flips to A"
        } else {
            "stays with B"
        },
    ));
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn names_round_trip_through_strings() {
        for name in ReproName::ALL {
            assert_eq!(ReproName::from_str(name.as_str()).unwrap(), name);
        }
        assert!(ReproName::from_str("table9").is_err());
    }

    #[test]
    fn every_bundle_validates_its_configs() {
        for name in ReproName::ALL {
            for config in bundle_configs(name) {
                config.validate().unwrap_or_else(|e| {
                    panic!("{} config {} invalid: {e}", name.as_str(), config.name)
                });
            }
        }
    }

    #[test]
    fn counterexample_bundle_passes_and_writes_artifacts() {
        let dir = tempdir().unwrap();
        let outcome = run_repro(ReproName::Counterexample, dir.path()).unwrap();
        assert!(outcome.all_pass(), "{:#?}", outcome.checks);
        assert_eq!(outcome.files.len(), 3);
        for file in &outcome.files {
            assert!(file.exists());
        }

        // the JSON artifact parses back into the same checks
        let raw = std::fs::read_to_string(&outcome.files[0]).unwrap();
        let parsed: ReproOutcome = serde_json::from_str(&raw).unwrap();
        assert_eq!(parsed.checks.len(), outcome.checks.len());
        assert!(parsed.all_pass());

        // the CSV has a header plus one row per check, all rectangular
        let csv = std::fs::read_to_string(&outcome.files[1]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + outcome.checks.len());
        let width = lines[0].split(',').count();
        for line in &lines {
            assert_eq!(line.split(',').count(), width, "ragged row: {line}");
        }
        assert!(lines[1..].iter().all(|l| l.starts_with("check,")));
        assert!(lines[1..].iter().all(|l| l.ends_with(",true")));

        let text = std::fs::read_to_string(&outcome.files[2]).unwrap();
        assert!(text.contains("overall: PASS"));
        assert!(text.contains("stays with B"));
        assert!(text.contains("flips to A"));
    }

    #[test]
    fn perturbed_pair_constants_actually_flip() {
        let (prediction, to_a) = prediction_for_a(PERTURBED_W_LOW, PERTURBED_W_HIGH).unwrap();
        assert!(to_a, "prediction {prediction} should exceed 0.55");
    }

    #[test]
    fn rendering_a_failed_check_says_fail() {
        let outcome = ReproOutcome {
            name: ReproName::Table1Cubic,
            reports: vec![],
            counterexample: None,
            checks: vec![check("made-up margin", "> 0.5", 0.2, false)],
            files: vec![],
        };
        let text = render_outcome(&outcome);
        assert!(text.contains("FAIL  made-up margin"));
        assert!(text.contains("overall: FAIL"));
    }
}
