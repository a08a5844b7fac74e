//! Experiment reports: per-trial outcomes, mean/SEM aggregation, and the
//! per-step timing table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossFamily;

use super::ExperimentConfig;

/// Wall-clock accounting for the meta-algorithm steps of one trial.
/// Evaluation time is excluded — it is not part of the pipeline being
/// measured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    /// Step 1: candidate generation (for the one-sample method this is the
    /// base model's training plus its predictions).
    pub sampling_seconds: f64,
    /// Step 2: pricing every candidate with the solver.
    pub pricing_seconds: f64,
    /// Step 3: fitting loss parameters (all candidate families combined).
    pub loss_fit_seconds: f64,
    /// Step 4: training the predictive model (all candidate families).
    pub train_seconds: f64,
    /// Solver invocations made during Step 2.
    pub num_solves: usize,
}

impl StepTimings {
    pub fn total_seconds(&self) -> f64 {
        self.sampling_seconds + self.pricing_seconds + self.loss_fit_seconds + self.train_seconds
    }

    /// Copy with wall-clock fields zeroed; solve counts are deterministic
    /// and stay.
    fn without_wall_times(&self) -> Self {
        Self {
            sampling_seconds: 0.0,
            pricing_seconds: 0.0,
            loss_fit_seconds: 0.0,
            train_seconds: 0.0,
            num_solves: self.num_solves,
        }
    }
}

/// One completed trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// Mean normalized decision quality over the test split.
    pub test_normalized_dq: f64,
    /// Mean normalized decision quality over the validation split.
    pub val_normalized_dq: f64,
    /// Mean per-coordinate squared error of the final model on each split.
    pub test_mse: f64,
    pub val_mse: f64,
    /// The family the trial settled on (methods with one candidate echo it).
    pub chosen_family: Option<LossFamily>,
    pub timings: StepTimings,
}

/// A trial that errored out; the experiment tolerates these up to half the
/// trial count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAbort {
    pub trial: usize,
    pub seed: u64,
    pub message: String,
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSem {
    pub mean: f64,
    pub sem: f64,
}

/// Mean and standard error of the mean (sample standard deviation over
/// √n). A single value has no spread estimate; its SEM is reported as 0.
pub fn mean_sem(values: &[f64]) -> MeanSem {
    if values.is_empty() {
        return MeanSem::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return MeanSem { mean, sem: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    MeanSem {
        mean,
        sem: (var / n).sqrt(),
    }
}

/// Aggregated outcome of a multi-trial experiment. All headline numbers are
/// recomputed from the stored per-trial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialOutcome>,
    pub aborted: Vec<TrialAbort>,
    pub test_dq: MeanSem,
    pub val_dq: MeanSem,
    pub test_mse: MeanSem,
    pub val_mse: MeanSem,
}

impl ExperimentReport {
    /// Aggregate trial outcomes; fails when more than half the trials
    /// aborted.
    pub fn assemble(
        config: ExperimentConfig,
        trials: Vec<TrialOutcome>,
        aborted: Vec<TrialAbort>,
    ) -> Result<Self> {
        if aborted.len() * 2 > config.num_trials {
            let first = aborted
                .first()
                .map(|a| a.message.clone())
                .unwrap_or_default();
            return Err(Error::Experiment(format!(
                "{} of {} trials aborted (first: {first})",
                aborted.len(),
                config.num_trials
            )));
        }
        let collect = |f: fn(&TrialOutcome) -> f64| -> Vec<f64> { trials.iter().map(f).collect() };
        let test_dq = mean_sem(&collect(|t| t.test_normalized_dq));
        let val_dq = mean_sem(&collect(|t| t.val_normalized_dq));
        let test_mse = mean_sem(&collect(|t| t.test_mse));
        let val_mse = mean_sem(&collect(|t| t.val_mse));
        Ok(Self {
            config,
            trials,
            aborted,
            test_dq,
            val_dq,
            test_mse,
            val_mse,
        })
    }

    /// Copy with every wall-clock field zeroed, for comparing two runs of
    /// the same config: everything else is deterministic.
    pub fn without_wall_times(&self) -> Self {
        let mut clone = self.clone();
        for trial in &mut clone.trials {
            trial.timings = trial.timings.without_wall_times();
        }
        clone
    }

    pub fn one_line_summary(&self) -> String {
        format!(
            "{}: test DQ {:+.3} ± {:.3}, val DQ {:+.3} ± {:.3} ({} trials, {} aborted)",
            self.config.name,
            self.test_dq.mean,
            self.test_dq.sem,
            self.val_dq.mean,
            self.val_dq.sem,
            self.trials.len(),
            self.aborted.len(),
        )
    }
}

/// Per-step wall-time aggregates across a report's trials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimingSummary {
    pub sampling: MeanSem,
    pub pricing: MeanSem,
    pub loss_fit: MeanSem,
    pub train: MeanSem,
    pub total: MeanSem,
    pub mean_solves: f64,
}

/// Collapse a report's per-trial timings into per-step means. A report with
/// no completed trials yields all zeros.
pub fn step_timing_summary(report: &ExperimentReport) -> StepTimingSummary {
    let collect = |f: fn(&StepTimings) -> f64| -> Vec<f64> {
        report.trials.iter().map(|t| f(&t.timings)).collect()
    };
    let solves: Vec<f64> = report
        .trials
        .iter()
        .map(|t| t.timings.num_solves as f64)
        .collect();
    StepTimingSummary {
        sampling: mean_sem(&collect(|t| t.sampling_seconds)),
        pricing: mean_sem(&collect(|t| t.pricing_seconds)),
        loss_fit: mean_sem(&collect(|t| t.loss_fit_seconds)),
        train: mean_sem(&collect(|t| t.train_seconds)),
        total: mean_sem(&collect(StepTimings::total_seconds)),
        mean_solves: if solves.is_empty() {
            0.0
        } else {
            solves.iter().sum::<f64>() / solves.len() as f64
        },
    }
}

/// Aligned text table of the per-step times.
pub fn render_timing_table(name: &str, summary: &StepTimingSummary) -> String {
    let rows = [
        ("candidate generation (step 1)", summary.sampling),
        ("dataset pricing      (step 2)", summary.pricing),
        ("loss fitting         (step 3)", summary.loss_fit),
        ("model training       (step 4)", summary.train),
        ("total", summary.total),
    ];
    let mut out = format!("per-step wall time for {name} (seconds, mean ± SEM over trials)\n");
    for (label, cell) in rows {
        out.push_str(&format!(
            "  {label:<30} {:>10.3} ± {:.3}\n",
            cell.mean, cell.sem
        ));
    }
    out.push_str(&format!(
        "  {:<30} {:>10.1}\n",
        "solver calls in step 2", summary.mean_solves
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::DatasetSpec;
    use crate::harness::Method;
    use crate::losses::{FbpConfig, FitConfig};
    use crate::nn::TrainConfig;
    use crate::sampling::SamplerConfig;

    fn config(num_trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: "agg".into(),
            dataset: DatasetSpec::cubic(10, 5, 0),
            method: Method::TwoStageMse,
            family: None,
            sampler: SamplerConfig::default(),
            split_mode: None,
            one_hot_users: true,
            hidden_widths: vec![],
            fit: FitConfig::default(),
            fbp: FbpConfig::default(),
            train: TrainConfig::default(),
            num_trials,
            seeds: (0..num_trials as u64).collect(),
            num_baseline_draws: 5,
        }
    }

    fn outcome(trial: usize, test: f64) -> TrialOutcome {
        TrialOutcome {
            trial,
            seed: trial as u64,
            test_normalized_dq: test,
            val_normalized_dq: test / 2.0,
            test_mse: 1.0,
            val_mse: 2.0,
            chosen_family: None,
            timings: StepTimings {
                sampling_seconds: 1.0,
                pricing_seconds: 10.0,
                loss_fit_seconds: 2.0,
                train_seconds: 3.0,
                num_solves: 40,
            },
        }
    }

    #[test]
    fn mean_sem_matches_hand_computation() {
        // values 1, 2, 3: mean 2, sample sd 1, sem 1/sqrt(3)
        let got = mean_sem(&[1.0, 2.0, 3.0]);
        assert!((got.mean - 2.0).abs() < 1e-15);
        assert!((got.sem - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
        // single value: no spread estimate
        let single = mean_sem(&[5.0]);
        assert_eq!(single.mean, 5.0);
        assert_eq!(single.sem, 0.0);
    }

    #[test]
    fn headline_values_recomputed_from_trials() {
        let report = ExperimentReport::assemble(
            config(2),
            vec![outcome(0, 0.4), outcome(1, 0.8)],
            vec![],
        )
        .unwrap();
        assert!((report.test_dq.mean - 0.6).abs() < 1e-15);
        assert!((report.val_dq.mean - 0.3).abs() < 1e-15);
        let expected_sem = {
            let sd = ((0.4f64 - 0.6).powi(2) + (0.8f64 - 0.6).powi(2)).sqrt(); // n-1 = 1
            sd / 2.0f64.sqrt()
        };
        assert!((report.test_dq.sem - expected_sem).abs() < 1e-15);
    }

    #[test]
    fn more_than_half_aborted_fails_the_experiment() {
        let abort = |trial| TrialAbort {
            trial,
            seed: trial as u64,
            message: "solver error: boom".into(),
        };
        let err = ExperimentReport::assemble(
            config(3),
            vec![outcome(0, 0.5)],
            vec![abort(1), abort(2)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Experiment(_)));
        // exactly half is tolerated
        ExperimentReport::assemble(config(4), vec![outcome(0, 0.5), outcome(1, 0.5)], vec![
            abort(2),
            abort(3),
        ])
        .unwrap();
    }

    #[test]
    fn wall_times_zero_out_but_solve_counts_stay() {
        let report =
            ExperimentReport::assemble(config(1), vec![outcome(0, 0.4)], vec![]).unwrap();
        let stripped = report.without_wall_times();
        assert_eq!(stripped.trials[0].timings.sampling_seconds, 0.0);
        assert_eq!(stripped.trials[0].timings.num_solves, 40);
        assert_eq!(stripped.test_dq, report.test_dq);
    }

    #[test]
    fn timing_summary_and_table() {
        let report = ExperimentReport::assemble(
            config(2),
            vec![outcome(0, 0.4), outcome(1, 0.8)],
            vec![],
        )
        .unwrap();
        let summary = step_timing_summary(&report);
        assert!((summary.pricing.mean - 10.0).abs() < 1e-12);
        assert!((summary.total.mean - 16.0).abs() < 1e-12);
        assert_eq!(summary.mean_solves, 40.0);
        let table = render_timing_table("agg", &summary);
        assert!(table.contains("step 2"));
        assert!(table.contains("16.000"));
    }

    #[test]
    fn empty_report_renders_zeros() {
        let report = ExperimentReport::assemble(config(1), vec![], vec![]).unwrap();
        let summary = step_timing_summary(&report);
        assert_eq!(summary.total.mean, 0.0);
        let table = render_timing_table("empty", &summary);
        assert!(table.contains("0.000"));
    }
}
