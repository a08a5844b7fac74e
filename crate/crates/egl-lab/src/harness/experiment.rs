//! The four-step pipeline behind [`run_experiment`]: per trial, regenerate
//! and split the dataset, produce candidate predictions, price them with the
//! solver, fit the learned loss, train the predictive model on it, and score
//! normalized decision quality on the held-out splits.

use std::time::Instant;

use rayon::prelude::*;

use crate::datagen::{
    generate, model_input_width, model_inputs, split_dataset, Dataset, DatasetSpec, Domain,
};
use crate::error::{Error, Result};
use crate::losses::{
    fit_fbp, fit_lodl_dataset, induced_params, FbpInstance, LearnedLossTable, LossFamily,
    LossParams,
};
use crate::nn::{predict_instance, train, InstanceLoss, Mlp, MseLoss, TrainConfig, TrainExample};
use crate::problems::{
    FrankWolfeSettings, PortfolioProblem, TopKProblem, WebAdvSolveMode, WebAdvertisingProblem,
};
use crate::pto::{normalized_dq, DecisionProblem, PtoInstance, Split};
use crate::sampling::{
    build_loss_dataset, sample_dataset, BuildOptions, CandidateSample, InstanceSamples, Provenance,
};
use crate::seed::derive_seed;

use super::report::{ExperimentReport, StepTimings, TrialAbort, TrialOutcome};
use super::{ExperimentConfig, Method};

/// Risk-aversion constant of the portfolio objective zᵀy − λ·zᵀQz.
pub const PORTFOLIO_RISK_AVERSION: f64 = 0.001;

// Per-trial random streams, all derived from the trial's base seed. Keeping
// the tags distinct (and candidate-indexed where Step 3/4 runs once per
// family) is what makes trials reproducible and methods comparable within a
// trial.
const DATASET_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
const SAMPLER_STREAM: u64 = 3;
const LODL_FIT_STREAM: u64 = 4;
const FBP_FIT_STREAM: u64 = 5;
const MODEL_INIT_STREAM: u64 = 6;
const MODEL_SHUFFLE_STREAM: u64 = 7;
const BASELINE_STREAM: u64 = 8;
const BASE_MODEL_INIT_STREAM: u64 = 9;
const BASE_MODEL_SHUFFLE_STREAM: u64 = 10;

fn stream(seed: u64, tag: u64, index: usize) -> u64 {
    derive_seed(derive_seed(seed, tag), index as u64)
}

/// Run every trial of `config` (in parallel) and aggregate the survivors.
/// Fails if the config is invalid or more than half the trials abort.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let results: Vec<(usize, u64, Result<TrialOutcome>)> = config
        .seeds
        .par_iter()
        .enumerate()
        .map(|(trial, seed)| (trial, *seed, run_trial(config, trial, *seed)))
        .collect();
    let mut trials = Vec::new();
    let mut aborted = Vec::new();
    for (trial, seed, result) in results {
        match result {
            Ok(outcome) => trials.push(outcome),
            Err(e) => aborted.push(TrialAbort {
                trial,
                seed,
                message: e.to_string(),
            }),
        }
    }
    ExperimentReport::assemble(config.clone(), trials, aborted)
}

/// The decision problem a dataset's domain implies, with the workbench-wide
/// solver settings (exact web-adv enumeration, default Frank-Wolfe controls).
pub fn make_problem(dataset: &Dataset) -> Result<Box<dyn DecisionProblem>> {
    let spec = &dataset.spec;
    Ok(match spec.domain {
        Domain::Cubic | Domain::CubicHard => Box::new(TopKProblem::new(spec.k, spec.dim())?),
        Domain::Webadv => Box::new(WebAdvertisingProblem::new(
            spec.k,
            spec.num_sites,
            spec.num_users,
            WebAdvSolveMode::Exact,
        )?),
        Domain::Portfolio => {
            let q = dataset
                .q
                .as_ref()
                .ok_or_else(|| Error::Input("portfolio dataset is missing its Q matrix".into()))?;
            Box::new(PortfolioProblem::new(
                q,
                PORTFOLIO_RISK_AVERSION,
                FrankWolfeSettings::default(),
            )?)
        }
    })
}

/// The instances whose losses get fit: training split first, then
/// validation, both in dataset order. Test instances never enter Steps 1-3.
fn fitting_view(dataset: &Dataset) -> (Dataset, usize) {
    let train: Vec<PtoInstance> = dataset
        .instances
        .iter()
        .filter(|i| i.split == Split::Train)
        .cloned()
        .collect();
    let n_train = train.len();
    let mut instances = train;
    instances.extend(
        dataset
            .instances
            .iter()
            .filter(|i| i.split == Split::Validation)
            .cloned(),
    );
    (
        Dataset {
            spec: dataset.spec.clone(),
            generator_version: dataset.generator_version.clone(),
            instances,
            q: dataset.q.clone(),
        },
        n_train,
    )
}

fn model_widths(config: &ExperimentConfig, spec: &DatasetSpec) -> Vec<usize> {
    let mut widths = vec![model_input_width(spec, config.one_hot_users)];
    widths.extend_from_slice(&config.hidden_widths);
    widths.push(1);
    widths
}

/// Feature rows, labels, and loss index for each view instance, in view
/// order (so `loss_index` lines up with a loss table fit on the same view).
fn view_examples(view: &Dataset, config: &ExperimentConfig) -> Vec<TrainExample> {
    view.instances
        .iter()
        .enumerate()
        .map(|(index, instance)| TrainExample {
            features: model_inputs(&view.spec, instance, config.one_hot_users),
            labels: instance.labels.clone(),
            loss_index: index,
        })
        .collect()
}

fn seeded_train_config(base: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..base.clone()
    }
}

/// Mean normalized decision quality and mean per-coordinate squared error
/// of `model` over one split. Baseline draws derive from the trial seed and
/// the instance's dataset position, so every method inside a trial faces
/// the same baseline.
fn evaluate_split(
    problem: &dyn DecisionProblem,
    dataset: &Dataset,
    config: &ExperimentConfig,
    model: &Mlp,
    split: Split,
    trial_seed: u64,
) -> Result<(f64, f64)> {
    let baseline_base = derive_seed(trial_seed, BASELINE_STREAM);
    let mut dq_total = 0.0;
    let mut mse_total = 0.0;
    let mut count = 0usize;
    for (position, instance) in dataset.instances.iter().enumerate() {
        if instance.split != split {
            continue;
        }
        let inputs = model_inputs(&dataset.spec, instance, config.one_hot_users);
        let predictions = predict_instance(model, &inputs)?;
        dq_total += normalized_dq(
            problem,
            &predictions,
            &instance.labels,
            derive_seed(baseline_base, position as u64),
            config.num_baseline_draws,
        )?;
        mse_total += MseLoss.loss(0, &predictions, &instance.labels);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Input(format!("{split:?} split has no instances")));
    }
    Ok((dq_total / count as f64, mse_total / count as f64))
}

/// Step 1 for the one-sample method: train a plain-MSE model and take its
/// converged prediction as each instance's single candidate.
fn one_sample_candidates(
    view: &Dataset,
    config: &ExperimentConfig,
    widths: &[usize],
    examples: &[TrainExample],
    n_train: usize,
    seed: u64,
) -> Result<Vec<InstanceSamples>> {
    let mut base = Mlp::new(widths, stream(seed, BASE_MODEL_INIT_STREAM, 0))?;
    let train_config = seeded_train_config(&config.train, stream(seed, BASE_MODEL_SHUFFLE_STREAM, 0));
    let history = train(
        &mut base,
        &examples[..n_train],
        &examples[n_train..],
        &MseLoss,
        &train_config,
    )?;
    view.instances
        .iter()
        .map(|instance| {
            let inputs = model_inputs(&view.spec, instance, config.one_hot_users);
            Ok(InstanceSamples {
                instance_id: instance.instance_id.clone(),
                samples: vec![CandidateSample {
                    predictions: predict_instance(&base, &inputs)?,
                    regret: None,
                    provenance: Provenance::Model {
                        model_index: 0,
                        checkpoint_step: history.updates,
                    },
                }],
            })
        })
        .collect()
}

/// Fit one candidate family on the priced samples and return the loss table
/// driving Step 4.
fn fit_candidate(
    config: &ExperimentConfig,
    view: &Dataset,
    n_train: usize,
    entries: &[InstanceSamples],
    family: LossFamily,
    candidate: usize,
    seed: u64,
) -> Result<LearnedLossTable> {
    let dims: Vec<usize> = view.instances.iter().map(PtoInstance::dim).collect();
    let params: Vec<LossParams> = if config.method.uses_feature_network() {
        let fbp_instances: Vec<FbpInstance> = view
            .instances
            .iter()
            .zip(entries)
            .map(|(instance, entry)| FbpInstance {
                labels: instance.labels.clone(),
                features: model_inputs(&view.spec, instance, config.one_hot_users),
                samples: entry.samples.clone(),
            })
            .collect();
        let mut fbp_config = config.fbp.clone();
        fbp_config.seed = stream(seed, FBP_FIT_STREAM, candidate);
        let fit = fit_fbp(
            &fbp_instances[..n_train],
            &fbp_instances[n_train..],
            family,
            &fbp_config,
        )?;
        fbp_instances
            .iter()
            .map(|fi| induced_params(&fit.network, &fi.features))
            .collect::<Result<_>>()?
    } else {
        let labels: Vec<&[f64]> = view.instances.iter().map(|i| i.labels.as_slice()).collect();
        let mut fit_config = config.fit.clone();
        fit_config.seed = stream(seed, LODL_FIT_STREAM, candidate);
        fit_lodl_dataset(entries, &labels, family, &fit_config)?
            .into_iter()
            .map(|fitted| fitted.params)
            .collect()
    };
    LearnedLossTable::new(params, &dims)
}

fn run_trial(config: &ExperimentConfig, trial: usize, seed: u64) -> Result<TrialOutcome> {
    let mut spec = config.dataset.clone();
    spec.seed = derive_seed(seed, DATASET_STREAM);
    let dataset = generate(&spec)?;
    let dataset = split_dataset(
        dataset,
        spec.split_fractions,
        config.effective_split_mode(),
        derive_seed(seed, SPLIT_STREAM),
    )?;
    let problem = make_problem(&dataset)?;
    let (view, n_train) = fitting_view(&dataset);
    if n_train == 0 {
        return Err(Error::Input("training split is empty".into()));
    }
    let widths = model_widths(config, &spec);
    let examples = view_examples(&view, config);
    let (train_examples, val_examples) = examples.split_at(n_train);

    let mut timings = StepTimings::default();
    let mut chosen_family = None;

    let model = if config.method == Method::TwoStageMse {
        let mut model = Mlp::new(&widths, stream(seed, MODEL_INIT_STREAM, 0))?;
        let train_config =
            seeded_train_config(&config.train, stream(seed, MODEL_SHUFFLE_STREAM, 0));
        let started = Instant::now();
        train(&mut model, train_examples, val_examples, &MseLoss, &train_config)?;
        timings.train_seconds = started.elapsed().as_secs_f64();
        model
    } else {
        // Step 1: candidate predictions
        let started = Instant::now();
        let mut entries = if config.method == Method::LzOneSample {
            one_sample_candidates(&view, config, &widths, &examples, n_train, seed)?
        } else {
            let mut sampler = config.sampler.clone();
            sampler.seed = derive_seed(seed, SAMPLER_STREAM);
            sample_dataset(&view, &widths, config.one_hot_users, &sampler)?
        };
        timings.sampling_seconds = started.elapsed().as_secs_f64();

        // Step 2: price every candidate with the solver
        let instance_refs: Vec<&PtoInstance> = view.instances.iter().collect();
        let step2 = build_loss_dataset(
            &mut entries,
            &instance_refs,
            problem.as_ref(),
            &BuildOptions::default(),
        )?;
        timings.pricing_seconds = step2.wall_seconds;
        timings.num_solves = step2.num_solves;

        // Steps 3 and 4 once per candidate family; keep the candidate with
        // the best validation decision quality.
        let mut best: Option<(f64, Mlp, LossFamily)> = None;
        for (candidate, family) in config.candidate_families().into_iter().enumerate() {
            let started = Instant::now();
            let table = fit_candidate(config, &view, n_train, &entries, family, candidate, seed)?;
            timings.loss_fit_seconds += started.elapsed().as_secs_f64();

            let mut model = Mlp::new(&widths, stream(seed, MODEL_INIT_STREAM, candidate))?;
            let train_config =
                seeded_train_config(&config.train, stream(seed, MODEL_SHUFFLE_STREAM, candidate));
            let started = Instant::now();
            train(&mut model, train_examples, val_examples, &table, &train_config)?;
            timings.train_seconds += started.elapsed().as_secs_f64();

            let (val_dq, _) =
                evaluate_split(problem.as_ref(), &dataset, config, &model, Split::Validation, seed)?;
            let better = best
                .as_ref()
                .map(|(best_dq, _, _)| val_dq > *best_dq)
                .unwrap_or(true);
            if better {
                best = Some((val_dq, model, family));
            }
        }
        let (_, model, family) = best.expect("at least one candidate family");
        chosen_family = Some(family);
        model
    };

    let (val_dq, val_mse) =
        evaluate_split(problem.as_ref(), &dataset, config, &model, Split::Validation, seed)?;
    let (test_dq, test_mse) =
        evaluate_split(problem.as_ref(), &dataset, config, &model, Split::Test, seed)?;
    Ok(TrialOutcome {
        trial,
        seed,
        test_normalized_dq: test_dq,
        val_normalized_dq: val_dq,
        test_mse,
        val_mse,
        chosen_family,
        timings,
    })
}
