//! Candidate-prediction sampling and regret-dataset construction — the first
//! two steps of the learned-loss pipeline.
//!
//! Step 1 produces candidate predictions ỹ around each instance's labels,
//! either by adding Gaussian noise or by checkpointing models mid-way
//! through squared-error training and letting each checkpoint predict every
//! instance. Step 2 prices each candidate by running the decision problem's
//! solver on it and recording the decision-quality regret, giving the
//! (ỹ, regret) pairs that loss fitting consumes.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{model_inputs, Dataset};
use crate::error::{Error, Result};
use crate::nn::{predict_instance, Mlp, Optimizer, OptimizerKind};
use crate::pto::{decision_quality, DecisionProblem, PtoInstance, Split};
use crate::seed::derive_seed;

/// Where a candidate prediction came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Gaussian { sigma: f64 },
    Model { model_index: usize, checkpoint_step: usize },
    /// The zero-noise candidate ỹ = y appended during Step 2.
    Anchor,
}

/// One candidate prediction for one instance; `regret` is filled by Step 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSample {
    pub predictions: Vec<f64>,
    pub regret: Option<f64>,
    pub provenance: Provenance,
}

/// All candidates for one instance, in deterministic generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSamples {
    pub instance_id: String,
    pub samples: Vec<CandidateSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Gaussian,
    ModelBased,
}

/// Step-1 configuration covering both sampling strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// K: candidates per instance.
    pub samples_per_instance: usize,
    /// Gaussian noise scale.
    pub sigma: f64,
    /// Model-based: number of independently seeded models.
    pub num_models: usize,
    /// Model-based: SGD learning rate for the sampler models.
    pub learning_rate: f64,
    /// Model-based: total update budget shared across all models.
    pub update_budget: usize,
    /// Model-based: also checkpoint the untrained model (step 0).
    pub include_step_zero: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Gaussian,
            samples_per_instance: 32,
            sigma: 1.0,
            num_models: 5,
            learning_rate: 0.1,
            update_budget: 50_000,
            include_step_zero: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_instance == 0 {
            return Err(Error::Config("need at least one sample per instance".into()));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.num_models == 0 {
            return Err(Error::Config("need at least one sampler model".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "sampler learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// K perturbed copies of the labels: ỹ = y + ε, ε i.i.d. Normal(0, σ²) per
/// coordinate. σ = 0 reproduces the labels exactly.
pub fn gaussian_sample(
    instance: &PtoInstance,
    sigma: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<CandidateSample>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Input(format!("sigma must be >= 0, got {sigma}")));
    }
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| Error::Input(format!("invalid noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|_| CandidateSample {
            predictions: instance
                .labels
                .iter()
                .map(|y| y + noise.sample(&mut rng))
                .collect(),
            regret: None,
            provenance: Provenance::Gaussian { sigma },
        })
        .collect())
}

/// Gaussian candidates for every instance of a dataset, one derived seed
/// stream per instance position.
pub fn gaussian_sample_dataset(
    dataset: &Dataset,
    config: &SamplerConfig,
) -> Result<Vec<InstanceSamples>> {
    config.validate()?;
    dataset
        .instances
        .iter()
        .enumerate()
        .map(|(index, instance)| {
            Ok(InstanceSamples {
                instance_id: instance.instance_id.clone(),
                samples: gaussian_sample(
                    instance,
                    config.sigma,
                    config.samples_per_instance,
                    derive_seed(config.seed, index as u64),
                )?,
            })
        })
        .collect()
}

/// Checkpoint steps for one model: `count` equally spaced points in its
/// update budget `updates`, ending at the final update. With
/// `include_step_zero` the spacing starts at the untrained model instead.
fn checkpoint_steps(updates: usize, count: usize, include_step_zero: bool) -> Vec<usize> {
    if count == 0 {
        return Vec::new();
    }
    if updates == 0 {
        // zero-budget debug mode: every checkpoint is the untrained model
        return vec![0; count];
    }
    if include_step_zero {
        if count == 1 {
            return vec![0];
        }
        (0..count)
            .map(|t| ((t * updates) as f64 / (count - 1) as f64).round() as usize)
            .collect()
    } else {
        (1..=count)
            .map(|t| ((t * updates) as f64 / count as f64).round() as usize)
            .collect()
    }
}

/// Candidates from intermediate models: trains `num_models` models with
/// plain SGD on squared error over the train split, capturing each model at
/// its checkpoint steps; every checkpoint predicts every instance in the
/// dataset. K samples per instance are split K/num_models per model, the
/// remainder going to the earliest models.
pub fn model_based_sample(
    dataset: &Dataset,
    model_widths: &[usize],
    one_hot_users: bool,
    config: &SamplerConfig,
) -> Result<Vec<InstanceSamples>> {
    config.validate()?;
    let k = config.samples_per_instance;
    let num_models = config.num_models;
    let per_model_updates = config.update_budget / num_models;

    // K/num_models checkpoints each, remainder to the earliest models
    let checkpoint_counts: Vec<usize> = (0..num_models)
        .map(|m| k / num_models + usize::from(m < k % num_models))
        .collect();
    if config.update_budget > 0 {
        for &count in &checkpoint_counts {
            let needed = if config.include_step_zero {
                count.saturating_sub(1)
            } else {
                count
            };
            if per_model_updates < needed {
                return Err(Error::Config(format!(
                    "update budget {} gives {per_model_updates} updates per model, too few \
                     for {count} checkpoints",
                    config.update_budget
                )));
            }
        }
    }

    let train_instances: Vec<&PtoInstance> = dataset
        .instances
        .iter()
        .filter(|i| i.split == Split::Train)
        .collect();
    if train_instances.is_empty() {
        return Err(Error::Input(
            "model-based sampling needs a nonempty train split".into(),
        ));
    }
    let train_inputs: Vec<Vec<Vec<f64>>> = train_instances
        .iter()
        .map(|i| model_inputs(&dataset.spec, i, one_hot_users))
        .collect();
    let all_inputs: Vec<Vec<Vec<f64>>> = dataset
        .instances
        .iter()
        .map(|i| model_inputs(&dataset.spec, i, one_hot_users))
        .collect();

    let mut entries: Vec<InstanceSamples> = dataset
        .instances
        .iter()
        .map(|i| InstanceSamples {
            instance_id: i.instance_id.clone(),
            samples: Vec::with_capacity(k),
        })
        .collect();

    for model_index in 0..num_models {
        let model_seed = derive_seed(config.seed, 0x6D62_7300 + model_index as u64);
        let mut model = Mlp::new(model_widths, model_seed)?;
        let steps = checkpoint_steps(
            per_model_updates,
            checkpoint_counts[model_index],
            config.include_step_zero,
        );
        let mut next_checkpoint = 0usize;
        let mut capture = |model: &Mlp, step: usize, entries: &mut Vec<InstanceSamples>| -> Result<()> {
            while next_checkpoint < steps.len() && steps[next_checkpoint] == step {
                for (entry, inputs) in entries.iter_mut().zip(&all_inputs) {
                    entry.samples.push(CandidateSample {
                        predictions: predict_instance(model, inputs)?,
                        regret: None,
                        provenance: Provenance::Model {
                            model_index,
                            checkpoint_step: step,
                        },
                    });
                }
                next_checkpoint += 1;
            }
            Ok(())
        };

        capture(&model, 0, &mut entries)?;
        let mut optimizer = Optimizer::new(OptimizerKind::Sgd, model.param_count());
        let mut grad = vec![0.0; model.param_count()];
        let mut update = 0usize;
        let mut epoch = 0u64;
        'training: while update < per_model_updates {
            let mut order: Vec<usize> = (0..train_instances.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(model_seed, epoch));
            order.shuffle(&mut rng);
            epoch += 1;
            // one instance per update: cheap steps, diverse trajectories
            for idx in order {
                let instance = train_instances[idx];
                let inputs = &train_inputs[idx];
                grad.fill(0.0);
                let mut loss = 0.0;
                let d = instance.labels.len() as f64;
                for (row, label) in inputs.iter().zip(&instance.labels) {
                    let cache = model.forward_cached(row)?;
                    let residual = cache.output()[0] - label;
                    loss += residual * residual / d;
                    model.backward(&cache, &[2.0 * residual / d], &mut grad)?;
                }
                if !loss.is_finite() {
                    return Err(Error::Training {
                        step: update,
                        message: format!("sampler model {model_index} loss became {loss}"),
                    });
                }
                optimizer.step(model.params_mut(), &grad, config.learning_rate);
                update += 1;
                capture(&model, update, &mut entries)?;
                if update >= per_model_updates {
                    break 'training;
                }
            }
        }
    }
    Ok(entries)
}

/// Step-1 dispatch on the configured sampler kind.
pub fn sample_dataset(
    dataset: &Dataset,
    model_widths: &[usize],
    one_hot_users: bool,
    config: &SamplerConfig,
) -> Result<Vec<InstanceSamples>> {
    match config.kind {
        SamplerKind::Gaussian => gaussian_sample_dataset(dataset, config),
        SamplerKind::ModelBased => {
            model_based_sample(dataset, model_widths, one_hot_users, config)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildOptions {
    /// Append the zero-regret candidate ỹ = y per instance. The loss
    /// families all vanish at ŷ = y, so the fit benefits from the one point
    /// whose regret is known exactly; off reproduces the bare method.
    pub append_anchor: bool,
    pub parallel: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            append_anchor: true,
            parallel: true,
        }
    }
}

/// Step-2 cost accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Step2Timing {
    /// End-to-end wall time of the build.
    pub wall_seconds: f64,
    /// Solver time per instance (its truth solve plus all candidate solves).
    pub per_instance_seconds: Vec<f64>,
    pub num_solves: usize,
}

/// Price every candidate: regret = DQ(y, y) − DQ(ỹ, y). Entries must align
/// with `instances` one-to-one and carry unfilled regrets.
pub fn build_loss_dataset(
    entries: &mut [InstanceSamples],
    instances: &[&PtoInstance],
    problem: &dyn DecisionProblem,
    options: &BuildOptions,
) -> Result<Step2Timing> {
    if entries.len() != instances.len() {
        return Err(Error::Dimension {
            expected: instances.len(),
            actual: entries.len(),
        });
    }
    for (entry, instance) in entries.iter().zip(instances) {
        if entry.instance_id != instance.instance_id {
            return Err(Error::Input(format!(
                "sample/instance mismatch: {} vs {}",
                entry.instance_id, instance.instance_id
            )));
        }
        if entry.samples.iter().any(|s| s.regret.is_some()) {
            return Err(Error::Input(format!(
                "instance {} already has regrets filled",
                entry.instance_id
            )));
        }
    }

    let tolerance = problem.solver_tolerance() + 1e-9;
    let started = Instant::now();
    let price_instance = |(entry, instance): (&mut InstanceSamples, &&PtoInstance)| -> Result<f64> {
        let instance_start = Instant::now();
        let dq_truth = decision_quality(problem, &instance.labels, &instance.labels)
            .map_err(|e| Error::Solver(format!("instance {}: {e}", instance.instance_id)))?;
        for (sample_index, sample) in entry.samples.iter_mut().enumerate() {
            let dq = decision_quality(problem, &sample.predictions, &instance.labels).map_err(
                |e| {
                    Error::Solver(format!(
                        "instance {} sample {sample_index}: {e}",
                        instance.instance_id
                    ))
                },
            )?;
            let regret = dq_truth - dq;
            if regret < -tolerance {
                return Err(Error::Solver(format!(
                    "instance {} sample {sample_index}: regret {regret:.3e} below \
                     -{tolerance:.3e}, solver inconsistency",
                    instance.instance_id
                )));
            }
            sample.regret = Some(regret);
        }
        if options.append_anchor {
            // regret of the truth against itself is identically zero — same
            // solve on both sides — so it is recorded without pricing
            entry.samples.push(CandidateSample {
                predictions: instance.labels.clone(),
                regret: Some(0.0),
                provenance: Provenance::Anchor,
            });
        }
        Ok(instance_start.elapsed().as_secs_f64())
    };

    let per_instance_seconds: Vec<f64> = if options.parallel {
        entries
            .par_iter_mut()
            .zip(instances.par_iter())
            .map(price_instance)
            .collect::<Result<_>>()?
    } else {
        entries
            .iter_mut()
            .zip(instances.iter())
            .map(price_instance)
            .collect::<Result<_>>()?
    };

    let num_solves = entries
        .iter()
        .map(|e| {
            e.samples
                .iter()
                .filter(|s| s.provenance != Provenance::Anchor)
                .count()
                + 1
        })
        .sum();
    Ok(Step2Timing {
        wall_seconds: started.elapsed().as_secs_f64(),
        per_instance_seconds,
        num_solves,
    })
}

#[derive(Serialize, Deserialize)]
struct LossDatasetHeader {
    config: SamplerConfig,
    problem: String,
    dim: usize,
}

/// Write a priced loss dataset: `<name>.meta` header + `<name>.data` with
/// one instance's samples per line.
pub fn save_loss_dataset(
    entries: &[InstanceSamples],
    config: &SamplerConfig,
    problem_name: &str,
    dim: usize,
    dir: &Path,
    name: &str,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = LossDatasetHeader {
        config: config.clone(),
        problem: problem_name.to_string(),
        dim,
    };
    let mut meta = serde_json::to_string(&header)?;
    meta.push('\n');
    fs::write(dir.join(format!("{name}.meta")), meta)?;
    let mut data = String::new();
    for entry in entries {
        data.push_str(&serde_json::to_string(entry)?);
        data.push('\n');
    }
    fs::write(dir.join(format!("{name}.data")), data)?;
    Ok(())
}

pub fn load_loss_dataset(dir: &Path, name: &str) -> Result<(Vec<InstanceSamples>, SamplerConfig)> {
    let meta_path = dir.join(format!("{name}.meta"));
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", meta_path.display())))?;
    let header: LossDatasetHeader = serde_json::from_str(meta_text.trim())?;
    let data_path = dir.join(format!("{name}.data"));
    let data_text = fs::read_to_string(&data_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", data_path.display())))?;
    let mut entries = Vec::new();
    for line in data_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: InstanceSamples = serde_json::from_str(line)?;
        for sample in &entry.samples {
            if sample.predictions.len() != header.dim {
                return Err(Error::Dimension {
                    expected: header.dim,
                    actual: sample.predictions.len(),
                });
            }
        }
        entries.push(entry);
    }
    Ok((entries, header.config))
}
