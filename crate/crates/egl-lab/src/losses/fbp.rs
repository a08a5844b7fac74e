//! Feature-based loss parameterization: instead of fitting each instance's
//! loss parameters independently, a single network P_ψ maps per-prediction
//! features to those parameters, sharing statistical strength across
//! instances. Predictions with the same features get the same weights, which
//! is what restores consistency of the learned loss under label noise.
//!
//! Weight families feed each prediction's feature vector through P_ψ (one or
//! two outputs); quadratic families feed every ordered feature pair (x_i, x_j)
//! through P_ψ to produce a factor entry, D² evaluations per instance.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, Optimizer, OptimizerKind};
use crate::sampling::CandidateSample;
use crate::seed::derive_seed;

use super::family::{LossFamily, LossParams, DEFAULT_W_MIN};

pub const FBP_FILE_VERSION: &str = "fbp/1";

/// Network outputs per evaluation for each supported family.
fn head_width(family: LossFamily) -> Result<usize> {
    Ok(match family {
        LossFamily::WeightedMse | LossFamily::Quadratic => 1,
        LossFamily::DirectedWeightedMse => 2,
        LossFamily::DirectedQuadratic => 4,
        LossFamily::Mse | LossFamily::LzScalar => {
            return Err(Error::Config(format!(
                "family '{}' has no feature-based parameterization",
                family.as_str()
            )))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpConfig {
    pub hidden_widths: Vec<usize>,
    pub w_min: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Instances per optimizer step.
    pub batch_size: usize,
    /// Strikes of non-improving validation fit error before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![500, 500, 500],
            w_min: DEFAULT_W_MIN,
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 16,
            patience: 10,
            seed: 0,
        }
    }
}

impl FbpConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !self.w_min.is_finite() || self.w_min <= 0.0 {
            return Err(Error::Config(format!(
                "weight floor must be > 0, got {}",
                self.w_min
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One instance's contribution to the pooled fit: its labels, one feature
/// row per prediction, and its priced candidate samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbpInstance {
    pub labels: Vec<f64>,
    pub features: Vec<Vec<f64>>,
    pub samples: Vec<CandidateSample>,
}

impl FbpInstance {
    fn validate(&self, feature_width: usize) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Input("instance has no predictions".into()));
        }
        if self.features.len() != self.labels.len() {
            return Err(Error::Dimension {
                expected: self.labels.len(),
                actual: self.features.len(),
            });
        }
        for row in &self.features {
            if row.len() != feature_width {
                return Err(Error::Dimension {
                    expected: feature_width,
                    actual: row.len(),
                });
            }
        }
        for sample in &self.samples {
            if sample.predictions.len() != self.labels.len() {
                return Err(Error::Dimension {
                    expected: self.labels.len(),
                    actual: sample.predictions.len(),
                });
            }
            match sample.regret {
                Some(r) if r.is_finite() => {}
                Some(r) => return Err(Error::Input(format!("non-finite regret {r}"))),
                None => {
                    return Err(Error::Input(
                        "sample without a priced regret in loss fitting".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// The trained parameter network plus the metadata needed to apply it.
#[derive(Debug, Clone)]
pub struct FbpNetwork {
    pub family: LossFamily,
    pub w_min: f64,
    pub feature_width: usize,
    pub net: Mlp,
}

#[derive(Debug, Clone)]
pub struct FbpFit {
    pub network: FbpNetwork,
    pub train_fit_mse: f64,
    pub val_fit_mse: Option<f64>,
    pub best_epoch: usize,
}

/// Network input rows for one instance, in the canonical order that
/// `raw_from_outputs` expects: the D feature rows for weight families, the
/// D² ordered pair concatenations (row-major) for quadratic ones.
fn input_rows(features: &[Vec<f64>], family: LossFamily) -> Vec<Vec<f64>> {
    if family.is_pairwise() {
        let mut rows = Vec::with_capacity(features.len() * features.len());
        for left in features {
            for right in features {
                let mut row = Vec::with_capacity(left.len() + right.len());
                row.extend_from_slice(left);
                row.extend_from_slice(right);
                rows.push(row);
            }
        }
        rows
    } else {
        features.to_vec()
    }
}

/// Assembles the raw parameter vector from per-row network outputs,
/// matching the layout documented on `LossParams`.
fn raw_from_outputs(family: LossFamily, dim: usize, outputs: &[Vec<f64>]) -> Vec<f64> {
    match family {
        LossFamily::WeightedMse => outputs.iter().map(|o| o[0]).collect(),
        LossFamily::DirectedWeightedMse => {
            let mut raw = vec![0.0; 2 * dim];
            for (n, out) in outputs.iter().enumerate() {
                raw[n] = out[0];
                raw[dim + n] = out[1];
            }
            raw
        }
        LossFamily::Quadratic => outputs.iter().map(|o| o[0]).collect(),
        LossFamily::DirectedQuadratic => {
            let block = dim * dim;
            let mut raw = vec![0.0; 4 * block];
            for (pair, out) in outputs.iter().enumerate() {
                for (b, value) in out.iter().enumerate() {
                    raw[b * block + pair] = *value;
                }
            }
            raw
        }
        LossFamily::Mse | LossFamily::LzScalar => unreachable!("rejected by head_width"),
    }
}

/// Inverse of `raw_from_outputs` for gradients: distributes ∂obj/∂raw onto
/// the per-row network-output slots.
fn head_grads_from_raw_grad(
    family: LossFamily,
    dim: usize,
    raw_grad: &[f64],
    head: usize,
    rows: usize,
) -> Vec<Vec<f64>> {
    let mut grads = vec![vec![0.0; head]; rows];
    match family {
        LossFamily::WeightedMse | LossFamily::Quadratic => {
            for (row, g) in grads.iter_mut().zip(raw_grad) {
                row[0] = *g;
            }
        }
        LossFamily::DirectedWeightedMse => {
            for (n, row) in grads.iter_mut().enumerate() {
                row[0] = raw_grad[n];
                row[1] = raw_grad[dim + n];
            }
        }
        LossFamily::DirectedQuadratic => {
            let block = dim * dim;
            for (pair, row) in grads.iter_mut().enumerate() {
                for (b, slot) in row.iter_mut().enumerate() {
                    *slot = raw_grad[b * block + pair];
                }
            }
        }
        LossFamily::Mse | LossFamily::LzScalar => unreachable!("rejected by head_width"),
    }
    grads
}

fn induced_params_with(
    net: &Mlp,
    family: LossFamily,
    w_min: f64,
    features: &[Vec<f64>],
) -> Result<LossParams> {
    let dim = features.len();
    let outputs = input_rows(features, family)
        .iter()
        .map(|row| net.forward(row))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let raw = raw_from_outputs(family, dim, &outputs);
    LossParams::new(family, dim, w_min, raw)
        .map_err(|e| Error::Fit(format!("parameter network produced invalid parameters: {e}")))
}

/// Runs the parameter network over an instance's features and assembles the
/// induced loss parameters.
pub fn induced_params(network: &FbpNetwork, features: &[Vec<f64>]) -> Result<LossParams> {
    for row in features {
        if row.len() != network.feature_width {
            return Err(Error::Dimension {
                expected: network.feature_width,
                actual: row.len(),
            });
        }
    }
    induced_params_with(&network.net, network.family, network.w_min, features)
}

/// Pooled squared fit error of the induced losses against the regrets, over
/// all samples of all instances.
pub fn fbp_fit_mse(network: &FbpNetwork, instances: &[FbpInstance]) -> Result<f64> {
    pooled_fit_mse(&network.net, network.family, network.w_min, instances)
}

fn pooled_fit_mse(
    net: &Mlp,
    family: LossFamily,
    w_min: f64,
    instances: &[FbpInstance],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for instance in instances {
        let params = induced_params_with(net, family, w_min, &instance.features)?;
        for sample in &instance.samples {
            let regret = sample.regret.expect("validated priced");
            let err = params.eval(&sample.predictions, &instance.labels)? - regret;
            total += err * err;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Input("no samples to measure fit error on".into()));
    }
    Ok(total / count as f64)
}

/// Accumulates the gradient of the batch's pooled fit error (mean squared
/// loss-vs-regret error over the batch's samples) into `grad`.
fn batch_gradient(
    net: &Mlp,
    batch: &[&FbpInstance],
    family: LossFamily,
    w_min: f64,
    grad: &mut [f64],
) -> Result<()> {
    let batch_samples: usize = batch.iter().map(|i| i.samples.len()).sum();
    if batch_samples == 0 {
        return Ok(());
    }
    let head = head_width(family)?;
    for instance in batch {
        let dim = instance.labels.len();
        let rows = input_rows(&instance.features, family);
        let caches = rows
            .iter()
            .map(|row| net.forward_cached(row))
            .collect::<Result<Vec<_>>>()?;
        let outputs: Vec<Vec<f64>> = caches.iter().map(|c| c.output().to_vec()).collect();
        let raw = raw_from_outputs(family, dim, &outputs);
        let params = LossParams::new(family, dim, w_min, raw).map_err(|e| {
            Error::Fit(format!("parameter network produced invalid parameters: {e}"))
        })?;
        let mut raw_grad = vec![0.0; params.raw.len()];
        for sample in &instance.samples {
            let regret = sample.regret.expect("validated priced");
            let err = params.eval(&sample.predictions, &instance.labels)? - regret;
            if !err.is_finite() {
                return Err(Error::Fit(format!("fit error became {err}")));
            }
            params.grad_raw_into(
                &sample.predictions,
                &instance.labels,
                2.0 * err / batch_samples as f64,
                &mut raw_grad,
            )?;
        }
        let head_grads = head_grads_from_raw_grad(family, dim, &raw_grad, head, caches.len());
        for (cache, hg) in caches.iter().zip(&head_grads) {
            net.backward(cache, hg, grad)?;
        }
    }
    Ok(())
}

/// Trains the parameter network on the pooled fit objective over the train
/// instances, early-stopping on the validation instances' pooled fit error
/// (strict improvement; falls back to the train error when `val` is empty)
/// and restoring the best parameters seen.
pub fn fit_fbp(
    train: &[FbpInstance],
    val: &[FbpInstance],
    family: LossFamily,
    config: &FbpConfig,
) -> Result<FbpFit> {
    config.validate()?;
    let head = head_width(family)?;
    if train.is_empty() {
        return Err(Error::Input("no instances to fit a parameter network on".into()));
    }
    let feature_width = train[0].features.first().map(|r| r.len()).unwrap_or(0);
    if feature_width == 0 {
        return Err(Error::Input("per-prediction features are empty".into()));
    }
    for instance in train.iter().chain(val) {
        instance.validate(feature_width)?;
    }

    let input_width = if family.is_pairwise() {
        2 * feature_width
    } else {
        feature_width
    };
    let mut widths = Vec::with_capacity(config.hidden_widths.len() + 2);
    widths.push(input_width);
    widths.extend_from_slice(&config.hidden_widths);
    widths.push(head);
    let mut net = Mlp::new(&widths, derive_seed(config.seed, 0xFB9))?;

    let mut optimizer = Optimizer::new(OptimizerKind::Adam, net.param_count());
    let mut grad = vec![0.0; net.param_count()];
    let mut best_monitor = f64::INFINITY;
    let mut best_params = net.params().to_vec();
    let mut best_epoch = 0usize;
    let mut strikes = 0usize;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&FbpInstance> = chunk.iter().map(|&i| &train[i]).collect();
            grad.fill(0.0);
            batch_gradient(&net, &batch, family, config.w_min, &mut grad)?;
            optimizer.step(net.params_mut(), &grad, config.learning_rate);
        }
        let train_mse = pooled_fit_mse(&net, family, config.w_min, train)?;
        let monitor = if val.is_empty() {
            train_mse
        } else {
            pooled_fit_mse(&net, family, config.w_min, val)?
        };
        if !monitor.is_finite() {
            return Err(Error::Fit(format!(
                "fit error became {monitor} at epoch {epoch}"
            )));
        }
        if monitor < best_monitor {
            best_monitor = monitor;
            best_params.copy_from_slice(net.params());
            best_epoch = epoch;
            strikes = 0;
        } else {
            strikes += 1;
            if strikes > config.patience {
                break;
            }
        }
    }
    net.params_mut().copy_from_slice(&best_params);

    let train_fit_mse = pooled_fit_mse(&net, family, config.w_min, train)?;
    let val_fit_mse = if val.is_empty() {
        None
    } else {
        Some(pooled_fit_mse(&net, family, config.w_min, val)?)
    };
    Ok(FbpFit {
        network: FbpNetwork {
            family,
            w_min: config.w_min,
            feature_width,
            net,
        },
        train_fit_mse,
        val_fit_mse,
        best_epoch,
    })
}

#[derive(Serialize, Deserialize)]
struct FbpHeader {
    version: String,
    family: LossFamily,
    w_min: f64,
    feature_width: usize,
}

/// Writes `<name>.meta` (JSON header) and `<name>.ckpt` (network weights).
pub fn save_fbp(network: &FbpNetwork, dir: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let header = FbpHeader {
        version: FBP_FILE_VERSION.to_string(),
        family: network.family,
        w_min: network.w_min,
        feature_width: network.feature_width,
    };
    let mut text = serde_json::to_string(&header)?;
    text.push('\n');
    fs::write(dir.join(format!("{name}.meta")), text)?;
    network.net.save_checkpoint(&dir.join(format!("{name}.ckpt")))?;
    Ok(())
}

pub fn load_fbp(dir: &Path, name: &str) -> Result<FbpNetwork> {
    let meta_path = dir.join(format!("{name}.meta"));
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", meta_path.display())))?;
    let header: FbpHeader = serde_json::from_str(text.trim())?;
    if header.version != FBP_FILE_VERSION {
        return Err(Error::Input(format!(
            "unsupported parameter-network file version '{}'",
            header.version
        )));
    }
    let net = Mlp::load_checkpoint(&dir.join(format!("{name}.ckpt")))?;
    let expected_input = if header.family.is_pairwise() {
        2 * header.feature_width
    } else {
        header.feature_width
    };
    if net.input_width() != expected_input {
        return Err(Error::Dimension {
            expected: expected_input,
            actual: net.input_width(),
        });
    }
    if net.output_width() != head_width(header.family)? {
        return Err(Error::Dimension {
            expected: head_width(header.family)?,
            actual: net.output_width(),
        });
    }
    Ok(FbpNetwork {
        family: header.family,
        w_min: header.w_min,
        feature_width: header.feature_width,
        net,
    })
}
