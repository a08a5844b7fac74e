//! Gradient training of a predictive model against a per-instance loss.
//!
//! The batch unit is an *instance*: the model maps each of an instance's D
//! feature rows to one scalar prediction, the loss scores the assembled
//! D-vector against the labels, and the loss gradient flows back through
//! every row's forward pass into the shared parameters. Plain squared error
//! and learned task-specific losses both fit this shape.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::derive_seed;

use super::mlp::Mlp;
use super::optim::{LrSchedule, Optimizer, OptimizerKind};

/// A loss evaluated on one instance's assembled prediction vector.
/// `index` selects which instance's loss applies — learned losses differ per
/// instance, uniform losses ignore it.
pub trait InstanceLoss: Sync {
    fn loss(&self, index: usize, predictions: &[f64], labels: &[f64]) -> f64;
    /// d(loss)/d(predictions), same length as `predictions`.
    fn grad_predictions(&self, index: usize, predictions: &[f64], labels: &[f64]) -> Vec<f64>;
}

/// Mean squared error over the instance's coordinates.
#[derive(Debug, Clone, Copy)]
pub struct MseLoss;

impl InstanceLoss for MseLoss {
    fn loss(&self, _index: usize, predictions: &[f64], labels: &[f64]) -> f64 {
        let d = predictions.len().max(1) as f64;
        predictions
            .iter()
            .zip(labels)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / d
    }

    fn grad_predictions(&self, _index: usize, predictions: &[f64], labels: &[f64]) -> Vec<f64> {
        let d = predictions.len().max(1) as f64;
        predictions
            .iter()
            .zip(labels)
            .map(|(p, y)| 2.0 * (p - y) / d)
            .collect()
    }
}

/// One training instance: D feature rows, D labels, and the index of the
/// loss that scores it.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub loss_index: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerKind,
    /// Instances per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    /// Hard cap on optimizer steps across all epochs; `None` = unlimited.
    pub max_updates: Option<usize>,
    /// Non-improving validation epochs tolerated before stopping.
    pub patience: usize,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            schedule: LrSchedule::Constant,
            optimizer: OptimizerKind::Adam,
            batch_size: 32,
            epochs: 100,
            max_updates: None,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        // surface bad cyclic settings before the training loop starts
        self.schedule.lr_at(0, self.learning_rate).map(|_| ())
    }
}

/// Per-epoch record of the training run.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Optimizer steps actually taken.
    pub updates: usize,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

/// Mean instance loss of `model` over `examples`.
pub fn mean_loss(model: &Mlp, examples: &[TrainExample], loss: &dyn InstanceLoss) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Input("cannot average a loss over zero instances".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let predictions = predict_instance(model, &ex.features)?;
        total += loss.loss(ex.loss_index, &predictions, &ex.labels);
    }
    Ok(total / examples.len() as f64)
}

/// Run every feature row through the model, collecting scalar outputs.
pub fn predict_instance(model: &Mlp, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features
        .iter()
        .map(|row| model.forward(row).map(|out| out[0]))
        .collect()
}

/// Train `model` in place; on return it holds the parameters of the best
/// validation epoch. Deterministic given the config seed and model init.
pub fn train(
    model: &mut Mlp,
    train_set: &[TrainExample],
    val_set: &[TrainExample],
    loss: &dyn InstanceLoss,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if model.output_width() != 1 {
        return Err(Error::Config(format!(
            "instance training expects a scalar-output model, got output width {}",
            model.output_width()
        )));
    }
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }

    let mut optimizer = Optimizer::new(config.optimizer, model.param_count());
    let mut history = TrainHistory::default();
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params().to_vec();
    let mut strikes = 0usize;
    let mut grad = vec![0.0; model.param_count()];
    let mut hit_update_cap = false;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);

        for chunk in order.chunks(config.batch_size) {
            grad.fill(0.0);
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let ex = &train_set[idx];
                let mut caches = Vec::with_capacity(ex.features.len());
                let mut predictions = Vec::with_capacity(ex.features.len());
                for row in &ex.features {
                    let cache = model.forward_cached(row)?;
                    predictions.push(cache.output()[0]);
                    caches.push(cache);
                }
                batch_loss += loss.loss(ex.loss_index, &predictions, &ex.labels);
                let dl = loss.grad_predictions(ex.loss_index, &predictions, &ex.labels);
                if dl.len() != predictions.len() {
                    return Err(Error::Dimension {
                        expected: predictions.len(),
                        actual: dl.len(),
                    });
                }
                for (cache, g) in caches.iter().zip(&dl) {
                    model.backward(cache, &[*g], &mut grad)?;
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    step: history.updates,
                    message: format!("batch loss became {batch_loss}"),
                });
            }
            for g in grad.iter_mut() {
                *g *= scale;
            }
            let lr = config.schedule.lr_at(history.updates, config.learning_rate)?;
            optimizer.step(model.params_mut(), &grad, lr);
            history.updates += 1;
            if config.max_updates.is_some_and(|cap| history.updates >= cap) {
                hit_update_cap = true;
                break;
            }
        }

        let train_loss = mean_loss(model, train_set, loss)?;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            mean_loss(model, val_set, loss)?
        };
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best_params.copy_from_slice(model.params());
            history.best_epoch = epoch;
            strikes = 0;
        } else {
            strikes += 1;
            if strikes > config.patience {
                break;
            }
        }
        if hit_update_cap {
            break;
        }
    }

    model.params_mut().copy_from_slice(&best_params);
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// y = 3x + 1 sampled on a grid, one scalar coordinate per instance.
    fn line_examples(n: usize) -> Vec<TrainExample> {
        (0..n)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                TrainExample {
                    features: vec![vec![x]],
                    labels: vec![3.0 * x + 1.0],
                    loss_index: 0,
                }
            })
            .collect()
    }

    struct ConstantLoss;
    impl InstanceLoss for ConstantLoss {
        fn loss(&self, _: usize, _: &[f64], _: &[f64]) -> f64 {
            5.0
        }
        fn grad_predictions(&self, _: usize, p: &[f64], _: &[f64]) -> Vec<f64> {
            vec![0.0; p.len()]
        }
    }

    struct NanLoss;
    impl InstanceLoss for NanLoss {
        fn loss(&self, _: usize, _: &[f64], _: &[f64]) -> f64 {
            f64::NAN
        }
        fn grad_predictions(&self, _: usize, p: &[f64], _: &[f64]) -> Vec<f64> {
            vec![0.0; p.len()]
        }
    }

    #[test]
    fn constant_loss_leaves_parameters_alone() {
        let mut model = Mlp::new(&[1, 4, 1], 3).unwrap();
        let before = model.params().to_vec();
        let config = TrainConfig {
            epochs: 3,
            learning_rate: 0.5,
            optimizer: OptimizerKind::Sgd,
            ..TrainConfig::default()
        };
        train(&mut model, &line_examples(10), &[], &ConstantLoss, &config).unwrap();
        assert_eq!(model.params(), before.as_slice());
    }

    #[test]
    fn scalar_linear_squared_loss_gradient_is_analytic() {
        let mut model = Mlp::zeros(&[1, 1]).unwrap();
        model.params_mut().copy_from_slice(&[2.0, -1.0]); // m=2, c=-1
        let (x, y) = (0.7, 3.0);
        let cache = model.forward_cached(&[x]).unwrap();
        let y_hat = cache.output()[0];
        let mut grad = vec![0.0; 2];
        // d/dŷ of (ŷ−y)² feeding the backward pass
        model.backward(&cache, &[2.0 * (y_hat - y)], &mut grad).unwrap();
        let expected_dm = 2.0 * (2.0 * x - 1.0 - y) * x;
        let expected_dc = 2.0 * (2.0 * x - 1.0 - y);
        assert!((grad[0] - expected_dm).abs() < 1e-12);
        assert!((grad[1] - expected_dc).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for draw in 0..50 {
            let widths = [[2usize, 4, 1].as_slice(), &[3, 5, 1], &[1, 6, 1]][draw % 3];
            let model = Mlp::new(widths, draw as u64).unwrap();
            let d = 4; // coordinates per instance
            let example = TrainExample {
                features: (0..d)
                    .map(|_| (0..widths[0]).map(|_| rng.random_range(-1.5..1.5)).collect())
                    .collect(),
                labels: (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
                loss_index: 0,
            };

            // analytic gradient of the instance loss
            let mut analytic = vec![0.0; model.param_count()];
            let mut caches = Vec::new();
            let mut predictions = Vec::new();
            for row in &example.features {
                let cache = model.forward_cached(row).unwrap();
                predictions.push(cache.output()[0]);
                caches.push(cache);
            }
            let dl = MseLoss.grad_predictions(0, &predictions, &example.labels);
            for (cache, g) in caches.iter().zip(&dl) {
                model.backward(cache, &[*g], &mut analytic).unwrap();
            }

            // central finite differences, step 1e-5
            let h = 1e-5;
            for p_idx in 0..model.param_count() {
                let mut bumped = model.clone();
                bumped.params_mut()[p_idx] += h;
                let up = mean_loss(&bumped, std::slice::from_ref(&example), &MseLoss).unwrap();
                bumped.params_mut()[p_idx] -= 2.0 * h;
                let down = mean_loss(&bumped, std::slice::from_ref(&example), &MseLoss).unwrap();
                let fd = (up - down) / (2.0 * h);
                let denom = analytic[p_idx].abs().max(fd.abs()).max(1e-4);
                assert!(
                    (analytic[p_idx] - fd).abs() / denom < 1e-4,
                    "draw {draw} param {p_idx}: analytic {} vs fd {fd}",
                    analytic[p_idx]
                );
            }
        }
    }

    #[test]
    fn recovers_a_line_from_clean_data() {
        let mut model = Mlp::new(&[1, 1], 11).unwrap();
        let examples = line_examples(50);
        let config = TrainConfig {
            learning_rate: 0.05,
            optimizer: OptimizerKind::Adam,
            batch_size: 50,
            epochs: 600,
            patience: 600,
            ..TrainConfig::default()
        };
        train(&mut model, &examples, &examples, &MseLoss, &config).unwrap();
        assert!((model.params()[0] - 3.0).abs() < 1e-2, "slope {}", model.params()[0]);
        assert!((model.params()[1] - 1.0).abs() < 1e-2, "intercept {}", model.params()[1]);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut model = Mlp::new(&[1, 3, 1], 5).unwrap();
        let before = model.params().to_vec();
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 4,
            ..TrainConfig::default()
        };
        train(&mut model, &line_examples(8), &[], &MseLoss, &config).unwrap();
        assert_eq!(model.params(), before.as_slice());
    }

    #[test]
    fn patience_zero_stops_after_first_flat_epoch() {
        // lr 0 keeps validation loss constant: epoch 0 sets the best, epoch 1
        // fails to improve, and patience 0 tolerates no such epoch.
        let mut model = Mlp::new(&[1, 3, 1], 5).unwrap();
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 50,
            patience: 0,
            ..TrainConfig::default()
        };
        let examples = line_examples(8);
        let history = train(&mut model, &examples, &examples, &MseLoss, &config).unwrap();
        assert_eq!(history.val_loss.len(), 2);
        assert_eq!(history.best_epoch, 0);
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        // A deliberately divergent learning rate makes validation loss climb
        // after an initial dip; the returned model must carry the best
        // epoch's parameters, not the last ones.
        let mut model = Mlp::new(&[1, 1], 3).unwrap();
        let examples = line_examples(6);
        let config = TrainConfig {
            learning_rate: 1.2,
            optimizer: OptimizerKind::Sgd,
            batch_size: 6,
            epochs: 8,
            patience: 2,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &examples, &examples, &MseLoss, &config).unwrap();
        let restored_val = mean_loss(&model, &examples, &MseLoss).unwrap();
        let best = history.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(
            (restored_val - best).abs() < 1e-9,
            "restored {restored_val} vs best {best}"
        );
        assert_eq!(history.val_loss[history.best_epoch], best);
    }

    #[test]
    fn nan_loss_reports_the_failing_step() {
        let mut model = Mlp::new(&[1, 1], 1).unwrap();
        let err = train(
            &mut model,
            &line_examples(4),
            &[],
            &NanLoss,
            &TrainConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Training { step: 0, .. }));
    }

    #[test]
    fn same_seed_same_parameters_bit_for_bit() {
        let run = || {
            let mut model = Mlp::new(&[1, 8, 1], 42).unwrap();
            let config = TrainConfig {
                learning_rate: 0.01,
                batch_size: 4,
                epochs: 12,
                seed: 7,
                ..TrainConfig::default()
            };
            let examples = line_examples(20);
            train(&mut model, &examples, &examples, &MseLoss, &config).unwrap();
            model.params().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn train_loss_non_increasing_on_easy_regression() {
        let mut model = Mlp::new(&[1, 1], 2).unwrap();
        let examples = line_examples(30);
        let config = TrainConfig {
            learning_rate: 0.01,
            optimizer: OptimizerKind::Sgd,
            batch_size: 30,
            epochs: 10,
            patience: 100,
            ..TrainConfig::default()
        };
        let history = train(&mut model, &examples, &examples, &MseLoss, &config).unwrap();
        assert_eq!(history.train_loss.len(), 10);
        for pair in history.train_loss.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss rose: {pair:?}");
        }
    }

    #[test]
    fn update_cap_limits_optimizer_steps() {
        let mut model = Mlp::new(&[1, 4, 1], 9).unwrap();
        let config = TrainConfig {
            batch_size: 2,
            epochs: 100,
            max_updates: Some(7),
            ..TrainConfig::default()
        };
        let history = train(&mut model, &line_examples(10), &[], &MseLoss, &config).unwrap();
        assert_eq!(history.updates, 7);
    }

    #[test]
    fn max_lr_below_base_is_a_config_error() {
        let mut model = Mlp::new(&[1, 1], 0).unwrap();
        let config = TrainConfig {
            learning_rate: 0.5,
            schedule: LrSchedule::Cyclic {
                max_lr: 0.1,
                cycle_len: 10,
            },
            ..TrainConfig::default()
        };
        assert!(train(&mut model, &line_examples(4), &[], &MseLoss, &config).is_err());
    }
}
