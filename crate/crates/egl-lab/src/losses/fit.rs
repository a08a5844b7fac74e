//! Per-instance loss fitting: regress a loss family's value onto the priced
//! regrets of one instance's candidate predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Optimizer, OptimizerKind};
use crate::sampling::{CandidateSample, InstanceSamples};
use crate::seed::derive_seed;

use super::family::{LossFamily, LossParams, DEFAULT_W_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub w_min: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            w_min: DEFAULT_W_MIN,
            learning_rate: 0.05,
            steps: 2000,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.w_min.is_finite() || self.w_min <= 0.0 {
            return Err(Error::Config(format!(
                "weight floor must be > 0, got {}",
                self.w_min
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "fit learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("fit needs at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLoss {
    pub params: LossParams,
    /// Mean squared error between loss values and regrets at the returned
    /// parameters.
    pub fit_mse: f64,
}

fn fit_objective(
    params: &LossParams,
    priced: &[(&[f64], f64)],
    labels: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let mut objective = 0.0;
    let scale = 1.0 / priced.len() as f64;
    match grad {
        Some(grad) => {
            grad.fill(0.0);
            for (predictions, regret) in priced {
                let err = params.eval(predictions, labels)? - regret;
                objective += err * err * scale;
                params.grad_raw_into(predictions, labels, 2.0 * err * scale, grad)?;
            }
        }
        None => {
            for (predictions, regret) in priced {
                let err = params.eval(predictions, labels)? - regret;
                objective += err * err * scale;
            }
        }
    }
    Ok(objective)
}

/// Fits one instance's loss: full-batch Adam on the raw parameters θ
/// minimizing mean (loss(ỹ) − regret)², with an inverse-square-root
/// learning-rate decay so the iterates settle, keeping the best parameters
/// seen. Samples without a priced regret are ignored; at least one priced
/// sample is required.
pub fn fit_lodl(
    samples: &[CandidateSample],
    labels: &[f64],
    family: LossFamily,
    config: &FitConfig,
) -> Result<FittedLoss> {
    config.validate()?;
    let dim = labels.len();
    let priced: Vec<(&[f64], f64)> = samples
        .iter()
        .filter_map(|s| s.regret.map(|r| (s.predictions.as_slice(), r)))
        .collect();
    if priced.is_empty() {
        return Err(Error::Input("no priced samples to fit a loss on".into()));
    }
    for (predictions, regret) in &priced {
        if predictions.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: predictions.len(),
            });
        }
        if !regret.is_finite() {
            return Err(Error::Input(format!("non-finite regret {regret}")));
        }
    }

    let mut params = LossParams::init_for_fit(family, dim, config.w_min, derive_seed(config.seed, 0))?;
    if params.raw.is_empty() {
        let fit_mse = fit_objective(&params, &priced, labels, None)?;
        return Ok(FittedLoss { params, fit_mse });
    }

    let mut optimizer = Optimizer::new(OptimizerKind::Adam, params.raw.len());
    let mut grad = vec![0.0; params.raw.len()];
    let mut best_objective = f64::INFINITY;
    let mut best_raw = params.raw.clone();
    for step in 0..config.steps {
        let objective = fit_objective(&params, &priced, labels, Some(&mut grad))?;
        if !objective.is_finite() {
            return Err(Error::Fit(format!(
                "fit objective became {objective} at step {step}"
            )));
        }
        if objective < best_objective {
            best_objective = objective;
            best_raw.copy_from_slice(&params.raw);
        }
        let lr = config.learning_rate / ((1 + step) as f64).sqrt();
        optimizer.step(&mut params.raw, &grad, lr);
    }
    let final_objective = fit_objective(&params, &priced, labels, None)?;
    if final_objective.is_finite() && final_objective < best_objective {
        best_objective = final_objective;
        best_raw.copy_from_slice(&params.raw);
    }
    params.raw = best_raw;
    Ok(FittedLoss {
        params,
        fit_mse: best_objective,
    })
}

/// Step 3 over a whole loss dataset: one fitted loss per instance, in
/// order. Instances are independent, so they fit in parallel.
pub fn fit_lodl_dataset(
    entries: &[InstanceSamples],
    labels: &[&[f64]],
    family: LossFamily,
    config: &FitConfig,
) -> Result<Vec<FittedLoss>> {
    if entries.len() != labels.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: entries.len(),
        });
    }
    entries
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(index, (entry, labels))| {
            fit_lodl(
                &entry.samples,
                labels,
                family,
                &FitConfig {
                    seed: derive_seed(config.seed, index as u64),
                    ..config.clone()
                },
            )
            .map_err(|e| Error::Fit(format!("instance {}: {e}", entry.instance_id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Provenance;

    fn scalar_samples(deviations: &[f64], regrets: &[f64], label: f64) -> Vec<CandidateSample> {
        deviations
            .iter()
            .zip(regrets)
            .map(|(d, r)| CandidateSample {
                predictions: vec![label + d],
                regret: Some(*r),
                provenance: Provenance::Gaussian { sigma: 1.0 },
            })
            .collect()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn recovers_planted_scalar_weight() {
        let deviations = grid(21);
        let regrets: Vec<f64> = deviations.iter().map(|d| 2.5 * d * d).collect();
        let samples = scalar_samples(&deviations, &regrets, 0.7);
        let fitted = fit_lodl(
            &samples,
            &[0.7],
            LossFamily::WeightedMse,
            &FitConfig::default(),
        )
        .unwrap();
        let w = fitted.params.weight_vector().unwrap()[0];
        assert!((w - 2.5).abs() < 1e-2, "fitted weight {w}");
        assert!(fitted.fit_mse < 1e-4, "fit mse {}", fitted.fit_mse);
    }

    #[test]
    fn gradient_fit_matches_closed_form_on_even_grid() {
        // closed-form least squares for a scalar weight: w* = Σ r·d² / Σ d⁴
        let deviations = grid(15);
        let regrets: Vec<f64> = deviations
            .iter()
            .map(|d| if *d > 0.55 { 0.55 } else { 0.0 })
            .collect();
        let numerator: f64 = deviations
            .iter()
            .zip(&regrets)
            .map(|(d, r)| r * d * d)
            .sum();
        let denominator: f64 = deviations.iter().map(|d| d.powi(4)).sum();
        let oracle = numerator / denominator;
        let samples = scalar_samples(&deviations, &regrets, 0.0);
        let fitted = fit_lodl(
            &samples,
            &[0.0],
            LossFamily::WeightedMse,
            &FitConfig::default(),
        )
        .unwrap();
        let w = fitted.params.weight_vector().unwrap()[0];
        assert!(
            (w - oracle).abs() < 1e-3,
            "fitted {w} vs closed form {oracle}"
        );
    }

    #[test]
    fn zero_regrets_collapse_weights_toward_the_floor() {
        let deviations = grid(11);
        let regrets = vec![0.0; 11];
        let samples = scalar_samples(&deviations, &regrets, 0.0);
        // the decayed learning rate crawls near the floor, so give the fit
        // a longer budget than the default before judging proximity
        let config = FitConfig {
            steps: 20_000,
            ..FitConfig::default()
        };
        for family in [
            LossFamily::LzScalar,
            LossFamily::WeightedMse,
            LossFamily::DirectedWeightedMse,
        ] {
            let fitted = fit_lodl(&samples, &[0.0], family, &config).unwrap();
            let weights: Vec<f64> = match family {
                LossFamily::LzScalar => vec![fitted.params.scalar_weight().unwrap()],
                LossFamily::WeightedMse => fitted.params.weight_vector().unwrap(),
                LossFamily::DirectedWeightedMse => {
                    let (plus, minus) = fitted.params.directed_weight_vectors().unwrap();
                    plus.into_iter().chain(minus).collect()
                }
                _ => unreachable!(),
            };
            for w in weights {
                assert!(w >= DEFAULT_W_MIN, "{family:?}: weight {w} under floor");
                assert!(
                    w <= DEFAULT_W_MIN + 0.05,
                    "{family:?}: weight {w} did not collapse"
                );
            }
        }
    }

    #[test]
    fn recovers_directed_weights() {
        // over-prediction priced at 2, under-prediction at 0.5
        let deviations = grid(41);
        let regrets: Vec<f64> = deviations
            .iter()
            .map(|d| if *d >= 0.0 { 2.0 * d * d } else { 0.5 * d * d })
            .collect();
        let samples = scalar_samples(&deviations, &regrets, 0.0);
        let fitted = fit_lodl(
            &samples,
            &[0.0],
            LossFamily::DirectedWeightedMse,
            &FitConfig::default(),
        )
        .unwrap();
        let (plus, minus) = fitted.params.directed_weight_vectors().unwrap();
        assert!((plus[0] - 2.0).abs() < 5e-2, "plus branch {}", plus[0]);
        assert!((minus[0] - 0.5).abs() < 5e-2, "minus branch {}", minus[0]);
    }

    #[test]
    fn quadratic_fit_captures_cross_terms() {
        // planted regret (d₀ + d₁)² + 0.1‖d‖² has a strong off-diagonal
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let labels = [1.0, -1.0];
        let samples: Vec<CandidateSample> = (0..60)
            .map(|_| {
                let d: [f64; 2] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let regret = (d[0] + d[1]).powi(2) + 0.1 * (d[0] * d[0] + d[1] * d[1]);
                CandidateSample {
                    predictions: vec![labels[0] + d[0], labels[1] + d[1]],
                    regret: Some(regret),
                    provenance: Provenance::Gaussian { sigma: 1.0 },
                }
            })
            .collect();
        let fitted = fit_lodl(&samples, &labels, LossFamily::Quadratic, &FitConfig::default())
            .unwrap();
        assert!(fitted.fit_mse < 1e-3, "fit mse {}", fitted.fit_mse);
        // the induced Hessian should be close to 2·(planted H)
        let h = fitted.params.hessian_for_signs(&[true, true]).unwrap();
        assert!((h[0][1] - 2.0).abs() < 0.15, "cross term {}", h[0][1]);
    }

    #[test]
    fn mse_family_has_nothing_to_fit() {
        let deviations = grid(5);
        let regrets: Vec<f64> = deviations.iter().map(|d| d * d).collect();
        let samples = scalar_samples(&deviations, &regrets, 0.0);
        let fitted = fit_lodl(&samples, &[0.0], LossFamily::Mse, &FitConfig::default()).unwrap();
        assert!(fitted.params.raw.is_empty());
        // D = 1 so the plain mean square matches the planted regrets exactly
        assert!(fitted.fit_mse < 1e-12);
    }

    #[test]
    fn unpriced_samples_are_ignored_and_empty_sets_rejected() {
        let mut samples = scalar_samples(&grid(5), &[0.0; 5], 0.0);
        for s in &mut samples {
            s.regret = None;
        }
        let err = fit_lodl(&samples, &[0.0], LossFamily::WeightedMse, &FitConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn absurd_regrets_error_rather_than_poison() {
        let samples = scalar_samples(&[0.5], &[1e200], 0.0);
        let err = fit_lodl(&samples, &[0.0], LossFamily::WeightedMse, &FitConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Fit(_)), "got {err:?}");
    }

    #[test]
    fn fit_is_deterministic() {
        let deviations = grid(15);
        let regrets: Vec<f64> = deviations.iter().map(|d| 1.3 * d * d).collect();
        let samples = scalar_samples(&deviations, &regrets, 0.0);
        let a = fit_lodl(&samples, &[0.0], LossFamily::Quadratic, &FitConfig::default()).unwrap();
        let b = fit_lodl(&samples, &[0.0], LossFamily::Quadratic, &FitConfig::default()).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn dataset_fit_names_failing_instance() {
        let entries = vec![InstanceSamples {
            instance_id: "bad-7".into(),
            samples: scalar_samples(&[0.5], &[1e200], 0.0),
        }];
        let labels: Vec<&[f64]> = vec![&[0.0]];
        let err = fit_lodl_dataset(&entries, &labels, LossFamily::WeightedMse, &FitConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("bad-7"), "{err}");
    }
}
