//! Optimal predictions under weighted losses, and a self-contained
//! demonstration that fitting loss weights separately per instance can push
//! the optimal prediction into a worse decision.
//!
//! The demonstration is a two-individual resource allocation: individual B
//! has a fixed, known value of 0.55 while individual A's value is 0 or 1
//! with probability 1/2 each; the resource goes to A exactly when the
//! prediction for A exceeds 0.55. Since E[value of A] = 0.5 < 0.55, the
//! decision-quality-optimal choice is B — but per-instance weights fit to
//! regret data can tilt the weighted-MSE-optimal prediction for A above the
//! threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{CandidateSample, Provenance};

use super::family::{LossFamily, DEFAULT_W_MIN};
use super::fit::{fit_lodl, FitConfig};

/// Minimizer of E[w·(ŷ − y)²] over ŷ for a discrete outcome distribution:
/// ŷ* = E[w·y] / E[w]. `outcomes` pairs each label with its probability;
/// `weights` gives the (strictly positive) loss weight attached to each
/// outcome.
pub fn optimal_wmse_prediction(outcomes: &[(f64, f64)], weights: &[f64]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::Input("no outcomes".into()));
    }
    if outcomes.len() != weights.len() {
        return Err(Error::Dimension {
            expected: outcomes.len(),
            actual: weights.len(),
        });
    }
    let mut prob_total = 0.0;
    for (label, prob) in outcomes {
        if !label.is_finite() || !prob.is_finite() || *prob < 0.0 {
            return Err(Error::Input(format!(
                "bad outcome (label {label}, probability {prob})"
            )));
        }
        prob_total += prob;
    }
    if (prob_total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "outcome probabilities sum to {prob_total}, not 1"
        )));
    }
    for w in weights {
        if !w.is_finite() || *w <= 0.0 {
            return Err(Error::Input(format!("loss weight must be > 0, got {w}")));
        }
    }
    let expected_weight: f64 = outcomes.iter().zip(weights).map(|((_, p), w)| p * w).sum();
    if expected_weight <= 0.0 || !expected_weight.is_finite() {
        return Err(Error::Input(format!(
            "zero expected weight ({expected_weight})"
        )));
    }
    let weighted_label: f64 = outcomes
        .iter()
        .zip(weights)
        .map(|((y, p), w)| p * w * y)
        .sum();
    Ok(weighted_label / expected_weight)
}

/// Individual B's fixed value; the resource goes to A only for predictions
/// strictly above it.
pub const INDIVIDUAL_B_VALUE: f64 = 0.55;

/// The two equally likely values for individual A.
pub const LOW_VALUE_FOR_A: f64 = 0.0;
pub const HIGH_VALUE_FOR_A: f64 = 1.0;

/// How the candidate predictions for A are generated: a fixed grid of 15
/// evenly spaced noise offsets on [−1, 1], or uniform random draws from the
/// same interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseGrid {
    Evenly15,
    Uniform { k: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFit {
    /// Unconstrained least squares: w* = Σ regret·d² / Σ d⁴.
    ClosedForm,
    /// The same scalar-weight fit the rest of the pipeline uses.
    GradientDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleReport {
    /// Candidate predictions for A in the scenario where A's value is 0,
    /// with their decision-quality regrets.
    pub low_predictions: Vec<f64>,
    pub low_regrets: Vec<f64>,
    /// Same for the scenario where A's value is 1.
    pub high_predictions: Vec<f64>,
    pub high_regrets: Vec<f64>,
    /// Weight fit per scenario.
    pub w_low: f64,
    pub w_high: f64,
    /// The weighted-MSE-optimal prediction for A under the fitted weights.
    pub prediction_for_a: f64,
    pub resource_to_a: bool,
    /// Whether the induced decision matches the optimal one (B).
    pub is_consistent: bool,
}

/// Decision quality of allocating by the predicted value for A when A's
/// true value is `value_a`.
fn allocation_quality(predicted_a: f64, value_a: f64) -> f64 {
    if predicted_a > INDIVIDUAL_B_VALUE {
        value_a
    } else {
        INDIVIDUAL_B_VALUE
    }
}

fn allocation_regret(predicted_a: f64, value_a: f64) -> f64 {
    value_a.max(INDIVIDUAL_B_VALUE) - allocation_quality(predicted_a, value_a)
}

fn noise_offsets(grid: &NoiseGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    match grid {
        NoiseGrid::Evenly15 => {
            let offsets: Vec<f64> = (0..15).map(|k| -1.0 + 2.0 * k as f64 / 14.0).collect();
            Ok((offsets.clone(), offsets))
        }
        NoiseGrid::Uniform { k, seed } => {
            if *k == 0 {
                return Err(Error::Input("need at least one noise draw".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Ok((draw(*k), draw(*k)))
        }
    }
}

/// Unconstrained least-squares scalar weight for loss w·d² against regrets.
fn closed_form_scalar_weight(deviations: &[f64], regrets: &[f64]) -> Result<f64> {
    let numerator: f64 = deviations
        .iter()
        .zip(regrets)
        .map(|(d, r)| r * d * d)
        .sum();
    let denominator: f64 = deviations.iter().map(|d| d.powi(4)).sum();
    if denominator <= 0.0 {
        return Err(Error::Fit(
            "all candidate predictions coincide with the label".into(),
        ));
    }
    Ok(numerator / denominator)
}

fn gradient_descent_scalar_weight(
    value_a: f64,
    predictions: &[f64],
    regrets: &[f64],
) -> Result<f64> {
    let labels = [value_a, INDIVIDUAL_B_VALUE];
    let samples: Vec<CandidateSample> = predictions
        .iter()
        .zip(regrets)
        .map(|(p, r)| CandidateSample {
            predictions: vec![*p, INDIVIDUAL_B_VALUE],
            regret: Some(*r),
            provenance: Provenance::Gaussian { sigma: 1.0 },
        })
        .collect();
    let fitted = fit_lodl(&samples, &labels, LossFamily::LzScalar, &FitConfig::default())?;
    Ok(fitted.params.scalar_weight().expect("scalar family"))
}

/// Lemma-style plug-in: the weighted-MSE-optimal prediction for A given one
/// weight per scenario, and whether it sends the resource to A.
pub fn prediction_for_a(w_low: f64, w_high: f64) -> Result<(f64, bool)> {
    let prediction = optimal_wmse_prediction(
        &[(LOW_VALUE_FOR_A, 0.5), (HIGH_VALUE_FOR_A, 0.5)],
        &[w_low, w_high],
    )?;
    Ok((prediction, prediction > INDIVIDUAL_B_VALUE))
}

/// Runs the full demonstration: builds the regret tables for both
/// scenarios, fits a scalar weight per scenario by the chosen route, and
/// reports the induced prediction and decision.
pub fn run_counterexample(grid: &NoiseGrid, fit: WeightFit) -> Result<CounterexampleReport> {
    let (low_offsets, high_offsets) = noise_offsets(grid)?;
    let low_predictions: Vec<f64> = low_offsets.iter().map(|e| LOW_VALUE_FOR_A + e).collect();
    let high_predictions: Vec<f64> = high_offsets.iter().map(|e| HIGH_VALUE_FOR_A + e).collect();
    let low_regrets: Vec<f64> = low_predictions
        .iter()
        .map(|p| allocation_regret(*p, LOW_VALUE_FOR_A))
        .collect();
    let high_regrets: Vec<f64> = high_predictions
        .iter()
        .map(|p| allocation_regret(*p, HIGH_VALUE_FOR_A))
        .collect();

    let (w_low, w_high) = match fit {
        WeightFit::ClosedForm => (
            closed_form_scalar_weight(&low_offsets, &low_regrets)?,
            closed_form_scalar_weight(&high_offsets, &high_regrets)?,
        ),
        WeightFit::GradientDescent => (
            gradient_descent_scalar_weight(LOW_VALUE_FOR_A, &low_predictions, &low_regrets)?,
            gradient_descent_scalar_weight(HIGH_VALUE_FOR_A, &high_predictions, &high_regrets)?,
        ),
    };
    // the closed form can in principle go nonpositive on degenerate draws;
    // the prediction formula needs strictly positive weights
    let floor = f64::MIN_POSITIVE.max(DEFAULT_W_MIN * 1e-6);
    let (prediction, to_a) = prediction_for_a(w_low.max(floor), w_high.max(floor))?;
    Ok(CounterexampleReport {
        low_predictions,
        low_regrets,
        high_predictions,
        high_regrets,
        w_low,
        w_high,
        prediction_for_a: prediction,
        resource_to_a: to_a,
        is_consistent: !to_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ternary_minimize(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let a = lo + (hi - lo) / 3.0;
            let b = hi - (hi - lo) / 3.0;
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        (lo + hi) / 2.0
    }

    #[test]
    fn equal_weights_give_the_expectation() {
        let outcomes = [(2.0, 0.25), (4.0, 0.75)];
        let prediction = optimal_wmse_prediction(&outcomes, &[3.0, 3.0]).unwrap();
        assert!((prediction - 3.5).abs() < 1e-12);
    }

    #[test]
    fn single_outcome_returns_its_label() {
        let prediction = optimal_wmse_prediction(&[(1.7, 1.0)], &[0.2]).unwrap();
        assert!((prediction - 1.7).abs() < 1e-12);
    }

    #[test]
    fn recorded_weight_pair_flips_the_allocation() {
        // the reference weight pair (0.385, 0.582) pushes the optimal
        // prediction for A over the 0.55 threshold
        let (prediction, to_a) = prediction_for_a(0.385, 0.582).unwrap();
        assert!((prediction - 0.602).abs() < 1e-3, "prediction {prediction}");
        assert!(to_a);
    }

    #[test]
    fn prediction_formula_validates_inputs() {
        assert!(optimal_wmse_prediction(&[(1.0, 0.7), (0.0, 0.7)], &[1.0, 1.0]).is_err());
        assert!(optimal_wmse_prediction(&[(1.0, 1.0)], &[0.0]).is_err());
        assert!(optimal_wmse_prediction(&[(1.0, 1.0)], &[-2.0]).is_err());
        assert!(optimal_wmse_prediction(&[(1.0, 1.0)], &[1.0, 2.0]).is_err());
        assert!(optimal_wmse_prediction(&[], &[]).is_err());
    }

    #[test]
    fn shared_weight_minimizer_is_the_conditional_mean() {
        // with one weight shared across outcomes, the minimizer of the
        // expected weighted loss is E[y] no matter the weight
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let y0: f64 = rng.random_range(-5.0..5.0);
            let y1: f64 = rng.random_range(-5.0..5.0);
            let p = rng.random_range(0.05..0.95);
            let w = rng.random_range(0.01..100.0);
            let expected = p * y0 + (1.0 - p) * y1;
            let numeric = ternary_minimize(
                |v| p * w * (v - y0).powi(2) + (1.0 - p) * w * (v - y1).powi(2),
                y0.min(y1) - 1.0,
                y0.max(y1) + 1.0,
            );
            assert!((numeric - expected).abs() < 1e-6);
            let formula =
                optimal_wmse_prediction(&[(y0, p), (y1, 1.0 - p)], &[w, w]).unwrap();
            assert!((formula - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_formula_matches_numeric_minimization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let y0 = rng.random_range(-3.0..3.0);
            let y1 = rng.random_range(-3.0..3.0);
            let p = rng.random_range(0.05..0.95);
            let w0 = rng.random_range(0.05..20.0);
            let w1 = rng.random_range(0.05..20.0);
            let formula =
                optimal_wmse_prediction(&[(y0, p), (y1, 1.0 - p)], &[w0, w1]).unwrap();
            let numeric = ternary_minimize(
                |v| p * w0 * (v - y0).powi(2) + (1.0 - p) * w1 * (v - y1).powi(2),
                y0.min(y1) - 1.0,
                y0.max(y1) + 1.0,
            );
            assert!(
                (formula - numeric).abs() < 1e-6,
                "formula {formula} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn even_grid_regret_tables_are_exact() {
        let report = run_counterexample(&NoiseGrid::Evenly15, WeightFit::ClosedForm).unwrap();
        assert_eq!(report.low_regrets.len(), 15);
        assert_eq!(report.high_regrets.len(), 15);
        // A's value 0: predictions up to 0.43 keep the resource with B
        // (regret 0); the four predictions above 0.55 hand it to A
        for (k, regret) in report.low_regrets.iter().enumerate() {
            let expected = if k >= 11 { 0.55 } else { 0.0 };
            assert!(
                (*regret - expected).abs() < 1e-15,
                "low scenario offset {k}: {regret} vs {expected}"
            );
        }
        // A's value 1: the four predictions at or below 0.43 leave the
        // resource with B and forfeit 0.45
        for (k, regret) in report.high_regrets.iter().enumerate() {
            let expected = if k <= 3 { 0.45 } else { 0.0 };
            assert!(
                (*regret - expected).abs() < 1e-15,
                "high scenario offset {k}: {regret} vs {expected}"
            );
        }
    }

    #[test]
    fn closed_form_weights_match_an_independent_least_squares() {
        let report = run_counterexample(&NoiseGrid::Evenly15, WeightFit::ClosedForm).unwrap();
        // recompute from scratch: the grid, the decision rule, the regrets,
        // and the normal equation for w·d²
        let mut expected = [0.0f64; 2];
        for (slot, value_a) in [(0usize, 0.0f64), (1usize, 1.0f64)] {
            let mut num = 0.0;
            let mut den = 0.0;
            for k in 0..15 {
                let offset = -1.0 + 2.0 * k as f64 / 14.0;
                let predicted = value_a + offset;
                let truth_quality = if value_a > 0.55 { value_a } else { 0.55 };
                let quality = if predicted > 0.55 { value_a } else { 0.55 };
                let regret = truth_quality - quality;
                num += regret * offset * offset;
                den += offset.powi(4);
            }
            expected[slot] = num / den;
        }
        assert!((report.w_low - expected[0]).abs() < 1e-9, "{}", report.w_low);
        assert!((report.w_high - expected[1]).abs() < 1e-9, "{}", report.w_high);
    }

    #[test]
    fn converged_fit_on_the_symmetric_grid_keeps_the_decision() {
        // the even grid has identical Σd⁴ in both scenarios, so converged
        // least squares gives w_high/w_low = 0.45/0.55 and the induced
        // prediction lands exactly at 0.45 — below the threshold
        let report = run_counterexample(&NoiseGrid::Evenly15, WeightFit::ClosedForm).unwrap();
        assert!((report.prediction_for_a - 0.45).abs() < 1e-9);
        assert!(!report.resource_to_a);
        assert!(report.is_consistent);
    }

    #[test]
    fn gradient_descent_fit_converges_to_the_closed_form() {
        let closed = run_counterexample(&NoiseGrid::Evenly15, WeightFit::ClosedForm).unwrap();
        let gd = run_counterexample(&NoiseGrid::Evenly15, WeightFit::GradientDescent).unwrap();
        assert!(
            (gd.w_low - closed.w_low).abs() < 1e-3,
            "low: {} vs {}",
            gd.w_low,
            closed.w_low
        );
        assert!(
            (gd.w_high - closed.w_high).abs() < 1e-3,
            "high: {} vs {}",
            gd.w_high,
            closed.w_high
        );
    }

    #[test]
    fn uniform_grid_runs_and_prices_correctly() {
        let report =
            run_counterexample(&NoiseGrid::Uniform { k: 25, seed: 7 }, WeightFit::ClosedForm)
                .unwrap();
        assert_eq!(report.low_regrets.len(), 25);
        for regret in report.low_regrets.iter().chain(&report.high_regrets) {
            assert!(
                *regret == 0.0 || (*regret - 0.55).abs() < 1e-12 || (*regret - 0.45).abs() < 1e-12
            );
        }
        assert!(report.w_low.is_finite() && report.w_high.is_finite());
    }
}
