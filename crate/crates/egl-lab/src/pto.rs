//! Domain-agnostic abstractions for predict-then-optimize tasks: instances,
//! decisions, the decision-problem interface, and decision-quality metrics.
//!
//! Decision quality of predictions is the objective value of the decision
//! they induce, evaluated under the true labels. Regret is the gap to the
//! decision quality of perfect predictions; it is nonnegative whenever the
//! solver is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Which partition an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One decision-making instance: a label vector `y` and one feature vector
/// per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtoInstance {
    pub instance_id: String,
    pub split: Split,
    /// Prediction targets, length `D`.
    pub labels: Vec<f64>,
    /// One feature vector per label (`features.len() == labels.len()`).
    pub features: Vec<Vec<f64>>,
}

impl PtoInstance {
    pub fn new(instance_id: String, labels: Vec<f64>, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                actual: features.len(),
            });
        }
        if !labels.iter().all(|v| v.is_finite())
            || !features.iter().flatten().all(|v| v.is_finite())
        {
            return Err(Error::Input(format!(
                "instance {instance_id} contains non-finite entries"
            )));
        }
        Ok(Self {
            instance_id,
            split: Split::Train,
            labels,
            features,
        })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// A point in the feasible region of a decision problem (selection indicator
/// or simplex weights, depending on the problem).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub z: Vec<f64>,
}

impl Decision {
    pub fn new(z: Vec<f64>) -> Self {
        Self { z }
    }

    /// Indices with `z[i] > 0.5`, for selection-style decisions.
    pub fn selected_indices(&self) -> Vec<usize> {
        self.z
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.5)
            .map(|(i, _)| i)
            .collect()
    }
}

/// A parameterized optimization task: maximize `f(z; y)` over a feasible set.
///
/// Implementations must be deterministic: `solve` and `objective` are pure
/// functions of their inputs, and values are immutable after construction so
/// they can be shared freely across threads.
pub trait DecisionProblem: Send + Sync {
    /// Prediction/label dimension `D`.
    fn dim(&self) -> usize;

    /// Length of decision vectors. Usually `dim()`, but e.g. website
    /// selection decides over sites while predictions cover (site, user)
    /// pairs.
    fn decision_dim(&self) -> usize {
        self.dim()
    }

    fn name(&self) -> &'static str;

    /// `argmax_z f(z; predictions)` over the feasible region.
    fn solve(&self, predictions: &[f64]) -> Result<Decision>;

    /// Objective value `f(decision; labels)`.
    fn objective(&self, decision: &Decision, labels: &[f64]) -> Result<f64>;

    fn is_feasible(&self, decision: &Decision) -> bool;

    /// Complete enumeration of the feasible set in deterministic order.
    /// Only supported for finite feasible sets of tractable size.
    fn enumerate_feasible(&self) -> Result<Vec<Decision>> {
        Err(Error::Capability(format!(
            "{} does not support feasible-set enumeration",
            self.name()
        )))
    }

    /// Worst-case suboptimality of `solve`: 0 for exact solvers, the
    /// duality-gap tolerance for approximate ones. Regret can dip below zero
    /// by at most this amount.
    fn solver_tolerance(&self) -> f64 {
        0.0
    }
}

fn check_inputs(problem: &dyn DecisionProblem, predictions: &[f64], labels: &[f64]) -> Result<()> {
    if predictions.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            actual: predictions.len(),
        });
    }
    if labels.len() != problem.dim() {
        return Err(Error::Dimension {
            expected: problem.dim(),
            actual: labels.len(),
        });
    }
    if !predictions.iter().all(|v| v.is_finite()) || !labels.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("non-finite prediction or label".into()));
    }
    Ok(())
}

/// Decision quality: `f(z*(predictions); labels)`.
pub fn decision_quality(
    problem: &dyn DecisionProblem,
    predictions: &[f64],
    labels: &[f64],
) -> Result<f64> {
    check_inputs(problem, predictions, labels)?;
    let decision = problem.solve(predictions)?;
    problem.objective(&decision, labels)
}

/// Decision-quality regret: `DQ(y, y) - DQ(predictions, y)`.
///
/// Nonnegative for exact solvers; bounded below by `-solver_tolerance()` for
/// approximate ones.
pub fn dq_regret(
    problem: &dyn DecisionProblem,
    predictions: &[f64],
    labels: &[f64],
) -> Result<f64> {
    let dq_truth = decision_quality(problem, labels, labels)?;
    let dq_pred = decision_quality(problem, predictions, labels)?;
    Ok(dq_truth - dq_pred)
}

/// Decision quality rescaled so random-uniform predictions score 0 and
/// perfect predictions score 1.
///
/// The baseline `DQ(eps, y)` is estimated by averaging `num_baseline_draws`
/// decision qualities of predictions drawn uniformly on [0, 1) per
/// coordinate from a dedicated seeded stream. Instances where the baseline
/// coincides with the optimum are uninformative and raise
/// [`Error::DegenerateBaseline`].
pub fn normalized_dq(
    problem: &dyn DecisionProblem,
    predictions: &[f64],
    labels: &[f64],
    rng_seed: u64,
    num_baseline_draws: usize,
) -> Result<f64> {
    if num_baseline_draws == 0 {
        return Err(Error::Input("num_baseline_draws must be >= 1".into()));
    }
    let dq_pred = decision_quality(problem, predictions, labels)?;
    let dq_truth = decision_quality(problem, labels, labels)?;
    let dq_baseline = baseline_dq(problem, labels, rng_seed, num_baseline_draws)?;
    let denominator = dq_truth - dq_baseline;
    if denominator.abs() < 1e-12 {
        return Err(Error::DegenerateBaseline { denominator });
    }
    Ok((dq_pred - dq_baseline) / denominator)
}

/// Average decision quality of uniform-random predictions, `DQ(eps, y)`.
pub fn baseline_dq(
    problem: &dyn DecisionProblem,
    labels: &[f64],
    rng_seed: u64,
    num_baseline_draws: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for draw in 0..num_baseline_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, draw as u64));
        let eps: Vec<f64> = (0..problem.dim()).map(|_| rng.random::<f64>()).collect();
        total += decision_quality(problem, &eps, labels)?;
    }
    Ok(total / num_baseline_draws as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::TopKProblem;

    /// Enumeration oracle: best objective over the full feasible set.
    fn enumerated_optimum(problem: &dyn DecisionProblem, y: &[f64]) -> f64 {
        problem
            .enumerate_feasible()
            .unwrap()
            .iter()
            .map(|z| problem.objective(z, y).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn decision_quality_top1_matches_enumeration() {
        let problem = TopKProblem::new(1, 3).unwrap();
        let y = [1.0, 5.0, 3.0];
        let y_hat = [2.0, 0.0, 4.0];
        // Oracle: predictions pick index 2, so DQ is y[2] = 3.
        let dq = decision_quality(&problem, &y_hat, &y).unwrap();
        assert_eq!(dq, 3.0);
        // Perfect predictions attain the enumerated optimum.
        let dq_perfect = decision_quality(&problem, &y, &y).unwrap();
        assert_eq!(dq_perfect, enumerated_optimum(&problem, &y));
    }

    #[test]
    fn regret_of_truth_is_zero_and_oracle_case() {
        let problem = TopKProblem::new(1, 3).unwrap();
        let y = [1.0, 5.0, 3.0];
        assert_eq!(dq_regret(&problem, &y, &y).unwrap(), 0.0);
        // Enumeration oracle: optimum 5, prediction picks 3 -> regret 2.
        assert_eq!(dq_regret(&problem, &[2.0, 0.0, 4.0], &y).unwrap(), 2.0);
    }

    #[test]
    fn counterexample_regret_is_055() {
        // Two-individual resource assignment: give to argmax.
        let problem = TopKProblem::new(1, 2).unwrap();
        let y = [0.0, 0.55];
        let y_hat = [1.0, 0.55];
        assert!((dq_regret(&problem, &y_hat, &y).unwrap() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn normalized_dq_of_truth_is_one() {
        let problem = TopKProblem::new(1, 4).unwrap();
        let y = [0.3, -1.0, 2.0, 0.7];
        let v = normalized_dq(&problem, &y, &y, 99, 10).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_dq_of_single_baseline_draw_is_zero() {
        let problem = TopKProblem::new(1, 3).unwrap();
        let y = [0.5, 2.0, 1.0];
        // Reconstruct the single baseline draw and feed it back as the
        // prediction: numerator must vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(5, 0));
        let eps: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let v = normalized_dq(&problem, &eps, &y, 5, 1).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn normalized_dq_below_baseline_is_negative() {
        // y = [0, 10]: uniform baseline picks either index with equal
        // chance, E[DQ(eps, y)] = 5; the prediction picks index 0 (DQ 0).
        let problem = TopKProblem::new(1, 2).unwrap();
        let y = [0.0, 10.0];
        let v = normalized_dq(&problem, &[1.0, 0.0], &y, 7, 200).unwrap();
        assert!(v < 0.0, "expected negative normalized DQ, got {v}");
        // The Monte-Carlo baseline should be near its analytic expectation.
        let baseline = baseline_dq(&problem, &y, 7, 200).unwrap();
        // sd of one draw is 5, so 3 standard errors is ~1.06.
        assert!((baseline - 5.0).abs() < 3.0 * 5.0 / (200f64).sqrt());
    }

    #[test]
    fn normalized_dq_means_tend_to_zero_over_baseline_draws() {
        let problem = TopKProblem::new(1, 5).unwrap();
        let y = [0.1, 0.9, 0.4, 0.7, 0.2];
        let n = 400;
        let mut values = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(1234, i as u64));
            let eps: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
            values.push(normalized_dq(&problem, &eps, &y, 777, 500).unwrap());
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sem = (var / n as f64).sqrt();
        assert!(
            mean.abs() <= 3.0 * sem + 1e-3,
            "mean {mean} not within 3 SEM ({sem}) of 0"
        );
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let problem = TopKProblem::new(1, 3).unwrap();
        let err = decision_quality(&problem, &[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn degenerate_baseline_is_an_error() {
        // All labels equal: every decision has the same value, so the
        // baseline equals the optimum.
        let problem = TopKProblem::new(1, 3).unwrap();
        let y = [2.0, 2.0, 2.0];
        let err = normalized_dq(&problem, &y, &y, 3, 5).unwrap_err();
        assert!(matches!(err, Error::DegenerateBaseline { .. }));
    }

    #[test]
    fn instance_invariants_checked() {
        assert!(PtoInstance::new("a".into(), vec![1.0, 2.0], vec![vec![0.0]]).is_err());
        assert!(
            PtoInstance::new("b".into(), vec![f64::NAN], vec![vec![0.0]]).is_err()
        );
    }
}
