//! Select the K entries with the highest predicted utility.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::pto::{Decision, DecisionProblem};

/// Pick the top `k` of `dim` resources; the objective is the sum of the true
/// utilities of the selected resources.
#[derive(Debug, Clone)]
pub struct TopKProblem {
    k: usize,
    dim: usize,
}

impl TopKProblem {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::Input(format!(
                "top-k requires 1 <= K <= D, got K={k}, D={dim}"
            )));
        }
        Ok(Self { k, dim })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` largest entries, ties broken by lowest index.
    pub fn top_indices(&self, values: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut picked: Vec<usize> = order.into_iter().take(self.k).collect();
        picked.sort_unstable();
        picked
    }
}

impl DecisionProblem for TopKProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &'static str {
        "top_k"
    }

    fn solve(&self, predictions: &[f64]) -> Result<Decision> {
        if predictions.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: predictions.len(),
            });
        }
        let mut z = vec![0.0; self.dim];
        for i in self.top_indices(predictions) {
            z[i] = 1.0;
        }
        Ok(Decision::new(z))
    }

    fn objective(&self, decision: &Decision, labels: &[f64]) -> Result<f64> {
        if decision.z.len() != self.dim || labels.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: decision.z.len().max(labels.len()),
            });
        }
        Ok(decision
            .z
            .iter()
            .zip(labels)
            .map(|(zi, yi)| zi * yi)
            .sum())
    }

    fn is_feasible(&self, decision: &Decision) -> bool {
        decision.z.len() == self.dim
            && decision.z.iter().all(|v| *v == 0.0 || *v == 1.0)
            && decision.z.iter().filter(|v| **v == 1.0).count() == self.k
    }

    fn enumerate_feasible(&self) -> Result<Vec<Decision>> {
        let count = binomial(self.dim, self.k);
        if count > 1_000_000 {
            return Err(Error::Capability(format!(
                "feasible set too large to enumerate: C({}, {}) = {count}",
                self.dim, self.k
            )));
        }
        Ok((0..self.dim)
            .combinations(self.k)
            .map(|subset| {
                let mut z = vec![0.0; self.dim];
                for i in subset {
                    z[i] = 1.0;
                }
                Decision::new(z)
            })
            .collect())
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut result: u64 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u64) / (i + 1) as u64;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unique_argmax() {
        let p = TopKProblem::new(1, 3).unwrap();
        assert_eq!(p.solve(&[2.0, 0.0, 4.0]).unwrap().z, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn tie_break_lowest_index() {
        let p = TopKProblem::new(1, 3).unwrap();
        assert_eq!(p.solve(&[1.0, 1.0, 0.0]).unwrap().z, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn top2_matches_pair_enumeration() {
        let p = TopKProblem::new(2, 4).unwrap();
        let y_hat = [3.0, 1.0, 2.0, 5.0];
        // Oracle: best of all C(4,2)=6 pairs under the predictions.
        let best = p
            .enumerate_feasible()
            .unwrap()
            .into_iter()
            .max_by(|a, b| {
                p.objective(a, &y_hat)
                    .unwrap()
                    .partial_cmp(&p.objective(b, &y_hat).unwrap())
                    .unwrap()
            })
            .unwrap();
        assert_eq!(best.z, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.solve(&y_hat).unwrap().z, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(TopKProblem::new(1, 3).unwrap().enumerate_feasible().unwrap().len(), 3);
        assert_eq!(TopKProblem::new(2, 4).unwrap().enumerate_feasible().unwrap().len(), 6);
    }

    #[test]
    fn k_larger_than_d_rejected() {
        assert!(TopKProblem::new(4, 3).is_err());
    }

    proptest! {
        /// Scaling predictions by any positive constant leaves the selection
        /// unchanged.
        #[test]
        fn scale_invariance(
            values in proptest::collection::vec(-100.0f64..100.0, 5..12),
            c in 0.01f64..100.0,
            k in 1usize..4,
        ) {
            let p = TopKProblem::new(k, values.len()).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            prop_assert_eq!(p.solve(&values).unwrap().z, p.solve(&scaled).unwrap().z);
        }

        /// The solver matches exhaustive enumeration on small instances.
        #[test]
        fn solve_matches_enumeration(
            values in proptest::collection::vec(-10.0f64..10.0, 4..9),
            k in 1usize..4,
        ) {
            let k = k.min(values.len());
            let p = TopKProblem::new(k, values.len()).unwrap();
            let solved = p.solve(&values).unwrap();
            let best = p
                .enumerate_feasible()
                .unwrap()
                .into_iter()
                .map(|z| p.objective(&z, &values).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            let attained = p.objective(&solved, &values).unwrap();
            prop_assert!((attained - best).abs() < 1e-12);
        }
    }
}
