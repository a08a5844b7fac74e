//! Website-advertising coverage: pick K of M websites so that the expected
//! number of users who click at least one advertisement is maximized.
//!
//! Predictions and labels are flattened M-by-N click-through-rate matrices,
//! row-major by website. The objective is monotone submodular; the exact
//! solver enumerates all C(M, K) subsets, the greedy solver is available for
//! larger M with the usual (1 - 1/e) guarantee.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::pto::{Decision, DecisionProblem};

use super::topk::binomial;

/// Solver strategy for [`WebAdvertisingProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WebAdvSolveMode {
    /// Enumerate every K-subset. Requires M <= 20.
    #[default]
    Exact,
    /// Greedy marginal-gain selection.
    Greedy,
}

/// Choose `k` of `num_sites` websites given per-(site, user) CTRs.
#[derive(Debug, Clone)]
pub struct WebAdvertisingProblem {
    k: usize,
    num_sites: usize,
    num_users: usize,
    mode: WebAdvSolveMode,
}

const EXACT_MODE_MAX_SITES: usize = 20;

impl WebAdvertisingProblem {
    pub fn new(k: usize, num_sites: usize, num_users: usize, mode: WebAdvSolveMode) -> Result<Self> {
        if k == 0 || k > num_sites {
            return Err(Error::Input(format!(
                "web-adv requires 1 <= K <= M, got K={k}, M={num_sites}"
            )));
        }
        if num_users == 0 {
            return Err(Error::Input("web-adv requires N >= 1 users".into()));
        }
        if mode == WebAdvSolveMode::Exact && num_sites > EXACT_MODE_MAX_SITES {
            return Err(Error::Capability(format!(
                "exact mode enumerates C(M, K) subsets and is capped at M <= {EXACT_MODE_MAX_SITES}; \
                 M={num_sites} needs the greedy mode"
            )));
        }
        Ok(Self {
            k,
            num_sites,
            num_users,
            mode,
        })
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Coverage value of a site subset: CTRs are clamped to [0, 1] before
    /// the product, since model outputs can leave the unit interval.
    fn subset_value(&self, sites: &[usize], ctr_flat: &[f64]) -> f64 {
        let n = self.num_users;
        (0..n)
            .map(|user| {
                let p_no_click: f64 = sites
                    .iter()
                    .map(|&site| 1.0 - ctr_flat[site * n + user].clamp(0.0, 1.0))
                    .product();
                1.0 - p_no_click
            })
            .sum()
    }

    fn greedy_sites(&self, ctr_flat: &[f64]) -> Vec<usize> {
        let mut chosen: Vec<usize> = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let mut best_site = None;
            let mut best_value = f64::NEG_INFINITY;
            for site in 0..self.num_sites {
                if chosen.contains(&site) {
                    continue;
                }
                let mut candidate = chosen.clone();
                candidate.push(site);
                let value = self.subset_value(&candidate, ctr_flat);
                if value > best_value {
                    best_value = value;
                    best_site = Some(site);
                }
            }
            chosen.push(best_site.expect("k <= num_sites"));
        }
        chosen.sort_unstable();
        chosen
    }

    fn exact_sites(&self, ctr_flat: &[f64]) -> Vec<usize> {
        // Combinations come out in lexicographic order, so keeping the first
        // strict maximum breaks ties toward the lexicographically smallest
        // subset.
        let mut best: Option<(f64, Vec<usize>)> = None;
        for subset in (0..self.num_sites).combinations(self.k) {
            let value = self.subset_value(&subset, ctr_flat);
            if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
                best = Some((value, subset));
            }
        }
        best.expect("nonempty feasible set").1
    }

    fn sites_to_decision(&self, sites: &[usize]) -> Decision {
        let mut z = vec![0.0; self.num_sites];
        for &site in sites {
            z[site] = 1.0;
        }
        Decision::new(z)
    }
}

impl DecisionProblem for WebAdvertisingProblem {
    fn dim(&self) -> usize {
        self.num_sites * self.num_users
    }

    fn decision_dim(&self) -> usize {
        self.num_sites
    }

    fn name(&self) -> &'static str {
        "web_advertising"
    }

    fn solve(&self, predictions: &[f64]) -> Result<Decision> {
        if predictions.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: predictions.len(),
            });
        }
        let sites = match self.mode {
            WebAdvSolveMode::Exact => self.exact_sites(predictions),
            WebAdvSolveMode::Greedy => self.greedy_sites(predictions),
        };
        Ok(self.sites_to_decision(&sites))
    }

    fn objective(&self, decision: &Decision, labels: &[f64]) -> Result<f64> {
        if decision.z.len() != self.num_sites {
            return Err(Error::Dimension {
                expected: self.num_sites,
                actual: decision.z.len(),
            });
        }
        if labels.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: labels.len(),
            });
        }
        Ok(self.subset_value(&decision.selected_indices(), labels))
    }

    fn is_feasible(&self, decision: &Decision) -> bool {
        decision.z.len() == self.num_sites
            && decision.z.iter().all(|v| *v == 0.0 || *v == 1.0)
            && decision.z.iter().filter(|v| **v == 1.0).count() == self.k
    }

    fn enumerate_feasible(&self) -> Result<Vec<Decision>> {
        let count = binomial(self.num_sites, self.k);
        if count > 1_000_000 {
            return Err(Error::Capability(format!(
                "feasible set too large to enumerate: C({}, {}) = {count}",
                self.num_sites, self.k
            )));
        }
        Ok((0..self.num_sites)
            .combinations(self.k)
            .map(|sites| self.sites_to_decision(&sites))
            .collect())
    }

    /// The greedy solver is (1 - 1/e)-approximate; exact mode is exact.
    fn solver_tolerance(&self) -> f64 {
        match self.mode {
            WebAdvSolveMode::Exact => 0.0,
            // No uniform additive bound for greedy; callers comparing
            // regrets should rely on the multiplicative guarantee instead.
            WebAdvSolveMode::Greedy => f64::INFINITY,
        }
    }
}
