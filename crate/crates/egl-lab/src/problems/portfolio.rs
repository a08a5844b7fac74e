//! Markowitz-style portfolio selection: spread unit weight over D stocks to
//! maximize risk-adjusted return f(z) = zᵀy − λ·zᵀQz over the probability
//! simplex.
//!
//! The solver is Frank–Wolfe with away steps. Iterates stay exactly on the
//! simplex (no projection needed) and the duality gap gives a certified
//! stopping criterion; away steps restore linear convergence near faces.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::pto::{Decision, DecisionProblem};

const SYMMETRY_TOL: f64 = 1e-9;
const EIGENVALUE_FLOOR: f64 = -1e-9;
const SIMPLEX_TOL: f64 = 1e-8;

/// Iteration and stopping controls for the Frank–Wolfe solver.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct FrankWolfeSettings {
    pub max_iterations: usize,
    pub gap_tolerance: f64,
}

impl Default for FrankWolfeSettings {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            gap_tolerance: 1e-8,
        }
    }
}

/// Convergence report for a single solve.
#[derive(Debug, Clone, Copy)]
pub struct FwSolveInfo {
    /// Update steps taken before the gap fell below tolerance.
    pub iterations: usize,
    /// Duality gap at the returned iterate.
    pub gap: f64,
}

/// Maximize zᵀŷ − λ·zᵀQz over the simplex for a fixed risk matrix Q.
#[derive(Debug, Clone)]
pub struct PortfolioProblem {
    /// Row-major D×D risk matrix.
    q_flat: Vec<f64>,
    dim: usize,
    lambda: f64,
    settings: FrankWolfeSettings,
}

impl PortfolioProblem {
    pub fn new(q: &[Vec<f64>], lambda: f64, settings: FrankWolfeSettings) -> Result<Self> {
        let dim = q.len();
        if dim == 0 {
            return Err(Error::Input("portfolio needs at least one stock".into()));
        }
        if q.iter().any(|row| row.len() != dim) {
            return Err(Error::Input(format!("Q must be square, got {dim} rows")));
        }
        let mut q_flat = Vec::with_capacity(dim * dim);
        for row in q {
            q_flat.extend_from_slice(row);
        }
        if q_flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("Q entries must be finite".into()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let skew = (q_flat[i * dim + j] - q_flat[j * dim + i]).abs();
                if skew > SYMMETRY_TOL {
                    return Err(Error::Input(format!(
                        "Q not symmetric: |Q[{i}][{j}] - Q[{j}][{i}]| = {skew:.3e}"
                    )));
                }
            }
        }
        let min_eig = DMatrix::from_row_slice(dim, dim, &q_flat)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < EIGENVALUE_FLOOR {
            return Err(Error::Input(format!(
                "Q must be positive semidefinite: min eigenvalue {min_eig:.3e}"
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Input(format!(
                "risk aversion must be finite and nonnegative, got {lambda}"
            )));
        }
        if settings.max_iterations == 0 || !(settings.gap_tolerance > 0.0) {
            return Err(Error::Input(
                "solver needs max_iterations >= 1 and gap_tolerance > 0".into(),
            ));
        }
        Ok(Self {
            q_flat,
            dim,
            lambda,
            settings,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn settings(&self) -> FrankWolfeSettings {
        self.settings
    }

    /// Row `i` of Q.
    pub fn q_row(&self, i: usize) -> &[f64] {
        &self.q_flat[i * self.dim..(i + 1) * self.dim]
    }

    fn q_times(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.q_row(i).iter().zip(z).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Solve and report the achieved duality gap and iteration count.
    pub fn solve_with_info(&self, predictions: &[f64]) -> Result<(Decision, FwSolveInfo)> {
        if predictions.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: predictions.len(),
            });
        }
        if predictions.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("predictions must be finite".into()));
        }

        let d = self.dim;
        let tol = self.settings.gap_tolerance;
        let mut z = vec![1.0 / d as f64; d];

        for iter in 0..=self.settings.max_iterations {
            let qz = self.q_times(&z);
            let grad: Vec<f64> = (0..d)
                .map(|i| predictions[i] - 2.0 * self.lambda * qz[i])
                .collect();
            let grad_dot_z: f64 = grad.iter().zip(&z).map(|(g, zi)| g * zi).sum();

            // Frank–Wolfe vertex: steepest-ascent coordinate, ties to the
            // lowest index for deterministic replay.
            let mut i_fw = 0;
            for i in 1..d {
                if grad[i] > grad[i_fw] {
                    i_fw = i;
                }
            }
            let gap = grad[i_fw] - grad_dot_z;
            if gap < tol {
                return Ok((
                    Decision::new(z),
                    FwSolveInfo {
                        iterations: iter,
                        gap,
                    },
                ));
            }
            if iter == self.settings.max_iterations {
                return Err(Error::SolverNonConvergence {
                    iterations: iter,
                    gap,
                    best: z,
                });
            }

            // Away vertex: worst coordinate currently holding weight.
            let mut j_away = i_fw;
            let mut away_grad = f64::INFINITY;
            for j in 0..d {
                if z[j] > 0.0 && grad[j] < away_grad {
                    away_grad = grad[j];
                    j_away = j;
                }
            }
            let gap_away = grad_dot_z - away_grad;

            let take_fw = gap >= gap_away || z[j_away] >= 1.0;
            let (vertex, ascent, gamma_max) = if take_fw {
                (i_fw, gap, 1.0)
            } else {
                (j_away, gap_away, z[j_away] / (1.0 - z[j_away]))
            };

            // Exact line search on a quadratic: both directions d share
            // dᵀQd = Q_vv − 2(Qz)_v + zᵀQz with v the step vertex.
            let z_q_z: f64 = z.iter().zip(&qz).map(|(a, b)| a * b).sum();
            let curvature = self.lambda * (self.q_flat[vertex * d + vertex] - 2.0 * qz[vertex] + z_q_z);
            let gamma = if curvature > f64::EPSILON {
                (ascent / (2.0 * curvature)).clamp(0.0, gamma_max)
            } else {
                gamma_max
            };

            if take_fw {
                for v in z.iter_mut() {
                    *v *= 1.0 - gamma;
                }
                z[i_fw] += gamma;
            } else {
                for v in z.iter_mut() {
                    *v *= 1.0 + gamma;
                }
                z[j_away] -= gamma;
                if gamma >= gamma_max {
                    // Drop step: clear the residual float dust so the
                    // coordinate leaves the active set exactly.
                    z[j_away] = 0.0;
                }
            }
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let total: f64 = z.iter().sum();
            for v in z.iter_mut() {
                *v /= total;
            }
        }
        unreachable!("loop returns on convergence or iteration cap");
    }
}

impl DecisionProblem for PortfolioProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &'static str {
        "portfolio"
    }

    fn solve(&self, predictions: &[f64]) -> Result<Decision> {
        self.solve_with_info(predictions).map(|(z, _)| z)
    }

    fn objective(&self, decision: &Decision, labels: &[f64]) -> Result<f64> {
        if decision.z.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: decision.z.len(),
            });
        }
        if labels.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: labels.len(),
            });
        }
        if !self.is_feasible(decision) {
            return Err(Error::Input(
                "portfolio weights must lie on the probability simplex".into(),
            ));
        }
        let z = &decision.z;
        let expected_return: f64 = z.iter().zip(labels).map(|(zi, yi)| zi * yi).sum();
        let qz = self.q_times(z);
        let risk: f64 = z.iter().zip(&qz).map(|(a, b)| a * b).sum();
        Ok(expected_return - self.lambda * risk)
    }

    fn is_feasible(&self, decision: &Decision) -> bool {
        decision.z.len() == self.dim
            && decision.z.iter().all(|v| v.is_finite() && *v >= -SIMPLEX_TOL)
            && (decision.z.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }

    /// The duality gap bounds suboptimality of the returned weights, so
    /// regrets computed through this solver sit within it of zero.
    fn solver_tolerance(&self) -> f64 {
        self.settings.gap_tolerance
    }
}
