//! Convex-by-construction loss families fit to decision-quality regrets.
//!
//! Every family is a nonnegative function of the residual d = ŷ − y that
//! vanishes at the truth, so a predictive model trained on a fitted loss is
//! never pulled away from labels it already matches. Weight entries are
//! reparameterized as w = w_min + softplus(θ), keeping them strictly above
//! the floor no matter what the optimizer does to θ; quadratic forms use
//! H = LᵀL + w_min·I, PSD for any factor L. Directed variants switch
//! parameters on the per-coordinate residual sign (the nonnegative branch
//! at zero), pricing over- and under-prediction differently while staying
//! convex within each sign orthant.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_W_MIN: f64 = 0.01;
pub const LOSS_FILE_VERSION: &str = "lossfit/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFamily {
    Mse,
    LzScalar,
    WeightedMse,
    Quadratic,
    DirectedWeightedMse,
    DirectedQuadratic,
}

impl LossFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossFamily::Mse => "mse",
            LossFamily::LzScalar => "lz_scalar",
            LossFamily::WeightedMse => "weighted_mse",
            LossFamily::Quadratic => "quadratic",
            LossFamily::DirectedWeightedMse => "directed_weighted_mse",
            LossFamily::DirectedQuadratic => "directed_quadratic",
        }
    }

    /// Number of raw parameters θ for residual dimension `dim`.
    pub fn raw_param_count(&self, dim: usize) -> usize {
        match self {
            LossFamily::Mse => 0,
            LossFamily::LzScalar => 1,
            LossFamily::WeightedMse => dim,
            LossFamily::Quadratic => dim * dim,
            LossFamily::DirectedWeightedMse => 2 * dim,
            LossFamily::DirectedQuadratic => 4 * dim * dim,
        }
    }

    pub fn is_directed(&self) -> bool {
        matches!(
            self,
            LossFamily::DirectedWeightedMse | LossFamily::DirectedQuadratic
        )
    }

    /// Families whose parameters form a factor matrix over prediction pairs.
    pub fn is_pairwise(&self) -> bool {
        matches!(self, LossFamily::Quadratic | LossFamily::DirectedQuadratic)
    }
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mse" => LossFamily::Mse,
            "lz_scalar" => LossFamily::LzScalar,
            "weighted_mse" => LossFamily::WeightedMse,
            "quadratic" => LossFamily::Quadratic,
            "directed_weighted_mse" => LossFamily::DirectedWeightedMse,
            "directed_quadratic" => LossFamily::DirectedQuadratic,
            other => return Err(Error::Input(format!("unknown loss family '{other}'"))),
        })
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of softplus on (0, ∞): the θ with softplus(θ) = y.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp()).ln_1p()
}

/// Effective weight under the floor reparameterization.
pub fn effective_weight(theta: f64, w_min: f64) -> f64 {
    w_min + softplus(theta)
}

/// Block index into the four directed factor matrices, ordered
/// [plus-plus, plus-minus, minus-plus, minus-minus]; the first sign gates
/// the factor's row coordinate, the second its column coordinate.
fn directed_block(row_plus: bool, col_plus: bool) -> usize {
    match (row_plus, col_plus) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

/// One fitted (or induced) loss: the family, the residual dimension, the
/// weight floor, and the raw parameters θ in the family's layout.
///
/// Layouts: LzScalar `[θ]`; WeightedMse `θ_0..θ_{D-1}`; Quadratic a row-major
/// D×D factor; DirectedWeightedMse `θ⁺` then `θ⁻`; DirectedQuadratic four
/// row-major D×D factors in [++, +−, −+, −−] order. Mse has no parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub family: LossFamily,
    pub dim: usize,
    pub w_min: f64,
    pub raw: Vec<f64>,
}

impl LossParams {
    pub fn new(family: LossFamily, dim: usize, w_min: f64, raw: Vec<f64>) -> Result<Self> {
        let params = Self {
            family,
            dim,
            w_min,
            raw,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Input("loss dimension must be positive".into()));
        }
        if !self.w_min.is_finite() || self.w_min <= 0.0 {
            return Err(Error::Input(format!(
                "weight floor must be > 0, got {}",
                self.w_min
            )));
        }
        let expected = self.family.raw_param_count(self.dim);
        if self.raw.len() != expected {
            return Err(Error::Dimension {
                expected,
                actual: self.raw.len(),
            });
        }
        if let Some(bad) = self.raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite raw parameter {bad}")));
        }
        Ok(())
    }

    /// Starting point for gradient fitting: weight entries at θ = 0
    /// (effective weight w_min + ln 2), factor matrices near the identity
    /// with a small seeded perturbation to break symmetry between blocks.
    pub fn init_for_fit(family: LossFamily, dim: usize, w_min: f64, seed: u64) -> Result<Self> {
        use rand::{Rng, SeedableRng};
        let count = family.raw_param_count(dim);
        let raw = if family.is_pairwise() {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let blocks = count / (dim * dim);
            let mut raw = Vec::with_capacity(count);
            for _ in 0..blocks {
                for i in 0..dim {
                    for j in 0..dim {
                        let diag = if i == j { 1.0 } else { 0.0 };
                        raw.push(diag + rng.random_range(-0.01..0.01));
                    }
                }
            }
            raw
        } else {
            vec![0.0; count]
        };
        Self::new(family, dim, w_min, raw)
    }

    pub fn from_scalar_weight(dim: usize, weight: f64, w_min: f64) -> Result<Self> {
        Self::new(
            LossFamily::LzScalar,
            dim,
            w_min,
            vec![theta_for_weight(weight, w_min)?],
        )
    }

    pub fn from_effective_weights(weights: &[f64], w_min: f64) -> Result<Self> {
        let raw = weights
            .iter()
            .map(|&w| theta_for_weight(w, w_min))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(LossFamily::WeightedMse, weights.len(), w_min, raw)
    }

    pub fn from_directed_weights(plus: &[f64], minus: &[f64], w_min: f64) -> Result<Self> {
        if plus.len() != minus.len() {
            return Err(Error::Dimension {
                expected: plus.len(),
                actual: minus.len(),
            });
        }
        let raw = plus
            .iter()
            .chain(minus)
            .map(|&w| theta_for_weight(w, w_min))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(LossFamily::DirectedWeightedMse, plus.len(), w_min, raw)
    }

    pub fn from_factor(factor: &[Vec<f64>], w_min: f64) -> Result<Self> {
        let dim = factor.len();
        let raw = flatten_square(factor, dim)?;
        Self::new(LossFamily::Quadratic, dim, w_min, raw)
    }

    /// Four factors in [++, +−, −+, −−] order.
    pub fn from_directed_factors(factors: &[Vec<Vec<f64>>], w_min: f64) -> Result<Self> {
        if factors.len() != 4 {
            return Err(Error::Dimension {
                expected: 4,
                actual: factors.len(),
            });
        }
        let dim = factors[0].len();
        let mut raw = Vec::with_capacity(4 * dim * dim);
        for factor in factors {
            raw.extend(flatten_square(factor, dim)?);
        }
        Self::new(LossFamily::DirectedQuadratic, dim, w_min, raw)
    }

    pub fn scalar_weight(&self) -> Option<f64> {
        (self.family == LossFamily::LzScalar)
            .then(|| effective_weight(self.raw[0], self.w_min))
    }

    pub fn weight_vector(&self) -> Option<Vec<f64>> {
        (self.family == LossFamily::WeightedMse).then(|| {
            self.raw
                .iter()
                .map(|&t| effective_weight(t, self.w_min))
                .collect()
        })
    }

    pub fn directed_weight_vectors(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        (self.family == LossFamily::DirectedWeightedMse).then(|| {
            let w = |t: &f64| effective_weight(*t, self.w_min);
            (
                self.raw[..self.dim].iter().map(w).collect(),
                self.raw[self.dim..].iter().map(w).collect(),
            )
        })
    }

    fn residual(&self, predictions: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
        if predictions.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: predictions.len(),
            });
        }
        if labels.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: labels.len(),
            });
        }
        predictions
            .iter()
            .zip(labels)
            .map(|(p, y)| {
                let d = p - y;
                if d.is_finite() {
                    Ok(d)
                } else {
                    Err(Error::Input(format!("non-finite residual {p} - {y}")))
                }
            })
            .collect()
    }

    /// Loss value at the prediction.
    pub fn eval(&self, predictions: &[f64], labels: &[f64]) -> Result<f64> {
        let d = self.residual(predictions, labels)?;
        let value = match self.family {
            LossFamily::Mse => {
                d.iter().map(|v| v * v).sum::<f64>() / self.dim as f64
            }
            LossFamily::LzScalar => {
                effective_weight(self.raw[0], self.w_min) * d.iter().map(|v| v * v).sum::<f64>()
            }
            LossFamily::WeightedMse => self
                .raw
                .iter()
                .zip(&d)
                .map(|(&t, v)| effective_weight(t, self.w_min) * v * v)
                .sum(),
            LossFamily::DirectedWeightedMse => d
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    let theta = if *v >= 0.0 {
                        self.raw[n]
                    } else {
                        self.raw[self.dim + n]
                    };
                    effective_weight(theta, self.w_min) * v * v
                })
                .sum(),
            LossFamily::Quadratic | LossFamily::DirectedQuadratic => {
                let v = self.factor_times(&d);
                v.iter().map(|x| x * x).sum::<f64>()
                    + self.w_min * d.iter().map(|x| x * x).sum::<f64>()
            }
        };
        Ok(value)
    }

    /// Gradient of the loss in the prediction. Directed families return the
    /// subgradient of the nonnegative branch on residual-sign boundaries.
    pub fn grad_predictions(&self, predictions: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
        let d = self.residual(predictions, labels)?;
        let grad = match self.family {
            LossFamily::Mse => d.iter().map(|v| 2.0 * v / self.dim as f64).collect(),
            LossFamily::LzScalar => {
                let w = effective_weight(self.raw[0], self.w_min);
                d.iter().map(|v| 2.0 * w * v).collect()
            }
            LossFamily::WeightedMse => self
                .raw
                .iter()
                .zip(&d)
                .map(|(&t, v)| 2.0 * effective_weight(t, self.w_min) * v)
                .collect(),
            LossFamily::DirectedWeightedMse => d
                .iter()
                .enumerate()
                .map(|(n, v)| {
                    let theta = if *v >= 0.0 {
                        self.raw[n]
                    } else {
                        self.raw[self.dim + n]
                    };
                    2.0 * effective_weight(theta, self.w_min) * v
                })
                .collect(),
            LossFamily::Quadratic | LossFamily::DirectedQuadratic => {
                // ∇(‖Ld‖² + w_min‖d‖²) = 2Lᵀ(Ld) + 2·w_min·d
                let v = self.factor_times(&d);
                let signs = residual_signs(&d);
                (0..self.dim)
                    .map(|j| {
                        let lt_v: f64 = (0..self.dim)
                            .map(|i| self.factor_entry(&signs, i, j) * v[i])
                            .sum();
                        2.0 * lt_v + 2.0 * self.w_min * d[j]
                    })
                    .collect()
            }
        };
        Ok(grad)
    }

    /// Adds `factor · ∂loss/∂θ` into `out` (length = raw parameter count).
    pub fn grad_raw_into(
        &self,
        predictions: &[f64],
        labels: &[f64],
        factor: f64,
        out: &mut [f64],
    ) -> Result<()> {
        if out.len() != self.raw.len() {
            return Err(Error::Dimension {
                expected: self.raw.len(),
                actual: out.len(),
            });
        }
        let d = self.residual(predictions, labels)?;
        match self.family {
            LossFamily::Mse => {}
            LossFamily::LzScalar => {
                let norm: f64 = d.iter().map(|v| v * v).sum();
                out[0] += factor * norm * sigmoid(self.raw[0]);
            }
            LossFamily::WeightedMse => {
                for (n, v) in d.iter().enumerate() {
                    out[n] += factor * v * v * sigmoid(self.raw[n]);
                }
            }
            LossFamily::DirectedWeightedMse => {
                for (n, v) in d.iter().enumerate() {
                    let slot = if *v >= 0.0 { n } else { self.dim + n };
                    out[slot] += factor * v * v * sigmoid(self.raw[slot]);
                }
            }
            LossFamily::Quadratic => {
                // ∂‖Ld‖²/∂L_ij = 2·(Ld)_i·d_j
                let v = self.factor_times(&d);
                for i in 0..self.dim {
                    for (j, dj) in d.iter().enumerate() {
                        out[i * self.dim + j] += factor * 2.0 * v[i] * dj;
                    }
                }
            }
            LossFamily::DirectedQuadratic => {
                let v = self.factor_times(&d);
                let signs = residual_signs(&d);
                let block = self.dim * self.dim;
                for i in 0..self.dim {
                    for (j, dj) in d.iter().enumerate() {
                        let b = directed_block(signs[i], signs[j]);
                        out[b * block + i * self.dim + j] += factor * 2.0 * v[i] * dj;
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient of the loss in the raw parameters θ.
    pub fn grad_raw(&self, predictions: &[f64], labels: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.raw.len()];
        self.grad_raw_into(predictions, labels, 1.0, &mut out)?;
        Ok(out)
    }

    /// The factor entry active at row i, column j for the given residual
    /// sign pattern (identical for all patterns in the undirected family).
    fn factor_entry(&self, signs: &[bool], i: usize, j: usize) -> f64 {
        match self.family {
            LossFamily::Quadratic => self.raw[i * self.dim + j],
            LossFamily::DirectedQuadratic => {
                let block = directed_block(signs[i], signs[j]);
                self.raw[block * self.dim * self.dim + i * self.dim + j]
            }
            _ => unreachable!("factor entries only exist for quadratic families"),
        }
    }

    /// L·d with the sign-gated factor for directed quadratics.
    fn factor_times(&self, d: &[f64]) -> Vec<f64> {
        let signs = residual_signs(d);
        (0..self.dim)
            .map(|i| {
                d.iter()
                    .enumerate()
                    .map(|(j, dj)| self.factor_entry(&signs, i, j) * dj)
                    .sum()
            })
            .collect()
    }

    /// Hessian of the loss in ŷ within the orthant given by `signs`
    /// (true = nonnegative residual). Constant per orthant for every family.
    pub fn hessian_for_signs(&self, signs: &[bool]) -> Result<Vec<Vec<f64>>> {
        if signs.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: signs.len(),
            });
        }
        let mut h = vec![vec![0.0; self.dim]; self.dim];
        match self.family {
            LossFamily::Mse => {
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = 2.0 / self.dim as f64;
                }
            }
            LossFamily::LzScalar => {
                let w = effective_weight(self.raw[0], self.w_min);
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = 2.0 * w;
                }
            }
            LossFamily::WeightedMse => {
                for (i, row) in h.iter_mut().enumerate() {
                    row[i] = 2.0 * effective_weight(self.raw[i], self.w_min);
                }
            }
            LossFamily::DirectedWeightedMse => {
                for (i, row) in h.iter_mut().enumerate() {
                    let slot = if signs[i] { i } else { self.dim + i };
                    row[i] = 2.0 * effective_weight(self.raw[slot], self.w_min);
                }
            }
            LossFamily::Quadratic | LossFamily::DirectedQuadratic => {
                // 2(LᵀL + w_min·I) with the orthant's gated factor
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        let ltl: f64 = (0..self.dim)
                            .map(|k| {
                                self.factor_entry(signs, k, i) * self.factor_entry(signs, k, j)
                            })
                            .sum();
                        h[i][j] = 2.0 * ltl;
                    }
                    h[i][i] += 2.0 * self.w_min;
                }
            }
        }
        Ok(h)
    }

    pub fn hessian_min_eigenvalue(&self, signs: &[bool]) -> Result<f64> {
        let h = self.hessian_for_signs(signs)?;
        let flat: Vec<f64> = h.iter().flatten().copied().collect();
        let matrix = DMatrix::from_row_slice(self.dim, self.dim, &flat);
        let eigen = matrix.symmetric_eigen();
        Ok(eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

fn theta_for_weight(weight: f64, w_min: f64) -> Result<f64> {
    if !weight.is_finite() || weight <= w_min {
        return Err(Error::Input(format!(
            "effective weight must exceed the floor {w_min}, got {weight}"
        )));
    }
    Ok(softplus_inverse(weight - w_min))
}

fn flatten_square(matrix: &[Vec<f64>], dim: usize) -> Result<Vec<f64>> {
    if matrix.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            actual: matrix.len(),
        });
    }
    let mut raw = Vec::with_capacity(dim * dim);
    for row in matrix {
        if row.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: row.len(),
            });
        }
        raw.extend_from_slice(row);
    }
    Ok(raw)
}

pub(crate) fn residual_signs(d: &[f64]) -> Vec<bool> {
    d.iter().map(|v| *v >= 0.0).collect()
}

#[derive(Serialize, Deserialize)]
struct LossParamsFile {
    version: String,
    losses: Vec<LossParams>,
}

/// One JSON document per file: a version tag plus the fitted losses in
/// instance order.
pub fn save_loss_params(losses: &[LossParams], path: &Path) -> Result<()> {
    for params in losses {
        params.validate()?;
    }
    let file = LossParamsFile {
        version: LOSS_FILE_VERSION.to_string(),
        losses: losses.to_vec(),
    };
    let mut text = serde_json::to_string(&file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_loss_params(path: &Path) -> Result<Vec<LossParams>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    let file: LossParamsFile = serde_json::from_str(&text)?;
    if file.version != LOSS_FILE_VERSION {
        return Err(Error::Input(format!(
            "unsupported loss file version '{}'",
            file.version
        )));
    }
    for params in &file.losses {
        params.validate()?;
    }
    Ok(file.losses)
}
