//! Learned task-specific losses: convex families, per-instance fitting,
//! feature-based parameter networks, and the consistency analysis of the
//! resulting training objectives.

mod consistency;
mod family;
mod fbp;
mod fit;

pub use consistency::{
    optimal_wmse_prediction, prediction_for_a, run_counterexample, CounterexampleReport,
    NoiseGrid, WeightFit, HIGH_VALUE_FOR_A, INDIVIDUAL_B_VALUE, LOW_VALUE_FOR_A,
};
pub use family::{
    effective_weight, load_loss_params, save_loss_params, sigmoid, softplus, softplus_inverse,
    LossFamily, LossParams, DEFAULT_W_MIN, LOSS_FILE_VERSION,
};
pub use fbp::{
    fbp_fit_mse, fit_fbp, induced_params, load_fbp, save_fbp, FbpConfig, FbpFit, FbpInstance,
    FbpNetwork, FBP_FILE_VERSION,
};
pub use fit::{fit_lodl, fit_lodl_dataset, FitConfig, FittedLoss};

use crate::error::{Error, Result};
use crate::nn::InstanceLoss;

/// One fitted loss per training instance, exposed as the training objective
/// for a predictive model; `loss_index` selects the instance's loss.
#[derive(Debug, Clone)]
pub struct LearnedLossTable {
    per_instance: Vec<LossParams>,
}

impl LearnedLossTable {
    /// `dims[i]` is the prediction dimension the i-th loss must accept;
    /// validating up front lets the training-loop calls below stay
    /// infallible.
    pub fn new(per_instance: Vec<LossParams>, dims: &[usize]) -> Result<Self> {
        if per_instance.len() != dims.len() {
            return Err(Error::Dimension {
                expected: dims.len(),
                actual: per_instance.len(),
            });
        }
        for (params, dim) in per_instance.iter().zip(dims) {
            params.validate()?;
            if params.dim != *dim {
                return Err(Error::Dimension {
                    expected: *dim,
                    actual: params.dim,
                });
            }
        }
        Ok(Self { per_instance })
    }

    pub fn len(&self) -> usize {
        self.per_instance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_instance.is_empty()
    }

    pub fn params(&self, index: usize) -> &LossParams {
        &self.per_instance[index]
    }
}

impl InstanceLoss for LearnedLossTable {
    fn loss(&self, index: usize, predictions: &[f64], labels: &[f64]) -> f64 {
        self.per_instance[index]
            .eval(predictions, labels)
            .expect("loss table validated at construction")
    }

    fn grad_predictions(&self, index: usize, predictions: &[f64], labels: &[f64]) -> Vec<f64> {
        self.per_instance[index]
            .grad_predictions(predictions, labels)
            .expect("loss table validated at construction")
    }
}
