//! First-order optimizers and learning-rate schedules. Adam is the default
//! for fitting loss parameters; plain SGD drives the sampler's intermediate
//! models, where trajectory diversity matters more than convergence speed.

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Stateful parameter updater. Adam keeps first/second moment buffers sized
/// to the parameter vector; SGD keeps nothing.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => param_count,
        };
        Self {
            kind,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            t: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// One descent step on `params` along `grad` at learning rate `lr`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        debug_assert_eq!(params.len(), grad.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
                }
            }
        }
    }
}

/// Learning-rate schedule over optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LrSchedule {
    #[default]
    Constant,
    Cyclic {
        max_lr: f64,
        cycle_len: usize,
    },
}

impl LrSchedule {
    pub fn lr_at(&self, step: usize, base_lr: f64) -> Result<f64> {
        match self {
            LrSchedule::Constant => Ok(base_lr),
            LrSchedule::Cyclic { max_lr, cycle_len } => {
                cyclic_lr(step, base_lr, *max_lr, *cycle_len)
            }
        }
    }
}

/// Triangular wave: `base_lr` at each cycle boundary, `max_lr` at the
/// midpoint, linear in between.
pub fn cyclic_lr(step: usize, base_lr: f64, max_lr: f64, cycle_len: usize) -> Result<f64> {
    if cycle_len < 2 {
        return Err(Error::Input(format!(
            "cyclic schedule needs cycle_len >= 2, got {cycle_len}"
        )));
    }
    if max_lr < base_lr {
        return Err(Error::Input(format!(
            "cyclic schedule needs max_lr >= base_lr, got {max_lr} < {base_lr}"
        )));
    }
    let phase = (step % cycle_len) as f64;
    let half = cycle_len as f64 / 2.0;
    let frac = if phase <= half { phase / half } else { (cycle_len as f64 - phase) / half };
    Ok(base_lr + (max_lr - base_lr) * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_wave_anchors() {
        assert_eq!(cyclic_lr(0, 0.1, 0.5, 10).unwrap(), 0.1);
        assert_eq!(cyclic_lr(5, 0.1, 0.5, 10).unwrap(), 0.5);
        assert_eq!(cyclic_lr(10, 0.1, 0.5, 10).unwrap(), 0.1);
        // linear in between
        let quarter = cyclic_lr(2, 0.0, 1.0, 8).unwrap();
        assert!((quarter - 0.5).abs() < 1e-12);
        let three_quarter = cyclic_lr(6, 0.0, 1.0, 8).unwrap();
        assert!((three_quarter - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cyclic_wave_rejects_bad_settings() {
        assert!(cyclic_lr(0, 0.1, 0.05, 10).is_err());
        assert!(cyclic_lr(0, 0.1, 0.5, 1).is_err());
    }

    #[test]
    fn sgd_step_is_plain_descent() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 2);
        let mut params = vec![1.0, -2.0];
        opt.step(&mut params, &[0.5, -1.0], 0.1);
        assert_eq!(params, vec![0.95, -1.9]);
    }

    #[test]
    fn adam_first_step_moves_by_lr_signs() {
        // With fresh moments, the bias-corrected first Adam step is
        // lr · g/(|g| + ε) ≈ lr · sign(g).
        let mut opt = Optimizer::new(OptimizerKind::Adam, 3);
        let mut params = vec![0.0, 0.0, 0.0];
        opt.step(&mut params, &[0.3, -4.0, 0.0], 0.01);
        assert!((params[0] + 0.01).abs() < 1e-6);
        assert!((params[1] - 0.01).abs() < 1e-6);
        assert_eq!(params[2], 0.0);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 2);
            let mut params = vec![1.5, -0.5];
            for _ in 0..10 {
                opt.step(&mut params, &[3.0, -1.0], 0.0);
            }
            assert_eq!(params, vec![1.5, -0.5]);
        }
    }
}
