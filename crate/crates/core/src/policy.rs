//! Tanh-squashed Gaussian policy head.
//!
//! The policy network emits `[mean; log_std]` per action dimension. Actions
//! are `tanh(mean + std * noise)`, so they always lie in the open box
//! `(-1, 1)^k`. Environments map that box onto their physical ranges.

use std::f64::consts::PI;

use crate::error::{FacError, Result};
use crate::nn::{GradientBundle, Mlp, Tape};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Guards `log(1 - tanh^2)` when the pre-squash sample saturates.
pub const TANH_EPS: f64 = 1e-6;

fn half_log_two_pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SquashedGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl SquashedGaussian {
    /// Splits a raw network output into mean and clamped log-std.
    pub fn from_output(output: &[f64]) -> Self {
        let k = output.len() / 2;
        SquashedGaussian {
            mean: output[..k].to_vec(),
            log_std: output[k..].iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Reparameterized sample and its log-density (with the tanh correction).
    pub fn sample(&self, noise: &[f64]) -> Result<(Vec<f64>, f64)> {
        if noise.len() != self.dim() {
            return Err(FacError::DimensionMismatch {
                expected: self.dim(),
                got: noise.len(),
            });
        }
        let mut action = Vec::with_capacity(self.dim());
        let mut log_prob = 0.0;
        for i in 0..self.dim() {
            let u = self.mean[i] + self.log_std[i].exp() * noise[i];
            let a = u.tanh();
            log_prob += -0.5 * noise[i] * noise[i] - self.log_std[i] - half_log_two_pi();
            log_prob -= (1.0 - a * a + TANH_EPS).ln();
            action.push(a);
        }
        Ok((action, log_prob))
    }

    /// Deterministic action used for evaluation.
    pub fn mode(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }
}

pub fn sample_action(policy: &Mlp, state: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64)> {
    SquashedGaussian::from_output(&policy.forward(state)?).sample(noise)
}

pub fn mean_action(policy: &Mlp, state: &[f64]) -> Result<Vec<f64>> {
    Ok(SquashedGaussian::from_output(&policy.forward(state)?).mode())
}

/// A batch of reparameterized samples with everything needed to push
/// gradients back into the policy parameters.
#[derive(Clone, Debug)]
pub struct PolicySample {
    tape: Tape,
    pub batch: usize,
    pub action_dim: usize,
    pub noise: Vec<f64>,
    /// `batch x action_dim`, each entry in (-1, 1).
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl PolicySample {
    pub fn draw(policy: &Mlp, states: &[f64], batch: usize, noise: Vec<f64>) -> Result<Self> {
        let k = policy.output_dim() / 2;
        if noise.len() != batch * k {
            return Err(FacError::DimensionMismatch {
                expected: batch * k,
                got: noise.len(),
            });
        }
        let tape = policy.forward_batch(states, batch)?;
        let out = tape.output();
        let mut actions = Vec::with_capacity(batch * k);
        let mut log_probs = Vec::with_capacity(batch);
        for b in 0..batch {
            let row = &out[b * 2 * k..(b + 1) * 2 * k];
            let dist = SquashedGaussian::from_output(row);
            let (a, lp) = dist.sample(&noise[b * k..(b + 1) * k])?;
            actions.extend_from_slice(&a);
            log_probs.push(lp);
        }
        Ok(PolicySample {
            tape,
            batch,
            action_dim: k,
            noise,
            actions,
            log_probs,
        })
    }

    /// Chain rule from per-sample `dL/d action` and `dL/d log_prob` to the
    /// policy parameters, holding the noise fixed.
    pub fn backprop(&self, policy: &Mlp, dl_daction: &[f64], dl_dlogp: &[f64]) -> Result<GradientBundle> {
        let k = self.action_dim;
        if dl_daction.len() != self.batch * k || dl_dlogp.len() != self.batch {
            return Err(FacError::ShapeMismatch("policy backprop upstream gradients".into()));
        }
        let out = self.tape.output();
        let mut grad_out = vec![0.0; self.batch * 2 * k];
        for b in 0..self.batch {
            let row = &out[b * 2 * k..(b + 1) * 2 * k];
            let glp = dl_dlogp[b];
            for i in 0..k {
                let raw_ls = row[k + i];
                let ls = raw_ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let eps = self.noise[b * k + i];
                let a = self.actions[b * k + i];
                let one_minus = 1.0 - a * a;
                // d logp / du through -log(1 - tanh(u)^2 + eps)
                let dlogp_du = 2.0 * a * one_minus / (one_minus + TANH_EPS);
                let dl_du = dl_daction[b * k + i] * one_minus + glp * dlogp_du;
                grad_out[b * 2 * k + i] = dl_du;
                let inside = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw_ls);
                grad_out[b * 2 * k + k + i] = if inside {
                    dl_du * ls.exp() * eps - glp
                } else {
                    0.0
                };
            }
        }
        let (grads, _) = policy.backward(&self.tape, &grad_out)?;
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_mean() {
        let d = SquashedGaussian {
            mean: vec![0.0],
            log_std: vec![0.0],
        };
        let (a, lp) = d.sample(&[0.0]).unwrap();
        assert_eq!(a, vec![0.0]);
        assert!((lp - (-0.918_938_533_204_672_7)).abs() < 1e-5);
    }

    #[test]
    fn tail_sample_density() {
        let d = SquashedGaussian {
            mean: vec![0.0],
            log_std: vec![0.0],
        };
        let (a, lp) = d.sample(&[2.0]).unwrap();
        assert!((a[0] - 0.964_027_580_075_817).abs() < 1e-12);
        let t = 2.0f64.tanh();
        let expected = -0.5 * (2.0 * PI).ln() - 2.0 - (1.0 - t * t).ln();
        // the 1e-6 guard shifts the correction by ~1.4e-4 at u = 2
        assert!((lp - expected).abs() < 2e-4, "{lp} vs {expected}");
    }

    #[test]
    fn log_std_is_clamped() {
        let d = SquashedGaussian::from_output(&[0.0, 0.0, 50.0, -50.0]);
        assert_eq!(d.log_std, vec![LOG_STD_MAX, LOG_STD_MIN]);
    }

    #[test]
    fn noise_dimension_checked() {
        let d = SquashedGaussian::from_output(&[0.0, 0.0]);
        assert!(d.sample(&[0.0, 1.0]).is_err());
    }
}
