//! Unconstrained entropy-regularized actor-critic.
//!
//! Reference learner for the reduction property: FAC with its constraint
//! machinery switched off must track this learner exactly. It consumes
//! random numbers in the same order as [`crate::learner::LearnerState`].

use rand::Rng;

use crate::error::{FacError, Result};
use crate::learner::{alpha_loss, regression_loss, soft_q_target, standard_normals, FacConfig, StepReport};
use crate::nn::{adam_step, polyak_update, AdamState, GradientBundle, Mlp};
use crate::policy::{mean_action, PolicySample};
use crate::replay::{concat_rows, Batch, ReplayBuffer};

#[derive(Clone, Debug, PartialEq)]
pub struct SacLearner {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub q1: Mlp,
    pub q2: Mlp,
    pub policy: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub policy_target: Mlp,
    pub log_alpha: f64,
    pub q1_opt: AdamState,
    pub q2_opt: AdamState,
    pub policy_opt: AdamState,
    pub alpha_opt: AdamState,
    pub gradient_steps: u64,
}

/// `mean α logπ − min(Q1, Q2)` at reparameterized actions.
fn actor_loss(
    states: &[f64],
    n: usize,
    noise: Vec<f64>,
    q1: &Mlp,
    q2: &Mlp,
    policy: &Mlp,
    alpha: f64,
) -> Result<(f64, GradientBundle, Vec<f64>)> {
    let obs_dim = policy.input_dim();
    let sample = PolicySample::draw(policy, states, n, noise)?;
    let k = sample.action_dim;
    let sa = concat_rows(states, obs_dim, &sample.actions, k);
    let inv_n = 1.0 / n as f64;
    let t1 = q1.forward_batch(&sa, n)?;
    let t2 = q2.forward_batch(&sa, n)?;
    let first: Vec<bool> = t1.output().iter().zip(t2.output()).map(|(a, b)| a <= b).collect();
    let w1: Vec<f64> = first.iter().map(|&f| if f { -inv_n } else { 0.0 }).collect();
    let w2: Vec<f64> = first.iter().map(|&f| if f { 0.0 } else { -inv_n }).collect();
    let (_, d1) = q1.backward(&t1, &w1)?;
    let (_, d2) = q2.backward(&t2, &w2)?;
    let width = obs_dim + k;
    let mut loss = 0.0;
    let mut dl_da = Vec::with_capacity(n * k);
    for b in 0..n {
        let q = if first[b] { t1.output()[b] } else { t2.output()[b] };
        loss += alpha * sample.log_probs[b] - q;
        for i in 0..k {
            dl_da.push(d1[b * width + obs_dim + i] + d2[b * width + obs_dim + i]);
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(FacError::numeric("actor loss"));
    }
    let grads = sample.backprop(policy, &dl_da, &vec![alpha * inv_n; n])?;
    Ok((loss, grads, sample.log_probs))
}

impl SacLearner {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, cfg: &FacConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let critic_dims = cfg.layer_dims(obs_dim + action_dim, 1);
        let q1 = Mlp::init_uniform(&critic_dims, rng)?;
        let q2 = Mlp::init_uniform(&critic_dims, rng)?;
        let policy = Mlp::init_uniform(&cfg.layer_dims(obs_dim, 2 * action_dim), rng)?;
        Ok(SacLearner {
            obs_dim,
            action_dim,
            q1_opt: AdamState::for_net(&q1),
            q2_opt: AdamState::for_net(&q2),
            policy_opt: AdamState::for_net(&policy),
            alpha_opt: AdamState::new(1),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            policy_target: policy.clone(),
            q1,
            q2,
            policy,
            log_alpha: cfg.initial_alpha.ln(),
            gradient_steps: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        mean_action(&self.policy, obs)
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &mut ReplayBuffer, cfg: &FacConfig, rng: &mut R) -> Result<StepReport> {
        let batch = buffer.sample_batch(cfg.batch_size)?;
        let mut next = self.clone();
        let report = next.step_on_batch(&batch, cfg, rng)?;
        *self = next;
        Ok(report)
    }

    pub fn step_on_batch<R: Rng + ?Sized>(&mut self, batch: &Batch, cfg: &FacConfig, rng: &mut R) -> Result<StepReport> {
        let n = batch.len;
        let k = self.action_dim;
        self.gradient_steps += 1;
        let step = self.gradient_steps;
        let progress = step as f64 / cfg.anneal_steps as f64;
        let alpha = self.alpha();
        let mut report = StepReport::default();

        let next = PolicySample::draw(&self.policy, &batch.next_states, n, standard_normals(rng, n * k))?;
        let next_sa = concat_rows(&batch.next_states, self.obs_dim, &next.actions, k);
        let q1n = self.q1_target.forward_batch(&next_sa, n)?;
        let q2n = self.q2_target.forward_batch(&next_sa, n)?;
        let min_next: Vec<f64> = q1n.output().iter().zip(q2n.output()).map(|(a, b)| a.min(*b)).collect();
        let rewards: Vec<f64> = batch.rewards.iter().map(|r| r * cfg.reward_scale).collect();
        let y = soft_q_target(&rewards, &batch.dones, &min_next, &next.log_probs, alpha, cfg.gamma);

        let sa = batch.state_actions();
        let lr_critic = cfg.lr_critic.at(progress);
        let (l1, g1) = regression_loss(&self.q1, &sa, n, &y)?;
        let (l2, g2) = regression_loss(&self.q2, &sa, n, &y)?;
        let q_now = self.q1.forward_batch(&sa, n)?;
        report.mean_q = q_now.output().iter().sum::<f64>() / n as f64;
        adam_step(&mut self.q1, &g1, &mut self.q1_opt, lr_critic)?;
        adam_step(&mut self.q2, &g2, &mut self.q2_opt, lr_critic)?;
        report.q1_loss = l1;
        report.q2_loss = l2;

        if step % cfg.m_pi == 0 {
            let noise = standard_normals(rng, n * k);
            let (loss, grads, log_probs) = actor_loss(&batch.states, n, noise, &self.q1, &self.q2, &self.policy, alpha)?;
            adam_step(&mut self.policy, &grads, &mut self.policy_opt, cfg.lr_actor.at(progress))?;
            let (la, dla) = alpha_loss(&log_probs, self.log_alpha, cfg.target_entropy);
            let mut p = [self.log_alpha];
            self.alpha_opt.step(&mut p, &[dla], cfg.lr_alpha.at(progress))?;
            self.log_alpha = p[0];
            report.policy_loss = Some(loss);
            report.alpha_loss = Some(la);
            report.policy_updated = true;
        }

        polyak_update(&mut self.q1_target, &self.q1, cfg.tau)?;
        polyak_update(&mut self.q2_target, &self.q2, cfg.tau)?;
        polyak_update(&mut self.policy_target, &self.policy, cfg.tau)?;
        report.alpha = self.alpha();
        Ok(report)
    }
}
