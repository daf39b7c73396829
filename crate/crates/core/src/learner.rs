//! Feasible actor-critic learner and its expected-Lagrangian counterpart.
//!
//! Both variants share twin soft Q-functions, a single cost Q-function, a
//! squashed Gaussian actor and an automatically tuned temperature. They
//! differ only in the multiplier: a state-dependent network `λ_ξ(s)` for
//! FAC, a single scalar `softplus(ω)` for the baseline.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{FacError, Result};
use crate::nn::{adam_step, polyak_update, AdamState, GradientBundle, Mlp};
use crate::policy::{mean_action, PolicySample};
use crate::replay::{concat_rows, Batch, ReplayBuffer};

/// Linearly annealed learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
}

impl Schedule {
    pub const fn new(start: f64, end: f64) -> Self {
        Schedule { start, end }
    }

    pub fn at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        (1.0 - p) * self.start + p * self.end
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FacConfig {
    pub lr_actor: Schedule,
    pub lr_critic: Schedule,
    pub lr_multiplier: Schedule,
    pub lr_alpha: Schedule,
    pub gamma: f64,
    pub gamma_c: f64,
    pub tau: f64,
    pub m_pi: u64,
    pub m_lambda: u64,
    /// Cost-value threshold `d`.
    pub threshold: f64,
    pub target_entropy: f64,
    /// Warm-start fraction: multiplier training starts once batch-mean `Q_C >= kappa * d`.
    pub kappa: f64,
    pub reward_scale: f64,
    pub batch_size: usize,
    pub max_episode_len: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub initial_alpha: f64,
    /// Gradient steps over which learning rates anneal from start to end.
    pub anneal_steps: u64,
    /// With the constraint disabled the multiplier is identically zero and the gate never opens.
    pub constraint_enabled: bool,
    /// When false the policy ignores `λ·Q_C` until the warm-start gate opens.
    pub penalty_before_gate: bool,
}

impl Default for FacConfig {
    fn default() -> Self {
        FacConfig {
            lr_actor: Schedule::new(3e-5, 1e-6),
            lr_critic: Schedule::new(8e-5, 1e-6),
            lr_multiplier: Schedule::new(5e-5, 5e-6),
            lr_alpha: Schedule::new(5e-5, 1e-6),
            gamma: 0.99,
            gamma_c: 0.99,
            tau: 0.005,
            m_pi: 2,
            m_lambda: 6,
            threshold: 10.0,
            target_entropy: -1.0,
            kappa: 0.8,
            reward_scale: 1.0,
            batch_size: 256,
            max_episode_len: 1000,
            hidden_layers: 2,
            hidden_units: 256,
            initial_alpha: 1.0,
            anneal_steps: 1_000_000,
            constraint_enabled: true,
            penalty_before_gate: true,
        }
    }
}

impl FacConfig {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: String| {
            Err(FacError::Config {
                field: name.to_string(),
                message: msg,
            })
        };
        for (name, s) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_multiplier", self.lr_multiplier),
            ("lr_alpha", self.lr_alpha),
        ] {
            if !(s.start > 0.0 && s.end > 0.0) {
                return field(name, format!("learning rates must be positive, got {} -> {}", s.start, s.end));
            }
        }
        for (name, g) in [("gamma", self.gamma), ("gamma_c", self.gamma_c)] {
            if !(g >= 0.0 && g < 1.0) {
                return field(name, format!("{g} outside [0, 1)"));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return field("tau", format!("{} outside (0, 1]", self.tau));
        }
        if self.m_pi == 0 || self.m_lambda == 0 {
            return field("m_pi", "update intervals must be positive".into());
        }
        if self.m_lambda < self.m_pi {
            return field("m_lambda", format!("{} < m_pi {}", self.m_lambda, self.m_pi));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return field("kappa", format!("{} outside (0, 1]", self.kappa));
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be positive".into());
        }
        if self.hidden_units == 0 {
            return field("hidden_units", "must be positive".into());
        }
        if !(self.initial_alpha > 0.0) {
            return field("initial_alpha", "must be positive".into());
        }
        if self.anneal_steps == 0 {
            return field("anneal_steps", "must be positive".into());
        }
        Ok(())
    }

    pub fn layer_dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.hidden_units).take(self.hidden_layers));
        dims.push(output);
        dims
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Fac,
    ExpectedLagrangian,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fac => "fac",
            Algorithm::ExpectedLagrangian => "expected-lagrangian",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Multiplier {
    /// `λ_ξ(s) = softplus(net(s))`.
    Statewise { net: Mlp, opt: AdamState },
    /// `λ = softplus(ω)`.
    Scalar { omega: f64, opt: AdamState },
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

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerState {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub q1: Mlp,
    pub q2: Mlp,
    pub qc: Mlp,
    pub policy: Mlp,
    pub multiplier: Multiplier,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub qc_target: Mlp,
    pub policy_target: Mlp,
    pub log_alpha: f64,
    pub q1_opt: AdamState,
    pub q2_opt: AdamState,
    pub qc_opt: AdamState,
    pub policy_opt: AdamState,
    pub alpha_opt: AdamState,
    pub gradient_steps: u64,
    pub multiplier_active: bool,
}

/// Scalars produced by one gradient step, for the metrics sink.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub qc_loss: Option<f64>,
    pub mean_q: f64,
    pub mean_qc: Option<f64>,
    pub policy_loss: Option<f64>,
    pub alpha_loss: Option<f64>,
    pub multiplier_loss: Option<f64>,
    pub mean_lambda: Option<f64>,
    pub alpha: f64,
    pub policy_updated: bool,
    pub multiplier_updated: bool,
}

pub(crate) fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Twin-minimum entropy-regularized bootstrap target.
pub fn soft_q_target(
    rewards: &[f64],
    dones: &[bool],
    next_min_q: &[f64],
    next_log_probs: &[f64],
    alpha: f64,
    gamma: f64,
) -> Vec<f64> {
    (0..rewards.len())
        .map(|i| {
            if dones[i] {
                rewards[i]
            } else {
                rewards[i] + gamma * (next_min_q[i] - alpha * next_log_probs[i])
            }
        })
        .collect()
}

/// Cost bootstrap target; no entropy term. Costs are nonnegative, so a
/// negative next-state estimate bootstraps as zero.
pub fn cost_q_target(costs: &[f64], dones: &[bool], next_qc: &[f64], gamma_c: f64) -> Vec<f64> {
    (0..costs.len())
        .map(|i| if dones[i] { costs[i] } else { costs[i] + gamma_c * next_qc[i].max(0.0) })
        .collect()
}

/// `mean ½ (net(x) - y)^2` and its parameter gradient.
pub fn regression_loss(net: &Mlp, inputs: &[f64], batch: usize, targets: &[f64]) -> Result<(f64, GradientBundle)> {
    if targets.len() != batch || net.output_dim() != 1 {
        return Err(FacError::ShapeMismatch("regression targets".into()));
    }
    net.loss_gradients(inputs, batch, |out| {
        let n = batch as f64;
        let mut loss = 0.0;
        let grad = out
            .iter()
            .zip(targets)
            .map(|(q, y)| {
                let e = q - y;
                loss += 0.5 * e * e;
                e / n
            })
            .collect();
        (loss / n, grad)
    })
}

/// Cost Q-function loss with a target-network bootstrap at fresh policy
/// actions (`next_noise` drives the reparameterized next-action sample).
pub fn cost_q_loss(
    batch: &Batch,
    qc: &Mlp,
    qc_target: &Mlp,
    policy: &Mlp,
    gamma_c: f64,
    next_noise: Vec<f64>,
) -> Result<(f64, GradientBundle)> {
    let n = batch.len;
    let next = PolicySample::draw(policy, &batch.next_states, n, next_noise)?;
    let next_sa = concat_rows(&batch.next_states, batch.obs_dim, &next.actions, batch.action_dim);
    let next_qc = qc_target.forward_batch(&next_sa, n)?.output().to_vec();
    let y = cost_q_target(&batch.costs, &batch.dones, &next_qc, gamma_c);
    regression_loss(qc, &batch.state_actions(), n, &y)
}

/// Action-gradients of a scalar critic at the given state-action rows.
fn critic_action_grad(net: &Mlp, sa: &[f64], n: usize, obs_dim: usize, weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let tape = net.forward_batch(sa, n)?;
    let values = tape.output().to_vec();
    let (_, dinput) = net.backward(&tape, weights)?;
    let width = net.input_dim();
    let k = width - obs_dim;
    let mut da = Vec::with_capacity(n * k);
    for row in dinput.chunks_exact(width) {
        da.extend_from_slice(&row[obs_dim..]);
    }
    Ok((values, da))
}

#[derive(Clone, Debug)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: GradientBundle,
    pub log_probs: Vec<f64>,
}

/// `mean α logπ(a|s) − min(Q1,Q2)(s,a) + λ(s)(Q_C(s,a) − d)` with
/// `a = tanh(μ + σ·noise)`. `lambdas` are constants (no gradient into ξ).
#[allow(clippy::too_many_arguments)]
pub fn policy_loss(
    states: &[f64],
    n: usize,
    noise: Vec<f64>,
    q1: &Mlp,
    q2: &Mlp,
    qc: &Mlp,
    lambdas: &[f64],
    policy: &Mlp,
    alpha: f64,
    d: f64,
) -> Result<PolicyLoss> {
    if lambdas.len() != n {
        return Err(FacError::ShapeMismatch("one multiplier per batch row".into()));
    }
    let obs_dim = policy.input_dim();
    let sample = PolicySample::draw(policy, states, n, noise)?;
    let k = sample.action_dim;
    let sa = concat_rows(states, obs_dim, &sample.actions, k);
    let inv_n = 1.0 / n as f64;
    let q1_vals = q1.forward_batch(&sa, n)?.output().to_vec();
    let q2_vals = q2.forward_batch(&sa, n)?.output().to_vec();
    let use_first: Vec<bool> = q1_vals.iter().zip(&q2_vals).map(|(a, b)| a <= b).collect();
    let w1: Vec<f64> = use_first.iter().map(|&f| if f { -inv_n } else { 0.0 }).collect();
    let w2: Vec<f64> = use_first.iter().map(|&f| if f { 0.0 } else { -inv_n }).collect();
    let wc: Vec<f64> = lambdas.iter().map(|l| l * inv_n).collect();
    let (_, da1) = critic_action_grad(q1, &sa, n, obs_dim, &w1)?;
    let (_, da2) = critic_action_grad(q2, &sa, n, obs_dim, &w2)?;
    let (qc_vals, dac) = critic_action_grad(qc, &sa, n, obs_dim, &wc)?;

    let mut loss = 0.0;
    for b in 0..n {
        let q = if use_first[b] { q1_vals[b] } else { q2_vals[b] };
        loss += alpha * sample.log_probs[b] - q + lambdas[b] * (qc_vals[b] - d);
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(FacError::numeric("policy loss"));
    }
    let dl_da: Vec<f64> = (0..n * k).map(|i| da1[i] + da2[i] + dac[i]).collect();
    let dl_dlogp = vec![alpha * inv_n; n];
    let grads = sample.backprop(policy, &dl_da, &dl_dlogp)?;
    if !grads.is_finite() {
        return Err(FacError::numeric("policy gradient"));
    }
    Ok(PolicyLoss {
        loss,
        grads,
        log_probs: sample.log_probs,
    })
}

/// `J = mean λ_ξ(s)(Q_C − d)` and `∇_ξ J`, the ascent direction. `qc_values` are constants.
pub fn multiplier_loss(states: &[f64], n: usize, qc_values: &[f64], multiplier: &Mlp, d: f64) -> Result<(f64, GradientBundle)> {
    if qc_values.len() != n {
        return Err(FacError::ShapeMismatch("one cost value per batch row".into()));
    }
    multiplier.loss_gradients(states, n, |out| {
        let inv_n = 1.0 / n as f64;
        let mut j = 0.0;
        let grad = out
            .iter()
            .zip(qc_values)
            .map(|(&z, &qc)| {
                j += softplus(z) * (qc - d);
                (qc - d) * sigmoid(z) * inv_n
            })
            .collect();
        (j * inv_n, grad)
    })
}

/// Scalar counterpart: `J = softplus(ω)·mean(Q_C − d)`, returns `(J, dJ/dω)`.
pub fn scalar_multiplier_loss(omega: f64, qc_values: &[f64], d: f64) -> (f64, f64) {
    let slack = qc_values.iter().map(|q| q - d).sum::<f64>() / qc_values.len() as f64;
    (softplus(omega) * slack, sigmoid(omega) * slack)
}

/// `mean −α (logπ + H̄)` and its derivative in `log α` (log-probabilities detached).
pub fn alpha_loss(log_probs: &[f64], log_alpha: f64, target_entropy: f64) -> (f64, f64) {
    let alpha = log_alpha.exp();
    let m = log_probs.iter().map(|lp| lp + target_entropy).sum::<f64>() / log_probs.len() as f64;
    (-alpha * m, -alpha * m)
}

/// Latching gate: opens (for good) once batch-mean `Q_C` reaches `kappa·d`.
pub fn warm_start_gate(mean_qc: f64, d: f64, kappa: f64, latched: bool) -> bool {
    latched || mean_qc >= kappa * d
}

impl LearnerState {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        cfg: &FacConfig,
        algorithm: Algorithm,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let critic_dims = cfg.layer_dims(obs_dim + action_dim, 1);
        // q1, q2, policy first: the same draws seed the unconstrained learner
        let q1 = Mlp::init_uniform(&critic_dims, rng)?;
        let q2 = Mlp::init_uniform(&critic_dims, rng)?;
        let policy = Mlp::init_uniform(&cfg.layer_dims(obs_dim, 2 * action_dim), rng)?;
        let qc = Mlp::init_uniform(&critic_dims, rng)?;
        let multiplier = match algorithm {
            Algorithm::Fac => {
                let net = Mlp::init_uniform(&cfg.layer_dims(obs_dim, 1), rng)?;
                let opt = AdamState::for_net(&net);
                Multiplier::Statewise { net, opt }
            }
            Algorithm::ExpectedLagrangian => Multiplier::Scalar {
                omega: 0.0,
                opt: AdamState::new(1),
            },
        };
        Ok(LearnerState {
            obs_dim,
            action_dim,
            q1_opt: AdamState::for_net(&q1),
            q2_opt: AdamState::for_net(&q2),
            qc_opt: AdamState::for_net(&qc),
            policy_opt: AdamState::for_net(&policy),
            alpha_opt: AdamState::new(1),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            qc_target: qc.clone(),
            policy_target: policy.clone(),
            q1,
            q2,
            qc,
            policy,
            multiplier,
            log_alpha: cfg.initial_alpha.ln(),
            gradient_steps: 0,
            multiplier_active: false,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.multiplier {
            Multiplier::Statewise { .. } => Algorithm::Fac,
            Multiplier::Scalar { .. } => Algorithm::ExpectedLagrangian,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Multiplier at each of `n` row-major states.
    pub fn multiplier_values(&self, states: &[f64], n: usize) -> Result<Vec<f64>> {
        match &self.multiplier {
            Multiplier::Statewise { net, .. } => {
                Ok(net.forward_batch(states, n)?.output().iter().map(|&z| softplus(z)).collect())
            }
            Multiplier::Scalar { omega, .. } => Ok(vec![softplus(*omega); n]),
        }
    }

    pub fn multiplier_at(&self, state: &[f64]) -> Result<f64> {
        Ok(self.multiplier_values(state, 1)?[0])
    }

    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        mean_action(&self.policy, obs)
    }

    /// `Q_C(s, a)` with `a` the policy's mean action, for `n` row-major states.
    pub fn cost_values(&self, states: &[f64], n: usize) -> Result<Vec<f64>> {
        let out = self.policy.forward_batch(states, n)?;
        let k = self.action_dim;
        let actions: Vec<f64> = out
            .output()
            .chunks_exact(2 * k)
            .flat_map(|row| row[..k].iter().map(|m| m.tanh()))
            .collect();
        let sa = concat_rows(states, self.obs_dim, &actions, k);
        Ok(self.qc.forward_batch(&sa, n)?.output().to_vec())
    }

    /// One gradient step of the delayed primal-dual schedule. On error the
    /// learner is left untouched.
    pub fn train_step<R: Rng + ?Sized>(&mut self, buffer: &mut ReplayBuffer, cfg: &FacConfig, rng: &mut R) -> Result<StepReport> {
        let batch = buffer.sample_batch(cfg.batch_size)?;
        let mut next = self.clone();
        let report = next.step_on_batch(&batch, cfg, rng)?;
        *self = next;
        Ok(report)
    }

    /// Same as [`LearnerState::train_step`] for the scalar-multiplier variant; kept as a
    /// separate entry point so callers can assert which formulation they drive.
    pub fn baseline_train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &mut ReplayBuffer,
        cfg: &FacConfig,
        rng: &mut R,
    ) -> Result<StepReport> {
        if self.algorithm() != Algorithm::ExpectedLagrangian {
            return Err(FacError::InvalidArgument("baseline step on a statewise learner".into()));
        }
        self.train_step(buffer, cfg, rng)
    }

    pub fn step_on_batch<R: Rng + ?Sized>(&mut self, batch: &Batch, cfg: &FacConfig, rng: &mut R) -> Result<StepReport> {
        let n = batch.len;
        let k = self.action_dim;
        if batch.obs_dim != self.obs_dim || batch.action_dim != k {
            return Err(FacError::ShapeMismatch("batch does not match learner dimensions".into()));
        }
        self.gradient_steps += 1;
        let step = self.gradient_steps;
        let progress = step as f64 / cfg.anneal_steps as f64;
        let alpha = self.alpha();
        let mut report = StepReport::default();

        // critics
        let next = PolicySample::draw(&self.policy, &batch.next_states, n, standard_normals(rng, n * k))?;
        let next_sa = concat_rows(&batch.next_states, self.obs_dim, &next.actions, k);
        let q1n = self.q1_target.forward_batch(&next_sa, n)?;
        let q2n = self.q2_target.forward_batch(&next_sa, n)?;
        let min_next: Vec<f64> = q1n.output().iter().zip(q2n.output()).map(|(a, b)| a.min(*b)).collect();
        let rewards: Vec<f64> = batch.rewards.iter().map(|r| r * cfg.reward_scale).collect();
        let y = soft_q_target(&rewards, &batch.dones, &min_next, &next.log_probs, alpha, cfg.gamma);
        let qcn = self.qc_target.forward_batch(&next_sa, n)?;
        let yc = cost_q_target(&batch.costs, &batch.dones, qcn.output(), cfg.gamma_c);

        let sa = batch.state_actions();
        let lr_critic = cfg.lr_critic.at(progress);
        let (l1, g1) = regression_loss(&self.q1, &sa, n, &y)?;
        let (l2, g2) = regression_loss(&self.q2, &sa, n, &y)?;
        let (lc, gc) = regression_loss(&self.qc, &sa, n, &yc)?;
        report.mean_q = mean(&self.q1.forward_batch(&sa, n)?.output().to_vec());
        adam_step(&mut self.q1, &g1, &mut self.q1_opt, lr_critic)?;
        adam_step(&mut self.q2, &g2, &mut self.q2_opt, lr_critic)?;
        adam_step(&mut self.qc, &gc, &mut self.qc_opt, lr_critic)?;
        report.q1_loss = l1;
        report.q2_loss = l2;
        report.qc_loss = Some(lc);

        // actor and temperature
        if step % cfg.m_pi == 0 {
            let noise = standard_normals(rng, n * k);
            let penalized = self.multiplier_active || cfg.penalty_before_gate;
            let lambdas = if cfg.constraint_enabled && penalized {
                self.multiplier_values(&batch.states, n)?
            } else {
                vec![0.0; n]
            };
            let out = policy_loss(
                &batch.states,
                n,
                noise,
                &self.q1,
                &self.q2,
                &self.qc,
                &lambdas,
                &self.policy,
                alpha,
                cfg.threshold,
            )?;
            adam_step(&mut self.policy, &out.grads, &mut self.policy_opt, cfg.lr_actor.at(progress))?;
            let (la, dla) = alpha_loss(&out.log_probs, self.log_alpha, cfg.target_entropy);
            let mut la_param = [self.log_alpha];
            self.alpha_opt.step(&mut la_param, &[dla], cfg.lr_alpha.at(progress))?;
            self.log_alpha = la_param[0];
            report.policy_loss = Some(out.loss);
            report.alpha_loss = Some(la);
            report.policy_updated = true;
        }

        // multiplier ascent behind the warm-start latch
        if cfg.constraint_enabled && step % cfg.m_lambda == 0 {
            let sample = PolicySample::draw(&self.policy, &batch.states, n, standard_normals(rng, n * k))?;
            let sa_pi = concat_rows(&batch.states, self.obs_dim, &sample.actions, k);
            let qc_vals = self.qc.forward_batch(&sa_pi, n)?.output().to_vec();
            let mean_qc = mean(&qc_vals);
            report.mean_qc = Some(mean_qc);
            self.multiplier_active = warm_start_gate(mean_qc, cfg.threshold, cfg.kappa, self.multiplier_active);
            if self.multiplier_active {
                let lr = cfg.lr_multiplier.at(progress);
                match &mut self.multiplier {
                    Multiplier::Statewise { net, opt } => {
                        let (j, mut g) = multiplier_loss(&batch.states, n, &qc_vals, net, cfg.threshold)?;
                        g.scale(-1.0);
                        adam_step(net, &g, opt, lr)?;
                        report.multiplier_loss = Some(j);
                    }
                    Multiplier::Scalar { omega, opt } => {
                        let (j, dj) = scalar_multiplier_loss(*omega, &qc_vals, cfg.threshold);
                        let mut w = [*omega];
                        opt.step(&mut w, &[-dj], lr)?;
                        *omega = w[0];
                        report.multiplier_loss = Some(j);
                    }
                }
                report.multiplier_updated = true;
            }
            report.mean_lambda = Some(mean(&self.multiplier_values(&batch.states, n)?));
        }

        polyak_update(&mut self.q1_target, &self.q1, cfg.tau)?;
        polyak_update(&mut self.q2_target, &self.q2, cfg.tau)?;
        polyak_update(&mut self.qc_target, &self.qc, cfg.tau)?;
        polyak_update(&mut self.policy_target, &self.policy, cfg.tau)?;
        report.alpha = self.alpha();
        Ok(report)
    }
}
