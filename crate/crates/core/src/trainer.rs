//! Rollout/update loop, evaluation episodes and run artifacts.
//!
//! All randomness derives from the run seed through ChaCha8 substreams:
//! environment resets, exploration noise, replay sampling, learner noise,
//! evaluation and parameter initialization each get their own stream.

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::{write_atomic, Checkpoint, RngState};
use crate::config::{RunConfig, Task};
use crate::envs::{BrakingEnv, EnvStep, Environment, GridEnvironment, NavEnv, TabularEnv};
use crate::error::{FacError, Result};
use crate::learner::{LearnerState, StepReport};
use crate::metrics::{Mean, MetricsRow, MetricsSink, ReportAccumulator};
use crate::nn::Mlp;
use crate::oracle::{hazard_chain_cmdp, TabularCmdp};
use crate::plot;
use crate::policy::{mean_action, sample_action};
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::SacLearner;

pub mod streams {
    pub const ENV: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const BUFFER: u64 = 3;
    pub const LEARNER: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const INIT: u64 = 6;
    /// Replay batches drawn for diagnostics, kept apart so probing never shifts evaluation.
    pub const PROBE: u64 = 7;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug)]
pub enum TaskEnv {
    Braking(BrakingEnv),
    Navigation(NavEnv),
    Tabular(TabularEnv),
}

impl TaskEnv {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.task {
            Task::Braking => TaskEnv::Braking(BrakingEnv::default()),
            Task::Navigation => TaskEnv::Navigation(NavEnv::default()),
            Task::Tabular => TaskEnv::Tabular(TabularEnv::new(load_cmdp(cfg)?)),
        })
    }

    pub fn as_grid(&mut self) -> Option<&mut dyn GridEnvironment> {
        match self {
            TaskEnv::Braking(e) => Some(e),
            TaskEnv::Tabular(e) => Some(e),
            TaskEnv::Navigation(_) => None,
        }
    }

    fn inner(&mut self) -> &mut dyn Environment {
        match self {
            TaskEnv::Braking(e) => e,
            TaskEnv::Navigation(e) => e,
            TaskEnv::Tabular(e) => e,
        }
    }

    fn inner_ref(&self) -> &dyn Environment {
        match self {
            TaskEnv::Braking(e) => e,
            TaskEnv::Navigation(e) => e,
            TaskEnv::Tabular(e) => e,
        }
    }
}

impl Environment for TaskEnv {
    fn obs_dim(&self) -> usize {
        self.inner_ref().obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner_ref().action_dim()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner().reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        self.inner().step(action)
    }
}

/// The run's CMDP: the configured file, or the built-in hazard chain. Its
/// discounting and threshold must agree with the learner configuration.
pub fn load_cmdp(cfg: &RunConfig) -> Result<TabularCmdp> {
    let cmdp = match &cfg.cmdp_path {
        Some(p) => TabularCmdp::parse(&std::fs::read_to_string(p)?)?,
        None => hazard_chain_cmdp(),
    };
    for (field, ours, theirs) in [
        ("Cost discount factor (gamma_c)", cfg.fac.gamma_c, cmdp.gamma_c),
        ("constraint_threshold", cfg.fac.threshold, cmdp.threshold),
    ] {
        if ours != theirs {
            return Err(FacError::Config {
                field: field.into(),
                message: format!("{ours} disagrees with the CMDP's {theirs}"),
            });
        }
    }
    Ok(cmdp)
}

/// The learner driven by the loop: the constrained one, or the plain
/// entropy-regularized learner used as a reference.
#[derive(Clone, Debug, PartialEq)]
pub enum Agent {
    Constrained(LearnerState),
    Plain(SacLearner),
}

impl Agent {
    pub fn policy(&self) -> &Mlp {
        match self {
            Agent::Constrained(l) => &l.policy,
            Agent::Plain(l) => &l.policy,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            Agent::Constrained(l) => l.alpha(),
            Agent::Plain(l) => l.alpha(),
        }
    }

    pub fn gradient_steps(&self) -> u64 {
        match self {
            Agent::Constrained(l) => l.gradient_steps,
            Agent::Plain(l) => l.gradient_steps,
        }
    }

    pub fn constrained(&self) -> Option<&LearnerState> {
        match self {
            Agent::Constrained(l) => Some(l),
            Agent::Plain(_) => None,
        }
    }

    fn train_step(&mut self, buffer: &mut ReplayBuffer, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<StepReport> {
        match self {
            Agent::Constrained(l) => l.train_step(buffer, &cfg.fac, rng),
            Agent::Plain(l) => l.train_step(buffer, &cfg.fac, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStats {
    pub episode_return: f64,
    pub cost: f64,
    pub steps: usize,
    /// Cost per step: the fraction of dangerous actions for 0/1 costs.
    pub c_rate: f64,
    pub dangerous: bool,
}

/// One episode with the policy's mean action.
pub fn run_episode<E: Environment + ?Sized>(
    policy: &Mlp,
    env: &mut E,
    seed: u64,
    max_len: usize,
    dangerous_rate: f64,
) -> Result<EpisodeStats> {
    let mut obs = env.reset(seed);
    let (mut ret, mut cost, mut steps) = (0.0, 0.0, 0);
    while steps < max_len {
        let step = env.step(&mean_action(policy, &obs)?);
        ret += step.reward;
        cost += step.cost;
        steps += 1;
        if step.done {
            break;
        }
        obs = step.obs;
    }
    let c_rate = cost / steps.max(1) as f64;
    Ok(EpisodeStats {
        episode_return: ret,
        cost,
        steps,
        c_rate,
        dangerous: c_rate > dangerous_rate,
    })
}

/// `episodes` deterministic episodes with reset seeds drawn from `rng`.
pub fn evaluate<E: Environment + ?Sized, R: RngCore + ?Sized>(
    policy: &Mlp,
    env: &mut E,
    episodes: usize,
    max_len: usize,
    dangerous_rate: f64,
    rng: &mut R,
) -> Result<Vec<EpisodeStats>> {
    (0..episodes)
        .map(|_| run_episode(policy, env, rng.next_u64(), max_len, dangerous_rate))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub mean_c_rate: f64,
    pub dangerous: usize,
}

pub fn summarize(stats: &[EpisodeStats]) -> EvalSummary {
    let n = stats.len().max(1) as f64;
    EvalSummary {
        mean_return: stats.iter().map(|s| s.episode_return).sum::<f64>() / n,
        mean_c_rate: stats.iter().map(|s| s.c_rate).sum::<f64>() / n,
        dangerous: stats.iter().filter(|s| s.dangerous).count(),
    }
}

/// Episode rows as CSV: `episode,return,cost,steps,c_rate,dangerous`.
pub fn episodes_csv(stats: &[EpisodeStats]) -> String {
    let mut out = String::from("episode,return,cost,steps,c_rate,dangerous\n");
    for (i, s) in stats.iter().enumerate() {
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            s.episode_return, s.cost, s.steps, s.c_rate, s.dangerous
        ));
    }
    out
}

pub struct Trainer {
    pub config: RunConfig,
    pub env: TaskEnv,
    pub eval_env: TaskEnv,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub env_steps: u64,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    learner_rng: ChaCha8Rng,
    eval_rng: ChaCha8Rng,
    probe_rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode_return: f64,
    episode_len: usize,
    train_returns: Mean,
    reports: ReportAccumulator,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        Self::build(config, false)
    }

    /// Same loop driving the plain entropy-regularized learner.
    pub fn new_plain(config: RunConfig) -> Result<Self> {
        Self::build(config, true)
    }

    fn build(config: RunConfig, plain: bool) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let env = TaskEnv::build(&config)?;
        let eval_env = env.clone();
        let (obs_dim, action_dim) = (env.obs_dim(), env.action_dim());
        let mut init = substream(seed, streams::INIT);
        let agent = if plain {
            Agent::Plain(SacLearner::new(obs_dim, action_dim, &config.fac, &mut init)?)
        } else {
            Agent::Constrained(LearnerState::new(obs_dim, action_dim, &config.fac, config.algorithm, &mut init)?)
        };
        let buffer = ReplayBuffer::new(config.replay_capacity, substream(seed, streams::BUFFER).next_u64())?;
        let mut env_rng = substream(seed, streams::ENV);
        let mut trainer = Trainer {
            env,
            eval_env,
            agent,
            buffer,
            env_steps: 0,
            obs: Vec::new(),
            episode_return: 0.0,
            episode_len: 0,
            explore_rng: substream(seed, streams::EXPLORATION),
            learner_rng: substream(seed, streams::LEARNER),
            eval_rng: substream(seed, streams::EVAL),
            probe_rng: substream(seed, streams::PROBE),
            train_returns: Mean::default(),
            reports: ReportAccumulator::default(),
            env_rng: substream(seed, streams::ENV),
            config,
        };
        trainer.obs = trainer.env.reset(env_rng.next_u64());
        trainer.env_rng = env_rng;
        Ok(trainer)
    }

    /// One environment step, followed by gradient steps when due. On error
    /// the agent is unchanged.
    pub fn step(&mut self) -> Result<()> {
        let cfg = &self.config;
        let k = self.env.action_dim();
        let action: Vec<f64> = if self.env_steps < cfg.warmup_steps {
            (0..k).map(|_| self.explore_rng.gen_range(-1.0..=1.0)).collect()
        } else {
            let noise: Vec<f64> = (0..k).map(|_| self.explore_rng.sample(StandardNormal)).collect();
            sample_action(self.agent.policy(), &self.obs, &noise)?.0
        };
        let out = self.env.step(&action);
        self.episode_return += out.reward;
        self.episode_len += 1;
        self.buffer.push(Transition {
            state: std::mem::take(&mut self.obs),
            action,
            reward: out.reward,
            cost: out.cost,
            next_state: out.obs.clone(),
            done: out.done,
        })?;
        self.env_steps += 1;
        if out.done || self.episode_len >= cfg.fac.max_episode_len {
            self.train_returns.push(self.episode_return);
            self.episode_return = 0.0;
            self.episode_len = 0;
            self.obs = self.env.reset(self.env_rng.next_u64());
        } else {
            self.obs = out.obs;
        }

        if self.env_steps >= cfg.warmup_steps && self.env_steps % cfg.update_every == 0 {
            for _ in 0..cfg.gradient_steps_per_update {
                let report = self.agent.train_step(&mut self.buffer, &self.config, &mut self.learner_rng)?;
                self.reports.push(&report);
            }
        }
        Ok(())
    }

    /// Cost values of a replay batch drawn from the probe stream, at the policy's mean actions.
    pub fn batch_cost_values(&mut self, n: usize) -> Result<Option<Vec<f64>>> {
        let Agent::Constrained(learner) = &self.agent else {
            return Ok(None);
        };
        let batch = self.buffer.sample_batch_with(&mut self.probe_rng, n)?;
        Ok(Some(learner.cost_values(&batch.states, n)?))
    }

    /// Multiplier values of a replay batch drawn from the probe stream.
    pub fn batch_multiplier_values(&mut self, n: usize) -> Result<Option<Vec<f64>>> {
        let Agent::Constrained(learner) = &self.agent else {
            return Ok(None);
        };
        let batch = self.buffer.sample_batch_with(&mut self.probe_rng, n)?;
        Ok(Some(learner.multiplier_values(&batch.states, n)?))
    }

    pub fn evaluate(&mut self, episodes: usize) -> Result<Vec<EpisodeStats>> {
        evaluate(
            self.agent.policy(),
            &mut self.eval_env,
            episodes,
            self.config.fac.max_episode_len,
            self.config.dangerous_rate,
            &mut self.eval_rng,
        )
    }

    /// Evaluation row for the metrics file; drains the interval accumulators.
    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let summary = summarize(&self.evaluate(self.config.eval_episodes)?);
        let d = self.config.fac.threshold;
        let frac = self
            .batch_cost_values(self.config.fac.batch_size)?
            .map(|vc| vc.iter().filter(|&&v| v <= d).count() as f64 / vc.len() as f64);
        let mut row = MetricsRow {
            env_step: self.env_steps,
            gradient_steps: self.agent.gradient_steps(),
            episode_return: summary.mean_return,
            c_rate: summary.mean_c_rate,
            dangerous_episodes: summary.dangerous,
            train_return: self.train_returns.take(),
            alpha: self.agent.alpha(),
            frac_vc_le_d: frac,
            multiplier_active: self.agent.constrained().is_some_and(|l| l.multiplier_active),
            ..Default::default()
        };
        self.reports.drain_into(&mut row);
        Ok(row)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let Agent::Constrained(learner) = &self.agent else {
            return Err(FacError::InvalidArgument("only constrained learners are checkpointed".into()));
        };
        Ok(Checkpoint {
            config: self.config.clone(),
            learner: learner.clone(),
            env_steps: self.env_steps,
            rngs: vec![
                ("env".into(), RngState::capture(&self.env_rng)),
                ("exploration".into(), RngState::capture(&self.explore_rng)),
                ("learner".into(), RngState::capture(&self.learner_rng)),
                ("eval".into(), RngState::capture(&self.eval_rng)),
                ("probe".into(), RngState::capture(&self.probe_rng)),
            ],
        })
    }

    /// Runs to `total_env_steps`, returning the metrics rows. With an output
    /// directory, rows are appended to `metrics.csv` as they are produced and
    /// the final checkpoint and plots are written at the end.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<Vec<MetricsRow>> {
        let mut sink = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                write_atomic(&dir.join("config.txt"), self.config.to_text().as_bytes())?;
                Some(MetricsSink::open(&dir.join("metrics.csv"))?)
            }
            None => None,
        };
        let mut rows = Vec::new();
        while self.env_steps < self.config.total_env_steps {
            if let Err(err) = self.step() {
                if let (Some(dir), FacError::NumericFailure(_)) = (out_dir, &err) {
                    self.write_failure(dir, &err)?;
                }
                return Err(err);
            }
            if self.env_steps % self.config.eval_interval == 0 || self.env_steps == self.config.total_env_steps {
                let row = self.metrics_row()?;
                if let Some(sink) = sink.as_mut() {
                    sink.append(&row)?;
                }
                rows.push(row);
            }
        }
        if let Some(dir) = out_dir {
            self.write_artifacts(dir, &rows)?;
        }
        Ok(rows)
    }

    fn write_failure(&self, dir: &Path, err: &FacError) -> Result<()> {
        if self.agent.constrained().is_some() {
            self.checkpoint()?.save(&dir.join("last_good.ckpt"))?;
        }
        let report = format!(
            "numeric failure at env step {} (gradient step {}): {err}\nlast good state: last_good.ckpt\n",
            self.env_steps,
            self.agent.gradient_steps()
        );
        write_atomic(&dir.join("failure.txt"), report.as_bytes())
    }

    fn write_artifacts(&mut self, dir: &Path, rows: &[MetricsRow]) -> Result<()> {
        if self.agent.constrained().is_some() {
            self.checkpoint()?.save(&dir.join("final.ckpt"))?;
        }
        let xs: Vec<f64> = rows.iter().map(|r| r.env_step as f64).collect();
        let returns: Vec<f64> = rows.iter().map(|r| r.episode_return).collect();
        let rates: Vec<f64> = rows.iter().map(|r| r.c_rate).collect();
        plot::line_plot(&dir.join("return.png"), &[(xs.clone(), returns)], 480, 320)?;
        plot::line_plot(&dir.join("c_rate.png"), &[(xs, rates)], 480, 320)?;
        if !self.buffer.is_empty() {
            if let Some(vc) = self.batch_cost_values(self.config.fac.batch_size)? {
                plot::histogram(&dir.join("vc_hist.png"), &vc, 40, self.config.fac.threshold, 480, 320)?;
            }
        }
        Ok(())
    }
}

/// Output directory for a run: the configured one unless overridden.
pub fn output_dir(cfg: &RunConfig, overridden: Option<&Path>) -> PathBuf {
    overridden.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone())
}
