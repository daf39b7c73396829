//! Run configuration in a flat, typed key-value text format.
//!
//! One entry per line: `<key> : <type> = <value>`. Types are `str`, `u64`,
//! `f64`, `bool`, `path` and `schedule` (`start -> end`). `#` starts a
//! comment. Hyperparameter keys use their full descriptive names, e.g.
//! `Actor learning rate : schedule = 3e-5 -> 1e-6`. Keys that are absent
//! take the task default.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{FacError, Result};
use crate::feasibility::{DEFAULT_THR_INF, DEFAULT_THR_ZERO};
use crate::learner::{Algorithm, FacConfig, Schedule};
use crate::oracle::{rate_to_value_threshold, Horizon};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Braking,
    Navigation,
    Tabular,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Braking => "braking",
            Task::Navigation => "navigation",
            Task::Tabular => "tabular",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "braking" => Some(Task::Braking),
            "navigation" => Some(Task::Navigation),
            "tabular" => Some(Task::Tabular),
            _ => None,
        }
    }
}

fn parse_algorithm(s: &str) -> Option<Algorithm> {
    match s {
        "fac" => Some(Algorithm::Fac),
        "expected-lagrangian" => Some(Algorithm::ExpectedLagrangian),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub fac: FacConfig,
    pub total_env_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub output_dir: PathBuf,
    /// Uniform-random actions for this many initial environment steps.
    pub warmup_steps: u64,
    /// Environment steps between rounds of gradient steps.
    pub update_every: u64,
    pub gradient_steps_per_update: u64,
    pub replay_capacity: usize,
    /// Episodes whose cost rate exceeds this are counted as dangerous.
    pub dangerous_rate: f64,
    pub cmdp_path: Option<PathBuf>,
    pub thr_zero: f64,
    pub thr_inf: f64,
}

impl RunConfig {
    /// Defaults per task; hyperparameters follow the reference table, with
    /// the speed-limit settings for braking and the safe-exploration ones otherwise.
    pub fn for_task(task: Task) -> Self {
        let mut fac = FacConfig::default();
        match task {
            Task::Braking => {
                fac.m_pi = 2;
                fac.m_lambda = 6;
                fac.reward_scale = 0.2;
                fac.threshold = 0.1;
                fac.target_entropy = -1.0;
            }
            Task::Navigation => {
                fac.m_pi = 4;
                fac.m_lambda = 12;
                fac.reward_scale = 1.0;
                fac.threshold = rate_to_value_threshold(0.1, fac.gamma_c, Horizon::Infinite);
                fac.target_entropy = -2.0;
            }
            Task::Tabular => {
                fac.m_pi = 4;
                fac.m_lambda = 12;
                fac.reward_scale = 1.0;
                // discounting and threshold come from the built-in hazard chain
                let cmdp = crate::oracle::hazard_chain_cmdp();
                fac.gamma = cmdp.gamma;
                fac.gamma_c = cmdp.gamma_c;
                fac.threshold = cmdp.threshold;
                fac.target_entropy = -1.0;
                fac.max_episode_len = 100;
            }
        }
        RunConfig {
            task,
            algorithm: Algorithm::Fac,
            seed: 0,
            fac,
            total_env_steps: 300_000,
            eval_interval: 10_000,
            eval_episodes: 10,
            output_dir: PathBuf::from("runs"),
            warmup_steps: 5_000,
            update_every: 1,
            gradient_steps_per_update: 1,
            replay_capacity: 500_000,
            dangerous_rate: 0.1,
            cmdp_path: None,
            thr_zero: DEFAULT_THR_ZERO,
            thr_inf: DEFAULT_THR_INF,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(FacError::Config {
                field: field.into(),
                message: message.into(),
            })
        };
        self.fac.validate().map_err(|e| match e {
            FacError::Config { field, message } => FacError::Config {
                field: config_key(&field).to_string(),
                message,
            },
            other => other,
        })?;
        if self.total_env_steps == 0 {
            return bad("total_env_steps", "must be positive");
        }
        if self.eval_interval == 0 {
            return bad("eval_interval", "must be positive");
        }
        if self.update_every == 0 {
            return bad("update_every", "must be positive");
        }
        if self.replay_capacity == 0 {
            return bad("Replay buffer size", "must be positive");
        }
        if !(self.thr_zero >= 0.0 && self.thr_zero < self.thr_inf) {
            return bad("thr_zero", "need 0 <= thr_zero < thr_inf");
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let f = &self.fac;
        let mut out = String::from("# fac run configuration\n");
        let mut kv = |k: &str, ty: &str, v: String| {
            let _ = writeln!(out, "{k} : {ty} = {v}");
        };
        let sched = |s: Schedule| format!("{} -> {}", s.start, s.end);
        kv("task", "str", self.task.name().into());
        kv("algorithm", "str", self.algorithm.name().into());
        kv("seed", "u64", self.seed.to_string());
        kv("total_env_steps", "u64", self.total_env_steps.to_string());
        kv("eval_interval", "u64", self.eval_interval.to_string());
        kv("eval_episodes", "u64", self.eval_episodes.to_string());
        kv("output_dir", "path", self.output_dir.display().to_string());
        kv("warmup_steps", "u64", self.warmup_steps.to_string());
        kv("update_every", "u64", self.update_every.to_string());
        kv("gradient_steps_per_update", "u64", self.gradient_steps_per_update.to_string());
        kv("Actor learning rate", "schedule", sched(f.lr_actor));
        kv("Critic learning rate", "schedule", sched(f.lr_critic));
        kv("Learning rate of multiplier net", "schedule", sched(f.lr_multiplier));
        kv("Learning rate of alpha", "schedule", sched(f.lr_alpha));
        kv("Reward discount factor (gamma)", "f64", f.gamma.to_string());
        kv("Cost discount factor (gamma_c)", "f64", f.gamma_c.to_string());
        kv("Policy update interval (m_pi)", "u64", f.m_pi.to_string());
        kv("Multiplier ascent interval (m_lambda)", "u64", f.m_lambda.to_string());
        kv("Target smoothing coefficient (tau)", "f64", f.tau.to_string());
        kv("Max episode length (N)", "u64", f.max_episode_len.to_string());
        kv("Expected entropy", "f64", f.target_entropy.to_string());
        kv("Replay buffer size", "u64", self.replay_capacity.to_string());
        kv("Reward scale factor", "f64", f.reward_scale.to_string());
        kv("Replay batch size", "u64", f.batch_size.to_string());
        kv("Number of hidden layers", "u64", f.hidden_layers.to_string());
        kv("Number of hidden units per layer", "u64", f.hidden_units.to_string());
        kv("constraint_threshold", "f64", f.threshold.to_string());
        kv("warm_start_fraction", "f64", f.kappa.to_string());
        kv("initial_alpha", "f64", f.initial_alpha.to_string());
        kv("anneal_steps", "u64", f.anneal_steps.to_string());
        kv("constraint_enabled", "bool", f.constraint_enabled.to_string());
        kv("penalty_before_gate", "bool", f.penalty_before_gate.to_string());
        kv("dangerous_rate", "f64", self.dangerous_rate.to_string());
        kv("thr_zero", "f64", self.thr_zero.to_string());
        kv("thr_inf", "f64", self.thr_inf.to_string());
        if let Some(p) = &self.cmdp_path {
            kv("cmdp_path", "path", p.display().to_string());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let task = match entries.iter().find(|e| e.key == "task") {
            Some(e) => {
                e.expect_type("str")?;
                Task::parse(&e.value).ok_or_else(|| e.invalid("expected braking, navigation or tabular"))?
            }
            None => {
                return Err(FacError::Config {
                    field: "task".into(),
                    message: "missing".into(),
                })
            }
        };
        let mut cfg = RunConfig::for_task(task);
        for e in &entries {
            e.apply(&mut cfg)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Config-file key for a learner field name.
fn config_key(field: &str) -> &str {
    match field {
        "lr_actor" => "Actor learning rate",
        "lr_critic" => "Critic learning rate",
        "lr_multiplier" => "Learning rate of multiplier net",
        "lr_alpha" => "Learning rate of alpha",
        "gamma" => "Reward discount factor (gamma)",
        "gamma_c" => "Cost discount factor (gamma_c)",
        "tau" => "Target smoothing coefficient (tau)",
        "m_pi" => "Policy update interval (m_pi)",
        "m_lambda" => "Multiplier ascent interval (m_lambda)",
        "kappa" => "warm_start_fraction",
        "batch_size" => "Replay batch size",
        "hidden_units" => "Number of hidden units per layer",
        other => other,
    }
}

struct Entry {
    line: usize,
    key: String,
    ty: String,
    value: String,
}

impl Entry {
    fn invalid(&self, message: impl Into<String>) -> FacError {
        FacError::Config {
            field: self.key.clone(),
            message: format!("line {}: {}", self.line, message.into()),
        }
    }

    fn expect_type(&self, ty: &str) -> Result<()> {
        if self.ty == ty {
            Ok(())
        } else {
            Err(self.invalid(format!("declared type `{}`, expected `{ty}`", self.ty)))
        }
    }

    fn u64(&self) -> Result<u64> {
        self.expect_type("u64")?;
        self.value.parse().map_err(|_| self.invalid(format!("`{}` is not a u64", self.value)))
    }

    fn usize(&self) -> Result<usize> {
        Ok(self.u64()? as usize)
    }

    fn f64(&self) -> Result<f64> {
        self.expect_type("f64")?;
        self.value
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| self.invalid(format!("`{}` is not a finite f64", self.value)))
    }

    fn bool(&self) -> Result<bool> {
        self.expect_type("bool")?;
        self.value.parse().map_err(|_| self.invalid(format!("`{}` is not a bool", self.value)))
    }

    fn schedule(&self) -> Result<Schedule> {
        self.expect_type("schedule")?;
        let (a, b) = self
            .value
            .split_once("->")
            .ok_or_else(|| self.invalid("schedules are written `start -> end`"))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| self.invalid(format!("`{}` is not a number", s.trim())))
        };
        Ok(Schedule::new(num(a)?, num(b)?))
    }

    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let f = &mut cfg.fac;
        match self.key.as_str() {
            "task" => {}
            "algorithm" => {
                self.expect_type("str")?;
                cfg.algorithm =
                    parse_algorithm(&self.value).ok_or_else(|| self.invalid("expected fac or expected-lagrangian"))?;
            }
            "seed" => cfg.seed = self.u64()?,
            "total_env_steps" => cfg.total_env_steps = self.u64()?,
            "eval_interval" => cfg.eval_interval = self.u64()?,
            "eval_episodes" => cfg.eval_episodes = self.usize()?,
            "output_dir" => {
                self.expect_type("path")?;
                cfg.output_dir = PathBuf::from(&self.value);
            }
            "warmup_steps" => cfg.warmup_steps = self.u64()?,
            "update_every" => cfg.update_every = self.u64()?,
            "gradient_steps_per_update" => cfg.gradient_steps_per_update = self.u64()?,
            "Actor learning rate" => f.lr_actor = self.schedule()?,
            "Critic learning rate" => f.lr_critic = self.schedule()?,
            "Learning rate of multiplier net" => f.lr_multiplier = self.schedule()?,
            "Learning rate of alpha" => f.lr_alpha = self.schedule()?,
            "Reward discount factor (gamma)" => f.gamma = self.f64()?,
            "Cost discount factor (gamma_c)" => f.gamma_c = self.f64()?,
            "Policy update interval (m_pi)" => f.m_pi = self.u64()?,
            "Multiplier ascent interval (m_lambda)" => f.m_lambda = self.u64()?,
            "Target smoothing coefficient (tau)" => f.tau = self.f64()?,
            "Max episode length (N)" => f.max_episode_len = self.usize()?,
            "Expected entropy" => f.target_entropy = self.f64()?,
            "Replay buffer size" => cfg.replay_capacity = self.usize()?,
            "Reward scale factor" => f.reward_scale = self.f64()?,
            "Replay batch size" => f.batch_size = self.usize()?,
            "Number of hidden layers" => f.hidden_layers = self.usize()?,
            "Number of hidden units per layer" => f.hidden_units = self.usize()?,
            "constraint_threshold" => f.threshold = self.f64()?,
            "warm_start_fraction" => f.kappa = self.f64()?,
            "initial_alpha" => f.initial_alpha = self.f64()?,
            "anneal_steps" => f.anneal_steps = self.u64()?,
            "constraint_enabled" => f.constraint_enabled = self.bool()?,
            "penalty_before_gate" => f.penalty_before_gate = self.bool()?,
            "dangerous_rate" => cfg.dangerous_rate = self.f64()?,
            "thr_zero" => cfg.thr_zero = self.f64()?,
            "thr_inf" => cfg.thr_inf = self.f64()?,
            "cmdp_path" => {
                self.expect_type("path")?;
                cfg.cmdp_path = Some(PathBuf::from(&self.value));
            }
            _ => return Err(self.invalid("unknown key")),
        }
        Ok(())
    }
}

fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = || FacError::Parse {
            line: i + 1,
            message: format!("expected `key : type = value`, got `{line}`"),
        };
        let (lhs, value) = line.split_once('=').ok_or_else(malformed)?;
        let (key, ty) = lhs.rsplit_once(" : ").ok_or_else(malformed)?;
        out.push(Entry {
            line: i + 1,
            key: key.trim().to_string(),
            ty: ty.trim().to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn braking_defaults_follow_speed_limit_rows() {
        let c = RunConfig::for_task(Task::Braking);
        assert_eq!((c.fac.m_pi, c.fac.m_lambda, c.fac.reward_scale), (2, 6, 0.2));
        assert_eq!(c.fac.tau, 0.005);
        assert_eq!(c.fac.batch_size, 256);
        assert_eq!(c.replay_capacity, 500_000);
    }

    #[test]
    fn navigation_threshold_is_ten() {
        let c = RunConfig::for_task(Task::Navigation);
        assert_eq!(c.fac.threshold, 10.0);
        assert_eq!((c.fac.m_pi, c.fac.m_lambda), (4, 12));
        assert_eq!(c.fac.target_entropy, -2.0);
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::for_task(Task::Navigation);
        c.seed = 77;
        c.fac.lr_actor = Schedule::new(3e-4, 1e-5);
        c.cmdp_path = Some("x.cmdp".into());
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::parse("task : str = braking\nReplay batch size : u64 = lots\n").unwrap_err();
        assert!(matches!(&err, FacError::Config { field, .. } if field == "Replay batch size"), "{err}");
        let err = RunConfig::parse("task : str = braking\nbogus : f64 = 1\n").unwrap_err();
        assert!(matches!(&err, FacError::Config { field, .. } if field == "bogus"));
        let err = RunConfig::parse("task : str = braking\ntotal_env_steps : u64 = 0\n").unwrap_err();
        assert!(matches!(&err, FacError::Config { field, .. } if field == "total_env_steps"));
        let err = RunConfig::parse("task : str = braking\nTarget smoothing coefficient (tau) : f64 = 2\n").unwrap_err();
        assert!(matches!(&err, FacError::Config { field, .. } if field == "Target smoothing coefficient (tau)"));
        let err = RunConfig::parse("seed : u64 = 1\n").unwrap_err();
        assert!(matches!(&err, FacError::Config { field, .. } if field == "task"));
    }
}
