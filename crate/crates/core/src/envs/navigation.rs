use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{unit_to_range, EnvStep, Environment};

#[derive(Clone, Debug, PartialEq)]
pub struct NavConfig {
    /// Side of the square arena `[0, arena]^2`, meters.
    pub arena: f64,
    pub hazards: Vec<(f64, f64)>,
    pub hazard_radius: f64,
    pub goal_radius: f64,
    pub goal_bonus: f64,
    pub max_turn_rate: f64,
    pub max_speed: f64,
    pub dt: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        NavConfig {
            arena: 4.0,
            // an overlapping wall across the middle with one gap at the right edge
            hazards: vec![(0.5, 2.0), (1.25, 2.0), (2.0, 2.0), (2.75, 2.0)],
            hazard_radius: 0.4,
            goal_radius: 0.3,
            goal_bonus: 10.0,
            max_turn_rate: 1.0,
            max_speed: 1.0,
            dt: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub goal: (f64, f64),
    pub hazards: Vec<(f64, f64)>,
    pub hazard_radius: f64,
}

impl NavState {
    pub fn goal_distance(&self) -> f64 {
        (self.goal.0 - self.x).hypot(self.goal.1 - self.y)
    }

    pub fn in_hazard(&self) -> bool {
        self.hazards
            .iter()
            .any(|&(hx, hy)| (hx - self.x).hypot(hy - self.y) <= self.hazard_radius)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavAction {
    /// rad/s, clamped to the configured limit.
    pub turn_rate: f64,
    /// m/s, clamped to `[0, max_speed]`.
    pub forward_speed: f64,
}

fn sample_free_point<R: Rng>(cfg: &NavConfig, clearance: f64, rng: &mut R) -> (f64, f64) {
    let margin = cfg.goal_radius;
    sample_free_in(cfg, clearance, (margin, cfg.arena - margin), rng)
}

fn sample_free_in<R: Rng>(cfg: &NavConfig, clearance: f64, (y0, y1): (f64, f64), rng: &mut R) -> (f64, f64) {
    let margin = cfg.goal_radius;
    loop {
        let p = (rng.gen_range(margin..cfg.arena - margin), rng.gen_range(y0..y1));
        let clear = cfg
            .hazards
            .iter()
            .all(|&(hx, hy)| (hx - p.0).hypot(hy - p.1) > cfg.hazard_radius + clearance);
        if clear {
            return p;
        }
    }
}

/// A goal in the half of the arena (split at `y = arena / 2`) not containing `y`.
fn sample_goal_across<R: Rng>(cfg: &NavConfig, y: f64, rng: &mut R) -> (f64, f64) {
    let mid = cfg.arena / 2.0;
    let range = if y < mid {
        (mid, cfg.arena - cfg.goal_radius)
    } else {
        (cfg.goal_radius, mid)
    };
    sample_free_in(cfg, 0.2, range, rng)
}

/// Forward-Euler unicycle step. Reward is progress toward the goal plus a
/// bonus when the goal is reached; the next goal is drawn from `rng` in the
/// other half of the arena, so every trip passes the middle.
/// Cost is 1 while the agent is inside any hazard. Never terminal.
pub fn nav_step<R: Rng>(
    cfg: &NavConfig,
    state: &NavState,
    action: NavAction,
    dt: f64,
    rng: &mut R,
) -> (NavState, f64, f64, bool) {
    let turn = action.turn_rate.clamp(-cfg.max_turn_rate, cfg.max_turn_rate);
    let speed = action.forward_speed.clamp(0.0, cfg.max_speed);
    let before = state.goal_distance();
    let mut next = state.clone();
    next.x = (state.x + speed * state.heading.cos() * dt).clamp(0.0, cfg.arena);
    next.y = (state.y + speed * state.heading.sin() * dt).clamp(0.0, cfg.arena);
    next.heading = wrap_angle(state.heading + turn * dt);
    let after = next.goal_distance();
    let mut reward = before - after;
    if after <= cfg.goal_radius {
        reward += cfg.goal_bonus;
        next.goal = sample_goal_across(cfg, next.goal.1, rng);
    }
    let cost = if next.in_hazard() { 1.0 } else { 0.0 };
    (next, reward, cost, false)
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r < -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

#[derive(Clone, Debug)]
pub struct NavEnv {
    pub config: NavConfig,
    pub state: NavState,
    rng: ChaCha8Rng,
}

impl NavEnv {
    pub fn new(config: NavConfig) -> Self {
        let state = NavState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            goal: (config.arena, config.arena),
            hazards: config.hazards.clone(),
            hazard_radius: config.hazard_radius,
        };
        NavEnv {
            config,
            state,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Ego-centric features: position, heading, goal and hazard offsets in the agent frame.
    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let half = self.config.arena / 2.0;
        let (c, sn) = (s.heading.cos(), s.heading.sin());
        let ego = |px: f64, py: f64| {
            let (dx, dy) = (px - s.x, py - s.y);
            (
                (c * dx + sn * dy) / self.config.arena,
                (-sn * dx + c * dy) / self.config.arena,
            )
        };
        let mut obs = vec![s.x / half - 1.0, s.y / half - 1.0, c, sn];
        let g = ego(s.goal.0, s.goal.1);
        obs.extend([g.0, g.1]);
        for &(hx, hy) in &s.hazards {
            let h = ego(hx, hy);
            obs.extend([h.0, h.1]);
        }
        obs
    }

    pub fn action_from_unit(&self, action: &[f64]) -> NavAction {
        NavAction {
            turn_rate: unit_to_range(action[0], -self.config.max_turn_rate, self.config.max_turn_rate),
            forward_speed: unit_to_range(action[1], 0.0, self.config.max_speed),
        }
    }
}

impl Default for NavEnv {
    fn default() -> Self {
        NavEnv::new(NavConfig::default())
    }
}

impl Environment for NavEnv {
    fn obs_dim(&self) -> usize {
        6 + 2 * self.config.hazards.len()
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = sample_free_point(&self.config, 0.1, &mut self.rng);
        let heading = self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let goal = sample_goal_across(&self.config, y, &mut self.rng);
        self.state = NavState {
            x,
            y,
            heading,
            goal,
            hazards: self.config.hazards.clone(),
            hazard_radius: self.config.hazard_radius,
        };
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let act = self.action_from_unit(action);
        let (next, reward, cost, done) = nav_step(&self.config, &self.state, act, self.config.dt, &mut self.rng);
        self.state = next;
        EnvStep {
            obs: self.observe(),
            reward,
            cost,
            done,
        }
    }
}
