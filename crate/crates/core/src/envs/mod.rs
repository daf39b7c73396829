//! Desk-scale environments.
//!
//! Every environment takes actions in the normalized box `[-1, 1]^k` that
//! the squashed policy produces and maps them onto its own physical ranges.

mod braking;
mod navigation;
mod tabular;

pub use braking::{braking_analytic_feasible, braking_step, BrakingAction, BrakingEnv, BrakingState, MAX_DECEL};
pub use navigation::{nav_step, NavAction, NavConfig, NavEnv, NavState};
pub use tabular::TabularEnv;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    /// Genuine termination. Episode-length truncation is handled by the caller.
    pub done: bool,
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Starts a new episode; all randomness of the episode derives from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> EnvStep;
}

/// Environments whose state can be placed on an evaluation grid.
pub trait GridEnvironment: Environment {
    /// Number of grid coordinates describing a state.
    fn grid_dim(&self) -> usize;
    /// Puts the environment in the state given by grid coordinates and returns the observation.
    fn set_state(&mut self, coords: &[f64]) -> Vec<f64>;
    /// Observation for grid coordinates without touching the environment.
    fn encode(&self, coords: &[f64]) -> Vec<f64>;
}

/// Maps a component of `[-1, 1]` linearly onto `[lo, hi]`.
pub(crate) fn unit_to_range(u: f64, lo: f64, hi: f64) -> f64 {
    let u = u.clamp(-1.0, 1.0);
    lo + (u + 1.0) * 0.5 * (hi - lo)
}
