use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{unit_to_range, EnvStep, Environment, GridEnvironment};

/// Deceleration limit in m/s^2.
pub const MAX_DECEL: f64 = 5.0;
/// Side of the state box, both in meters and m/s.
pub const BOX: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrakingState {
    /// Distance to the obstacle, meters.
    pub distance: f64,
    /// Speed toward the obstacle, m/s.
    pub velocity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrakingAction {
    pub decel: f64,
}

impl BrakingAction {
    pub fn new(decel: f64) -> Self {
        BrakingAction {
            decel: decel.clamp(0.0, MAX_DECEL),
        }
    }
}

/// Forward-Euler step; position advances with the pre-step velocity.
/// Returns `(next, reward, cost, done)`.
pub fn braking_step(state: BrakingState, action: BrakingAction, dt: f64) -> (BrakingState, f64, f64, bool) {
    let a = action.decel.clamp(0.0, MAX_DECEL);
    let velocity = (state.velocity - a * dt).max(0.0);
    let distance = state.distance - state.velocity * dt;
    let collided = distance <= 0.0;
    let next = BrakingState { distance, velocity };
    let cost = if collided { 1.0 } else { 0.0 };
    (next, -(a * a), cost, collided || velocity == 0.0)
}

/// Constant full braking stops the car in `v^2 / (2 a_max)` meters.
pub fn braking_analytic_feasible(state: BrakingState) -> bool {
    state.velocity * state.velocity <= 2.0 * MAX_DECEL * state.distance
}

#[derive(Clone, Debug)]
pub struct BrakingEnv {
    pub state: BrakingState,
    pub dt: f64,
}

impl Default for BrakingEnv {
    fn default() -> Self {
        BrakingEnv {
            state: BrakingState {
                distance: BOX,
                velocity: 0.0,
            },
            dt: 0.1,
        }
    }
}

impl BrakingEnv {
    pub fn observe(state: BrakingState) -> Vec<f64> {
        vec![2.0 * state.distance / BOX - 1.0, 2.0 * state.velocity / BOX - 1.0]
    }

    pub fn decel_from_unit(u: f64) -> f64 {
        unit_to_range(u, 0.0, MAX_DECEL)
    }
}

impl Environment for BrakingEnv {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    /// Uniform over the part of the box where a collision is still avoidable.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = loop {
            let s = BrakingState {
                distance: rng.gen_range(0.0..BOX),
                velocity: rng.gen_range(0.0..BOX),
            };
            if braking_analytic_feasible(s) {
                break s;
            }
        };
        Self::observe(self.state)
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let act = BrakingAction::new(Self::decel_from_unit(action[0]));
        let (next, reward, cost, done) = braking_step(self.state, act, self.dt);
        self.state = next;
        EnvStep {
            obs: Self::observe(next),
            reward,
            cost,
            done,
        }
    }
}

impl GridEnvironment for BrakingEnv {
    fn grid_dim(&self) -> usize {
        2
    }

    /// Grid coordinates are `(distance, velocity)`.
    fn set_state(&mut self, coords: &[f64]) -> Vec<f64> {
        self.state = BrakingState {
            distance: coords[0],
            velocity: coords[1],
        };
        Self::observe(self.state)
    }

    fn encode(&self, coords: &[f64]) -> Vec<f64> {
        Self::observe(BrakingState {
            distance: coords[0],
            velocity: coords[1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(distance: f64, velocity: f64) -> BrakingState {
        BrakingState { distance, velocity }
    }

    #[test]
    fn full_brake_from_ten_meters() {
        let (n, r, c, done) = braking_step(st(10.0, 5.0), BrakingAction::new(5.0), 0.1);
        assert!((n.distance - 9.5).abs() < 1e-12);
        assert!((n.velocity - 4.5).abs() < 1e-12);
        assert_eq!((r, c, done), (-25.0, 0.0, false));
    }

    #[test]
    fn stopped_vehicle_is_done() {
        let (n, _, c, done) = braking_step(st(5.0, 0.0), BrakingAction::new(3.0), 0.1);
        assert_eq!(n.velocity, 0.0);
        assert_eq!(c, 0.0);
        assert!(done);
    }

    #[test]
    fn collision_costs_and_terminates() {
        let (n, _, c, done) = braking_step(st(0.1, 5.0), BrakingAction::new(0.0), 0.1);
        assert!((n.distance + 0.4).abs() < 1e-12);
        assert_eq!(c, 1.0);
        assert!(done);
    }

    #[test]
    fn actions_are_clamped() {
        assert_eq!(BrakingAction::new(9.0).decel, MAX_DECEL);
        assert_eq!(BrakingAction::new(-1.0).decel, 0.0);
        assert_eq!(BrakingEnv::decel_from_unit(-1.0), 0.0);
        assert_eq!(BrakingEnv::decel_from_unit(1.0), MAX_DECEL);
    }

    #[test]
    fn analytic_region() {
        assert!(braking_analytic_feasible(st(2.5, 5.0)));
        assert!(!braking_analytic_feasible(st(1.0, 5.0)));
        for d in [0.0, 0.3, 7.0] {
            assert!(braking_analytic_feasible(st(d, 0.0)));
        }
    }

    #[test]
    fn reset_is_seeded() {
        let mut a = BrakingEnv::default();
        let mut b = BrakingEnv::default();
        assert_eq!(a.reset(42), b.reset(42));
        assert_ne!(a.reset(42), a.reset(43));
    }

    #[test]
    fn resets_land_in_the_feasible_region() {
        let mut env = BrakingEnv::default();
        for seed in 0..200 {
            env.reset(seed);
            assert!(braking_analytic_feasible(env.state));
        }
    }
}
