use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvStep, Environment, GridEnvironment};
use crate::oracle::TabularCmdp;

/// A finite CMDP exposed as a continuous-control environment: one-hot
/// observations, and the first action component split into `n_actions`
/// equal bins.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    pub cmdp: TabularCmdp,
    pub state: usize,
    rng: ChaCha8Rng,
}

impl TabularEnv {
    pub fn new(cmdp: TabularCmdp) -> Self {
        TabularEnv {
            cmdp,
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.cmdp.n_states];
        v[s] = 1.0;
        v
    }

    pub fn action_index(&self, u: f64) -> usize {
        let n = self.cmdp.n_actions;
        let bin = ((u.clamp(-1.0, 1.0) + 1.0) * 0.5 * n as f64).floor() as usize;
        bin.min(n - 1)
    }

    fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if x < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

impl Environment for TabularEnv {
    fn obs_dim(&self) -> usize {
        self.cmdp.n_states
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = Self::draw(&mut self.rng, &self.cmdp.initial);
        self.one_hot(self.state)
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let a = self.action_index(action[0]);
        let s = self.state;
        let reward = self.cmdp.reward[s][a];
        let cost = self.cmdp.cost[s][a];
        self.state = Self::draw(&mut self.rng, &self.cmdp.transition[s][a]);
        EnvStep {
            obs: self.one_hot(self.state),
            reward,
            cost,
            done: false,
        }
    }
}

/// Grid coordinate `x` addresses state `floor(x)`, so the grid `0:n:1`
/// visits every state once.
impl GridEnvironment for TabularEnv {
    fn grid_dim(&self) -> usize {
        1
    }

    fn set_state(&mut self, coords: &[f64]) -> Vec<f64> {
        self.state = (coords[0].max(0.0) as usize).min(self.cmdp.n_states - 1);
        self.one_hot(self.state)
    }

    fn encode(&self, coords: &[f64]) -> Vec<f64> {
        self.one_hot((coords[0].max(0.0) as usize).min(self.cmdp.n_states - 1))
    }
}
