//! Uniform experience replay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FacError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub next_state: Vec<f64>,
    /// True only for genuine terminal states; time-limit truncation stays false.
    pub done: bool,
}

impl Transition {
    fn check(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.state) || !finite(&self.action) || !finite(&self.next_state) {
            return Err(FacError::numeric("transition vector field"));
        }
        if !self.reward.is_finite() {
            return Err(FacError::numeric(format!("transition reward {}", self.reward)));
        }
        if !self.cost.is_finite() || self.cost < 0.0 {
            return Err(FacError::InvalidArgument(format!("transition cost {}", self.cost)));
        }
        Ok(())
    }
}

/// Column-major view of a sampled minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub len: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts
            .first()
            .ok_or_else(|| FacError::InvalidArgument("empty batch".into()))?;
        let (obs_dim, action_dim) = (first.state.len(), first.action.len());
        let mut b = Batch {
            len: ts.len(),
            obs_dim,
            action_dim,
            states: Vec::with_capacity(ts.len() * obs_dim),
            actions: Vec::with_capacity(ts.len() * action_dim),
            rewards: Vec::with_capacity(ts.len()),
            costs: Vec::with_capacity(ts.len()),
            next_states: Vec::with_capacity(ts.len() * obs_dim),
            dones: Vec::with_capacity(ts.len()),
        };
        for t in ts {
            if t.state.len() != obs_dim || t.next_state.len() != obs_dim || t.action.len() != action_dim {
                return Err(FacError::ShapeMismatch("ragged transitions in batch".into()));
            }
            b.states.extend_from_slice(&t.state);
            b.actions.extend_from_slice(&t.action);
            b.rewards.push(t.reward);
            b.costs.push(t.cost);
            b.next_states.extend_from_slice(&t.next_state);
            b.dones.push(t.done);
        }
        Ok(b)
    }

    /// Row-wise concatenation of states and actions, the critic input layout.
    pub fn state_actions(&self) -> Vec<f64> {
        concat_rows(&self.states, self.obs_dim, &self.actions, self.action_dim)
    }
}

pub fn concat_rows(a: &[f64], da: usize, b: &[f64], db: usize) -> Vec<f64> {
    let n = if da > 0 { a.len() / da } else { b.len() / db };
    let mut out = Vec::with_capacity(n * (da + db));
    for i in 0..n {
        out.extend_from_slice(&a[i * da..(i + 1) * da]);
        out.extend_from_slice(&b[i * db..(i + 1) * db]);
    }
    out
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    next: usize,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng_seed: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(FacError::InvalidArgument("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        t.check()?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(FacError::InvalidArgument("batch size must be positive".into()));
        }
        // With-replacement sampling only needs one stored transition.
        if self.storage.is_empty() {
            return Err(FacError::NotReady {
                size: 0,
                batch: batch_size,
            });
        }
        let n = self.storage.len();
        Ok((0..batch_size).map(|_| self.rng.gen_range(0..n)).collect())
    }

    /// Uniform draw with replacement.
    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    /// Uniform draw with replacement from a caller-owned generator; leaves the
    /// buffer's own sampling stream untouched.
    pub fn sample_batch_with<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Result<Batch> {
        if batch_size == 0 || self.storage.is_empty() {
            return Err(FacError::NotReady {
                size: self.storage.len(),
                batch: batch_size,
            });
        }
        let picked: Vec<Transition> = (0..batch_size)
            .map(|_| self.storage[rng.gen_range(0..self.storage.len())].clone())
            .collect();
        Batch::from_transitions(&picked)
    }

    pub fn sample_batch(&mut self, batch_size: usize) -> Result<Batch> {
        let idx = self.sample_indices(batch_size)?;
        let picked: Vec<Transition> = idx.into_iter().map(|i| self.storage[i].clone()).collect();
        Batch::from_transitions(&picked)
    }
}
