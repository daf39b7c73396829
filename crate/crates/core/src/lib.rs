//! Feasible actor-critic: statewise safety constraints enforced through a
//! learned Lagrange-multiplier network, plus desk-scale environments and an
//! exact tabular oracle.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod envs;
pub mod error;
pub mod feasibility;
pub mod learner;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod plot;
pub mod policy;
pub mod replay;
pub mod sac;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{RunConfig, Task};
pub use error::{FacError, Result};
pub use learner::{Algorithm, FacConfig, LearnerState, Schedule};
pub use nn::{AdamState, GradientBundle, Mlp};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::Trainer;
