#![allow(dead_code)]

pub mod fd;

use fac_core::nn::Mlp;
use fac_core::replay::{Batch, Transition};
use rand::Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely: central
/// differences at `FD_STEP` carry roughly 1e-10 of rounding noise.
pub const FD_FLOOR: f64 = 1e-5;

pub fn normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_batch<R: Rng>(rng: &mut R, n: usize, obs_dim: usize, action_dim: usize) -> Batch {
    let ts: Vec<Transition> = (0..n)
        .map(|_| Transition {
            state: (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: (0..action_dim).map(|_| rng.gen_range(-0.95..0.95)).collect(),
            reward: rng.gen_range(-2.0..1.0),
            cost: if rng.gen_bool(0.3) { 1.0 } else { 0.0 },
            next_state: (0..obs_dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            done: rng.gen_bool(0.1),
        })
        .collect();
    Batch::from_transitions(&ts).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Largest relative error between `analytic` and central differences of `f`
/// over every coordinate of `x`.
pub fn fd_max_rel_err(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        let fd = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(fd, analytic[i]));
    }
    worst
}

pub fn with_params(net: &Mlp, params: &[f64]) -> Mlp {
    Mlp::from_params(net.dims(), params.to_vec()).unwrap()
}
