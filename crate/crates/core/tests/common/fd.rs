use fac_core::learner::{alpha_loss, cost_q_loss, multiplier_loss, policy_loss, regression_loss};
use fac_core::nn::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub const OBS: usize = 3;
pub const ACT: usize = 2;
pub const N: usize = 6;
pub const BATCHES: u64 = 20;

fn nets(rng: &mut ChaCha8Rng) -> (Mlp, Mlp, Mlp, Mlp, Mlp) {
    let critic = [OBS + ACT, 8, 8, 1];
    (
        Mlp::init_uniform(&critic, rng).unwrap(),
        Mlp::init_uniform(&critic, rng).unwrap(),
        Mlp::init_uniform(&critic, rng).unwrap(),
        Mlp::init_uniform(&[OBS, 8, 8, 2 * ACT], rng).unwrap(),
        Mlp::init_uniform(&[OBS, 8, 8, 1], rng).unwrap(),
    )
}

/// Worst relative error over `BATCHES` random frozen batches.
pub fn soft_q_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q1, ..) = nets(&mut rng);
        let batch = random_batch(&mut rng, N, OBS, ACT);
        let sa = batch.state_actions();
        let y: Vec<f64> = (0..N).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (_, g) = regression_loss(&q1, &sa, N, &y).unwrap();
        let err = fd_max_rel_err(q1.params(), g.as_slice(), |p| {
            regression_loss(&with_params(&q1, p), &sa, N, &y).unwrap().0
        });
        worst = worst.max(err);
    }
    worst
}

pub fn cost_q_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (_, _, qc, policy, _) = nets(&mut rng);
        let qc_target = Mlp::init_uniform(qc.dims(), &mut rng).unwrap();
        let batch = random_batch(&mut rng, N, OBS, ACT);
        let noise = normals(&mut rng, N * ACT);
        let (_, g) = cost_q_loss(&batch, &qc, &qc_target, &policy, 0.99, noise.clone()).unwrap();
        let err = fd_max_rel_err(qc.params(), g.as_slice(), |p| {
            cost_q_loss(&batch, &with_params(&qc, p), &qc_target, &policy, 0.99, noise.clone())
                .unwrap()
                .0
        });
        worst = worst.max(err);
    }
    worst
}

pub fn policy_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (q1, q2, qc, policy, _) = nets(&mut rng);
        let batch = random_batch(&mut rng, N, OBS, ACT);
        let noise = normals(&mut rng, N * ACT);
        let lambdas: Vec<f64> = (0..N).map(|_| rng.gen_range(0.0..3.0)).collect();
        let alpha = rng.gen_range(0.05..1.0);
        let loss = |p: &Mlp| {
            policy_loss(&batch.states, N, noise.clone(), &q1, &q2, &qc, &lambdas, p, alpha, 0.5).unwrap()
        };
        let g = loss(&policy).grads;
        let err = fd_max_rel_err(policy.params(), g.as_slice(), |p| loss(&with_params(&policy, p)).loss);
        worst = worst.max(err);
    }
    worst
}

pub fn multiplier_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (.., multiplier) = nets(&mut rng);
        let batch = random_batch(&mut rng, N, OBS, ACT);
        let qc: Vec<f64> = (0..N).map(|_| rng.gen_range(0.0..2.0)).collect();
        let (_, g) = multiplier_loss(&batch.states, N, &qc, &multiplier, 0.7).unwrap();
        let err = fd_max_rel_err(multiplier.params(), g.as_slice(), |p| {
            multiplier_loss(&batch.states, N, &qc, &with_params(&multiplier, p), 0.7).unwrap().0
        });
        worst = worst.max(err);
    }
    worst
}

pub fn alpha_fd_error() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..BATCHES {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let log_probs: Vec<f64> = (0..N).map(|_| rng.gen_range(-4.0..2.0)).collect();
        let log_alpha = rng.gen_range(-3.0..1.0);
        let (_, g) = alpha_loss(&log_probs, log_alpha, -2.0);
        let err = fd_max_rel_err(&[log_alpha], &[g], |p| alpha_loss(&log_probs, p[0], -2.0).0);
        worst = worst.max(err);
    }
    worst
}

/// Every loss gradient with its worst finite-difference error.
pub fn all_fd_errors() -> Vec<(&'static str, f64)> {
    vec![
        ("soft_q", soft_q_fd_error()),
        ("cost_q", cost_q_fd_error()),
        ("policy", policy_fd_error()),
        ("multiplier", multiplier_fd_error()),
        ("alpha", alpha_fd_error()),
    ]
}
