mod common;

use common::*;
use fac_core::nn::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn soft_q_gradient_matches_finite_differences() {
    let err = fd::soft_q_fd_error();
    assert!(err < FD_REL_TOL, "{err}");
}

#[test]
fn cost_q_gradient_matches_finite_differences() {
    let err = fd::cost_q_fd_error();
    assert!(err < FD_REL_TOL, "{err}");
}

#[test]
fn policy_gradient_matches_finite_differences() {
    let err = fd::policy_fd_error();
    assert!(err < FD_REL_TOL, "{err}");
}

#[test]
fn multiplier_gradient_matches_finite_differences() {
    let err = fd::multiplier_fd_error();
    assert!(err < FD_REL_TOL, "{err}");
}

#[test]
fn alpha_gradient_matches_finite_differences() {
    let err = fd::alpha_fd_error();
    assert!(err < FD_REL_TOL, "{err}");
}

/// Straightforward loops over the documented parameter layout.
fn reference_forward(dims: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let w = &params[off..off + fan_in * fan_out];
        let b = &params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let last = l == dims.len() - 2;
        h = (0..fan_out)
            .map(|o| {
                let z = b[o] + (0..fan_in).map(|i| w[o * fan_in + i] * h[i]).sum::<f64>();
                if last || z > 0.0 {
                    z
                } else {
                    z.exp() - 1.0
                }
            })
            .collect();
    }
    h
}

#[test]
fn forward_pass_matches_reference_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for dims in [vec![3, 8, 8, 1], vec![5, 16, 7, 4], vec![2, 64, 64, 2]] {
        let net = Mlp::init_uniform(&dims, &mut rng).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let got = net.forward(&x).unwrap();
            let want = reference_forward(&dims, net.params(), &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0), "{g} vs {w}");
            }
        }
    }
}
