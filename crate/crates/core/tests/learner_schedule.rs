mod common;

use common::random_batch;
use fac_core::learner::{Multiplier, StepReport};
use fac_core::nn::Mlp;
use fac_core::replay::Batch;
use fac_core::sac::SacLearner;
use fac_core::{Algorithm, FacConfig, LearnerState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OBS: usize = 2;
const ACT: usize = 1;

fn small_cfg() -> FacConfig {
    FacConfig {
        hidden_units: 8,
        batch_size: 16,
        lr_actor: fac_core::Schedule::new(1e-3, 1e-3),
        lr_critic: fac_core::Schedule::new(1e-3, 1e-3),
        lr_multiplier: fac_core::Schedule::new(1e-2, 1e-2),
        lr_alpha: fac_core::Schedule::new(1e-3, 1e-3),
        ..FacConfig::default()
    }
}

fn batches(seed: u64, count: usize, all_costly: bool) -> Vec<Batch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut b = random_batch(&mut rng, 16, OBS, ACT);
            if all_costly {
                b.costs.iter_mut().for_each(|c| *c = 1.0);
                b.dones.iter_mut().for_each(|d| *d = false);
            }
            b
        })
        .collect()
}

fn run(learner: &mut LearnerState, cfg: &FacConfig, data: &[Batch], seed: u64) -> Vec<StepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    data.iter().map(|b| learner.step_on_batch(b, cfg, &mut rng).unwrap()).collect()
}

#[test]
fn delayed_schedule_counts() {
    let cfg = FacConfig { m_pi: 2, m_lambda: 6, ..small_cfg() };
    let mut learner = LearnerState::new(OBS, ACT, &cfg, Algorithm::Fac, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let reports = run(&mut learner, &cfg, &batches(2, 24, false), 3);
    assert_eq!(reports.iter().filter(|r| r.policy_updated).count(), 12);
    assert_eq!(reports.iter().filter(|r| r.mean_qc.is_some()).count(), 4);
    for (i, r) in reports.iter().enumerate() {
        let k = i as u64 + 1;
        assert_eq!(r.policy_updated, k % 2 == 0, "step {k}");
        assert_eq!(r.mean_qc.is_some(), k % 6 == 0, "step {k}");
        assert!(!r.multiplier_updated || k % 6 == 0);
    }
    assert_eq!(learner.gradient_steps, 24);
}

#[test]
fn closed_gate_leaves_multiplier_untouched() {
    // threshold far above any reachable cost value keeps the latch shut
    let cfg = FacConfig { threshold: 1e6, kappa: 1.0, ..small_cfg() };
    let mut learner = LearnerState::new(OBS, ACT, &cfg, Algorithm::Fac, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let before = learner.multiplier.clone();
    let reports = run(&mut learner, &cfg, &batches(5, 60, true), 6);
    assert!(reports.iter().all(|r| !r.multiplier_updated));
    assert!(!learner.multiplier_active);
    let (Multiplier::Statewise { net: a, opt: oa }, Multiplier::Statewise { net: b, opt: ob }) =
        (&before, &learner.multiplier)
    else {
        panic!("statewise multiplier expected");
    };
    let bits = |m: &Mlp| m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a), bits(b));
    assert_eq!(oa, ob);
}

#[test]
fn baseline_multiplier_rises_while_constraint_is_violated() {
    let cfg = FacConfig { threshold: 1.0, m_pi: 1, m_lambda: 1, ..small_cfg() };
    let mut learner =
        LearnerState::new(OBS, ACT, &cfg, Algorithm::ExpectedLagrangian, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    // cost critic starts far above the threshold and is fed only costly transitions
    let last = learner.qc.dims().len() - 2;
    learner.qc.layer_bias_mut(last)[0] = 50.0;
    learner.qc_target = learner.qc.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lambdas = vec![learner.multiplier_at(&[0.0, 0.0]).unwrap()];
    for b in batches(9, 40, true) {
        learner.step_on_batch(&b, &cfg, &mut rng).unwrap();
        lambdas.push(learner.multiplier_at(&[0.0, 0.0]).unwrap());
    }
    assert!(lambdas.windows(2).all(|w| w[1] > w[0]), "{lambdas:?}");
}

#[test]
fn disabled_constraint_reduces_to_plain_learner() {
    let cfg = FacConfig { constraint_enabled: false, ..small_cfg() };
    let mut fac = LearnerState::new(OBS, ACT, &cfg, Algorithm::Fac, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let mut sac = SacLearner::new(OBS, ACT, &cfg, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    let mut r1 = ChaCha8Rng::seed_from_u64(11);
    let mut r2 = ChaCha8Rng::seed_from_u64(11);
    for b in batches(12, 30, false) {
        let a = fac.step_on_batch(&b, &cfg, &mut r1).unwrap();
        let s = sac.step_on_batch(&b, &cfg, &mut r2).unwrap();
        assert_eq!(a.q1_loss.to_bits(), s.q1_loss.to_bits());
        assert_eq!(a.policy_loss.map(f64::to_bits), s.policy_loss.map(f64::to_bits));
    }
    assert_eq!(fac.q1, sac.q1);
    assert_eq!(fac.q2, sac.q2);
    assert_eq!(fac.policy, sac.policy);
    assert_eq!(fac.log_alpha.to_bits(), sac.log_alpha.to_bits());
    assert!(!fac.multiplier_active);
}

#[test]
fn failed_step_leaves_learner_unchanged() {
    let cfg = small_cfg();
    let mut learner = LearnerState::new(OBS, ACT, &cfg, Algorithm::Fac, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
    let before = learner.clone();
    let mut empty = fac_core::ReplayBuffer::new(10, 0).unwrap();
    assert!(learner.train_step(&mut empty, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    assert_eq!(learner, before);
}

#[test]
fn deferred_penalty_leaves_policy_unconstrained_until_the_gate_opens() {
    // no ascent step within the run, so the latch stays shut
    let base = FacConfig { m_lambda: 1000, ..small_cfg() };
    let deferred = FacConfig { penalty_before_gate: false, ..base.clone() };
    let plain = FacConfig { constraint_enabled: false, ..base.clone() };
    let policy_after = |cfg: &FacConfig| {
        let mut l = LearnerState::new(OBS, ACT, cfg, Algorithm::Fac, &mut ChaCha8Rng::seed_from_u64(14)).unwrap();
        run(&mut l, cfg, &batches(15, 20, true), 16);
        assert!(!l.multiplier_active);
        l.policy
    };
    assert_eq!(policy_after(&deferred), policy_after(&plain));
    assert_ne!(policy_after(&base), policy_after(&plain));
}
