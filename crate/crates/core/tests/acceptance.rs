//! Acceptance checks. Each test prints one `criterion N ...: PASS|FAIL` line
//! with the measured values next to the pinned bars, then asserts.
//!
//! Criteria 3, 4, 5 and 8 train full agents and are skipped unless the
//! target is run with `--include-ignored` (or `--ignored` for only those):
//! `cargo test --release -p fac-core --test acceptance -- --include-ignored`.

mod common;

use common::fd::all_fd_errors;
use common::FD_REL_TOL;
use fac_core::checkpoint::Checkpoint;
use fac_core::commands::{braking_analytic_infeasible, feasmap_for};
use fac_core::config::{RunConfig, Task};
use fac_core::feasibility::{iou, rollout_violation_map, GridSpec};
use fac_core::learner::{Algorithm, Schedule};
use fac_core::oracle::{
    analyze, hazard_chain_cmdp, rate_to_value_threshold, random_cmdp, Horizon, TabularCmdp,
};
use fac_core::policy::mean_action;
use fac_core::trainer::Trainer;
use std::process::ExitCode;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// criterion 3
const IOU_BEST_BAR: f64 = 0.80;
const IOU_MEDIAN_BAR: f64 = 0.70;
const BRAKING_SEEDS: [u64; 3] = [1, 2, 3];
// criterion 4
const NAV_FAC_FRACTION_BAR: f64 = 0.85;
const NAV_FRACTION_GAP: f64 = 0.15;
/// Replay states scored when measuring the batch fraction.
const NAV_FRACTION_SAMPLES: usize = 4096;
// criterion 5
const NAV_EVAL_EPISODES: usize = 100;
const NAV_FAC_DANGEROUS_BAR: usize = 10;
const NAV_DANGEROUS_GAP: usize = 15;
// criterion 6
const RANDOM_INSTANCES: u64 = 200;
// criterion 7
const OBJECTIVE_TOL: f64 = 1e-9;
// criterion 8
const TABULAR_BATCH: usize = 4096;
const DIVERGENCE_RATIO: f64 = 10.0;

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Run settings sized for a single laptop core.
fn desk_scale(task: Task, algorithm: Algorithm, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::for_task(task);
    cfg.algorithm = algorithm;
    cfg.seed = seed;
    cfg.fac.batch_size = 64;
    cfg.fac.hidden_units = 64;
    cfg.eval_episodes = 10;
    match task {
        Task::Braking => {
            // longer runs and the slower Table 5 multiplier schedule only
            // sharpen the multiplier ramp into the feasible side
            cfg.total_env_steps = 30_000;
            cfg.eval_interval = 5_000;
            cfg.warmup_steps = 2_000;
            cfg.fac.max_episode_len = 300;
            cfg.fac.lr_actor = Schedule::new(3e-4, 3e-4);
            cfg.fac.lr_critic = Schedule::new(1e-3, 1e-3);
            cfg.fac.lr_alpha = Schedule::new(3e-4, 3e-4);
            cfg.fac.lr_multiplier = Schedule::new(1e-3, 1e-3);
        }
        Task::Navigation => {
            cfg.total_env_steps = 300_000;
            cfg.eval_interval = 30_000;
            cfg.warmup_steps = 5_000;
            cfg.fac.lr_actor = Schedule::new(3e-4, 3e-4);
            cfg.fac.lr_critic = Schedule::new(1e-3, 1e-3);
            cfg.fac.lr_alpha = Schedule::new(3e-4, 3e-4);
            // the annealed ascent damps the primal-dual oscillation
            cfg.fac.lr_multiplier = Schedule::new(1e-3, 1e-5);
            cfg.fac.anneal_steps = 300_000;
            // with alpha = 1 the entropy bonus swamps the 0.1-per-step progress reward
            cfg.fac.initial_alpha = 0.1;
            // a fixed initial penalty parks both learners before they find the goal
            cfg.fac.penalty_before_gate = false;
        }
        Task::Tabular => {
            cfg.total_env_steps = 60_000;
            cfg.eval_interval = 10_000;
            cfg.warmup_steps = 2_000;
            cfg.fac.lr_actor = Schedule::new(3e-4, 3e-4);
            cfg.fac.lr_critic = Schedule::new(1e-3, 1e-3);
            cfg.fac.lr_alpha = Schedule::new(3e-4, 3e-4);
            cfg.fac.lr_multiplier = Schedule::new(1e-3, 1e-3);
        }
    }
    cfg
}

fn trained(cfg: RunConfig) -> Trainer {
    let mut t = Trainer::new(cfg).expect("config");
    t.run(None).expect("training");
    t
}

fn criterion_01_gradients_match_finite_differences() -> bool {
    let errs = all_fd_errors();
    let pass = errs.iter().all(|(_, e)| *e < FD_REL_TOL);
    let detail = errs
        .iter()
        .map(|(n, e)| format!("{n} {e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(1, "gradient correctness", pass, format!("{detail}; bar {FD_REL_TOL:e}"));
    pass
}

fn criterion_02_rate_threshold_is_ten() -> bool {
    let d = rate_to_value_threshold(0.1, 0.99, Horizon::Infinite);
    let pass = d == 10.0;
    report(2, "constraint transformation", pass, format!("d = {d:?}"));
    pass
}

/// IoU of the multiplier-Infeasible cells against the analytic region, per seed.
fn fac_braking_iou(seed: u64) -> (f64, Option<f64>) {
    let t = trained(desk_scale(Task::Braking, Algorithm::Fac, seed));
    let ck = t.checkpoint().unwrap();
    let out = feasmap_for(&ck, None, None).unwrap();
    (out.iou_infeasible.unwrap(), out.computed_thr_inf)
}

/// IoU of the baseline's rollout-unsafe cells against the analytic region.
fn baseline_rollout_iou(seed: u64) -> f64 {
    let mut t = trained(desk_scale(Task::Braking, Algorithm::ExpectedLagrangian, seed));
    let cfg = t.config.clone();
    let grid = GridSpec::braking_default();
    let policy = t.agent.policy().clone();
    let env = t.env.as_grid().unwrap();
    let safe = rollout_violation_map(
        |obs| mean_action(&policy, obs),
        env,
        &grid,
        1,
        cfg.fac.gamma_c,
        cfg.fac.threshold,
        cfg.fac.max_episode_len,
    )
    .unwrap();
    iou(&safe.complement(), &braking_analytic_infeasible(&grid)).unwrap()
}

fn criterion_03_braking_feasible_region_recovery() -> bool {
    let mut fac = Vec::new();
    let mut base = Vec::new();
    for seed in BRAKING_SEEDS {
        let (i, thr) = fac_braking_iou(seed);
        println!("  braking seed {seed}: fac multiplier iou {i:.4}, computed infinity threshold {thr:?}");
        fac.push(i);
        let b = baseline_rollout_iou(seed);
        println!("  braking seed {seed}: baseline rollout iou {b:.4}");
        base.push(b);
    }
    let best = fac.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let med = median(fac.clone());
    let base_med = median(base.clone());
    let pass_a = best >= IOU_BEST_BAR && med >= IOU_MEDIAN_BAR;
    let pass_b = med > base_med;
    report(
        3,
        "braking region recovery (a)",
        pass_a,
        format!("best {best:.4} bar {IOU_BEST_BAR}, median {med:.4} bar {IOU_MEDIAN_BAR}"),
    );
    report(
        3,
        "braking region recovery (b)",
        pass_b,
        format!("fac median {med:.4} vs baseline rollout median {base_med:.4}"),
    );
    pass_a && pass_b
}

struct NavOutcome {
    fraction: f64,
    dangerous: usize,
    mean_return: f64,
}

fn navigation_run(algorithm: Algorithm, seed: u64) -> NavOutcome {
    let mut t = trained(desk_scale(Task::Navigation, algorithm, seed));
    let d = t.config.fac.threshold;
    // the baseline has a cost critic too; score the same replay states
    let vc = t.batch_cost_values(NAV_FRACTION_SAMPLES).unwrap().unwrap();
    let fraction = vc.iter().filter(|&&v| v <= d).count() as f64 / vc.len() as f64;
    let stats = t.evaluate(NAV_EVAL_EPISODES).unwrap();
    let dangerous = stats.iter().filter(|s| s.dangerous).count();
    let mean_return = stats.iter().map(|s| s.episode_return).sum::<f64>() / stats.len() as f64;
    NavOutcome {
        fraction,
        dangerous,
        mean_return,
    }
}

fn criterion_04_05_navigation_statewise_vs_expectation() -> bool {
    let fac = navigation_run(Algorithm::Fac, 1);
    let base = navigation_run(Algorithm::ExpectedLagrangian, 1);
    let pass4 = fac.fraction >= NAV_FAC_FRACTION_BAR && base.fraction <= fac.fraction - NAV_FRACTION_GAP;
    report(
        4,
        "batch fraction with v_C <= d",
        pass4,
        format!(
            "fac {:.3} bar {NAV_FAC_FRACTION_BAR}, baseline {:.3} bar <= fac - {NAV_FRACTION_GAP}",
            fac.fraction, base.fraction
        ),
    );
    let pass5 = fac.dangerous <= NAV_FAC_DANGEROUS_BAR && base.dangerous >= fac.dangerous + NAV_DANGEROUS_GAP;
    report(
        5,
        "dangerous episodes",
        pass5,
        format!(
            "fac {}/{NAV_EVAL_EPISODES} bar {NAV_FAC_DANGEROUS_BAR}, baseline {} bar >= fac + {NAV_DANGEROUS_GAP}; \
             mean return fac {:.1} baseline {:.1}",
            fac.dangerous, base.dangerous, fac.mean_return, base.mean_return
        ),
    );
    pass4 && pass5
}

fn random_instances() -> Vec<TabularCmdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..RANDOM_INSTANCES).map(|_| random_cmdp(&mut rng, 5, 3)).collect()
}

fn criterion_06_statewise_feasible_implies_expectation_feasible() -> bool {
    let mut checked = 0;
    let mut counterexamples = 0;
    for cmdp in random_instances() {
        let r = analyze(&cmdp).unwrap();
        if let Some(cx) = &r.containment_counterexamples {
            checked += 1;
            counterexamples += cx.len();
        }
    }
    let pass = checked >= 50 && counterexamples == 0;
    report(
        6,
        "statewise-feasible policies meet the expectation constraint",
        pass,
        format!("{checked} instances with supp(d0) in S_F, {counterexamples} counterexamples"),
    );
    pass
}

/// The hazard chain with a rarer fall from state 3 and more initial mass
/// on the doomed state. The expectation constraint is dominated by the
/// doomed state and forbids the risky action, while state 3 alone stays
/// within the threshold when taking it.
fn partially_doomed_chain() -> TabularCmdp {
    let mut cmdp = hazard_chain_cmdp();
    cmdp.transition[3][1] = vec![0.0, 0.0, 0.0, 0.95, 0.05];
    cmdp.threshold = 4.0;
    let rest = (1.0 - 0.38 - 0.1) / 3.0;
    cmdp.initial = vec![rest, rest, rest, 0.1, 0.38];
    cmdp
}

fn criterion_07_statewise_optimum_dominates_on_fixtures() -> bool {
    let mut both = 0;
    let mut violations = Vec::new();
    for (k, cmdp) in random_instances().iter().enumerate() {
        let r = analyze(cmdp).unwrap();
        if let Some(ok) = r.objective_bound_holds(OBJECTIVE_TOL) {
            both += 1;
            if !ok {
                violations.push((k, r.statewise.objective().unwrap(), r.expected.objective().unwrap()));
            }
        }
    }
    println!(
        "  random instances: {both} with both solvers feasible, {} where J_stw < J_exp",
        violations.len()
    );
    for (k, s, e) in violations.iter().take(5) {
        println!("    instance {k}: J_stw {s:.6} J_exp {e:.6}");
    }

    let mut detail = Vec::new();
    let mut pass = true;
    for (name, cmdp) in [("hazard chain", hazard_chain_cmdp()), ("partially doomed chain", partially_doomed_chain())] {
        let r = analyze(&cmdp).unwrap();
        let holds = r.objective_bound_holds(OBJECTIVE_TOL) == Some(true);
        pass &= holds;
        detail.push(format!(
            "{name}: J_stw {:.6} J_exp {:.6}",
            r.statewise.objective().unwrap_or(f64::NAN),
            r.expected.objective().unwrap_or(f64::NAN)
        ));
    }
    report(7, "J_stw >= J_exp on fixtures", pass, detail.join("; "));
    pass
}

fn criterion_08_multiplier_diverges_on_infeasible_state() -> bool {
    let mut t = trained(desk_scale(Task::Tabular, Algorithm::Fac, 1));
    let batch_median = median(t.batch_multiplier_values(TABULAR_BATCH).unwrap().unwrap());
    let ck = t.checkpoint().unwrap();
    let region = analyze(&hazard_chain_cmdp()).unwrap().region;
    let map = feasmap_for(&ck, None, None).unwrap().map;
    let lam_doomed: Vec<f64> = region.infeasible.iter().map(|&s| map.lambdas[s]).collect();
    let lam_feasible = median(region.feasible.iter().map(|&s| map.lambdas[s]).collect());
    let worst = lam_doomed.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = !lam_doomed.is_empty() && worst >= DIVERGENCE_RATIO * batch_median;
    report(
        8,
        "multiplier divergence",
        pass,
        format!(
            "lambda at infeasible states {lam_doomed:?}, replay-batch median {batch_median:.4} bar x{DIVERGENCE_RATIO}, \
             feasible-state median {lam_feasible:.4}; classes {}",
            map.classes.iter().map(|c| c.code()).collect::<String>()
        ),
    );
    pass
}

fn reduction_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::for_task(Task::Braking);
    cfg.seed = seed;
    cfg.total_env_steps = 4_000;
    cfg.eval_interval = 1_000;
    cfg.eval_episodes = 3;
    cfg.warmup_steps = 500;
    cfg.fac.batch_size = 32;
    cfg.fac.hidden_units = 16;
    cfg.fac.max_episode_len = 200;
    cfg.fac.constraint_enabled = false;
    cfg
}

fn criterion_09_disabled_constraint_reduces_to_plain_learner() -> bool {
    let mut fac = Trainer::new(reduction_config(5)).unwrap();
    let mut plain = Trainer::new_plain(reduction_config(5)).unwrap();
    let a = fac.run(None).unwrap();
    let b = plain.run(None).unwrap();
    // the plain learner has no cost critic, so compare the columns both produce
    let curve = |rows: &[fac_core::metrics::MetricsRow]| -> Vec<String> {
        rows.iter()
            .map(|r| {
                format!(
                    "{} {} {:?} {:?} {} {:?} {:?} {:?} {:?}",
                    r.env_step,
                    r.gradient_steps,
                    r.episode_return.to_bits(),
                    r.c_rate.to_bits(),
                    r.dangerous_episodes,
                    r.train_return.map(f64::to_bits),
                    r.alpha.to_bits(),
                    r.q1_loss.map(f64::to_bits),
                    r.policy_loss.map(f64::to_bits),
                )
            })
            .collect()
    };
    let same_curves = curve(&a) == curve(&b);
    if !same_curves {
        println!("{:?}\n{:?}", curve(&a), curve(&b));
    }
    let same_policy = fac.agent.policy().params() == plain.agent.policy().params();
    let pass = same_curves && same_policy && !a.is_empty();
    report(
        9,
        "reduction to the plain learner",
        pass,
        format!("{} rows, curves identical {same_curves}, policy bits identical {same_policy}", a.len()),
    );
    pass
}

fn determinism_config() -> RunConfig {
    let mut cfg = reduction_config(11);
    cfg.fac.constraint_enabled = true;
    cfg.fac.m_lambda = 2;
    cfg.fac.threshold = 0.05;
    cfg
}

fn criterion_10_determinism_and_persistence() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        Trainer::new(determinism_config()).unwrap().run(Some(&out)).unwrap();
        files.push(std::fs::read(out.join("metrics.csv")).unwrap());
    }
    let same_metrics = files[0] == files[1];

    let first = dir.path().join("a").join("final.ckpt");
    let loaded = Checkpoint::load(&first).unwrap();
    let second = dir.path().join("resaved.ckpt");
    loaded.save(&second).unwrap();
    let same_ckpt = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();
    let pass = same_metrics && same_ckpt;
    report(
        10,
        "determinism and persistence",
        pass,
        format!("metrics byte-identical {same_metrics}, checkpoint save/load/save byte-identical {same_ckpt}"),
    );
    pass
}

type Criterion = (&'static str, fn() -> bool);

const FAST: &[Criterion] = &[
    ("1", criterion_01_gradients_match_finite_differences),
    ("2", criterion_02_rate_threshold_is_ten),
    ("6", criterion_06_statewise_feasible_implies_expectation_feasible),
    ("7", criterion_07_statewise_optimum_dominates_on_fixtures),
    ("8", criterion_08_multiplier_diverges_on_infeasible_state),
    ("9", criterion_09_disabled_constraint_reduces_to_plain_learner),
    ("10", criterion_10_determinism_and_persistence),
];

const TRAINING: &[Criterion] = &[
    ("3", criterion_03_braking_feasible_region_recovery),
    ("4 and 5", criterion_04_05_navigation_statewise_vs_expectation),
];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let has = |flag: &str| args.iter().any(|a| a == flag);
    // `cargo test -- --list` and friends expect a quiet exit
    if has("--list") {
        return ExitCode::SUCCESS;
    }
    let only_training = has("--ignored");
    let with_training = only_training || has("--include-ignored");

    let mut failed = Vec::new();
    let mut selected: Vec<&Criterion> = Vec::new();
    if !only_training {
        selected.extend(FAST);
    }
    if with_training {
        selected.extend(TRAINING);
    } else {
        for (n, _) in TRAINING {
            println!("criterion {n}: SKIPPED (trains agents; pass --include-ignored)");
        }
    }
    // bare numbers pick criteria, e.g. `-- --include-ignored 3 8`
    let picks: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if !picks.is_empty() {
        selected.retain(|(n, _)| picks.iter().any(|p| n.split(" and ").any(|x| x == p.as_str())));
    }
    for (n, f) in selected {
        if !f() {
            failed.push(*n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
