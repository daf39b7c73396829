//! The `train`, `eval`, `feasmap` and `oracle` commands as library calls.
//! Each returns a printable report; the binary only parses arguments.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::{RunConfig, Task};
use crate::envs::{braking_analytic_feasible, BrakingState};
use crate::error::{FacError, Result};
use crate::feasibility::{
    build_map, infinity_threshold, iou, probe_gradient_norms, rollout_violation_map, CellSet, FeasibilityClass,
    FeasibilityMap, GridSpec,
};
use crate::metrics::MetricsRow;
use crate::oracle::{analyze, OracleReport, TabularCmdp};
use crate::plot;
use crate::policy::mean_action;
use crate::trainer::{episodes_csv, evaluate, streams, substream, summarize, EvalSummary, TaskEnv, Trainer};

pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
}

impl fmt::Display for TrainOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "output: {}", self.out_dir.display())?;
        if let Some(r) = self.rows.last() {
            writeln!(
                f,
                "final: env_step={} return={} c_rate={} dangerous={} alpha={}",
                r.env_step, r.episode_return, r.c_rate, r.dangerous_episodes, r.alpha
            )?;
        }
        Ok(())
    }
}

pub fn cmd_train(mut config: RunConfig, seed: Option<u64>, out: Option<&Path>) -> Result<TrainOutcome> {
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| config.output_dir.clone());
    config.output_dir = out_dir.clone();
    let mut trainer = Trainer::new(config)?;
    let rows = trainer.run(Some(&out_dir))?;
    Ok(TrainOutcome { out_dir, rows })
}

pub struct EvalOutcome {
    pub summary: EvalSummary,
    pub episodes: usize,
    pub csv_path: Option<PathBuf>,
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes: {}", self.episodes)?;
        writeln!(f, "mean_return: {}", self.summary.mean_return)?;
        writeln!(f, "mean_c_rate: {}", self.summary.mean_c_rate)?;
        writeln!(f, "dangerous_episodes: {}", self.summary.dangerous)?;
        if let Some(p) = &self.csv_path {
            writeln!(f, "episodes_csv: {}", p.display())?;
        }
        Ok(())
    }
}

/// Deterministic evaluation of a checkpoint; reset seeds come from the run's evaluation stream.
pub fn cmd_eval(checkpoint: &Path, episodes: usize, out: Option<&Path>) -> Result<EvalOutcome> {
    let ck = Checkpoint::load(checkpoint)?;
    let cfg = &ck.config;
    let mut env = TaskEnv::build(cfg)?;
    let mut rng = substream(cfg.seed, streams::EVAL);
    let stats = evaluate(
        &ck.learner.policy,
        &mut env,
        episodes,
        cfg.fac.max_episode_len,
        cfg.dangerous_rate,
        &mut rng,
    )?;
    let csv_path = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let p = dir.join("episodes.csv");
            write_atomic(&p, episodes_csv(&stats).as_bytes())?;
            Some(p)
        }
        None => None,
    };
    Ok(EvalOutcome {
        summary: summarize(&stats),
        episodes: stats.len(),
        csv_path,
    })
}

pub struct FeasmapOutcome {
    pub map: FeasibilityMap,
    pub counts: [usize; 3],
    /// Multiplier-Infeasible cells against the analytic infeasible set (braking only).
    pub iou_infeasible: Option<f64>,
    /// Rollout-unsafe cells against the analytic infeasible set (braking only).
    pub iou_rollout: Option<f64>,
    /// Gradient-norm ratio estimate of the infinity threshold, when defined.
    pub computed_thr_inf: Option<f64>,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for FeasmapOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "grid: {} ({} cells)", self.map.grid, self.map.grid.num_cells())?;
        writeln!(
            f,
            "inactive: {} active: {} infeasible: {}",
            self.counts[0], self.counts[1], self.counts[2]
        )?;
        let show = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into());
        writeln!(f, "iou_infeasible_vs_analytic: {}", show(self.iou_infeasible))?;
        writeln!(f, "iou_rollout_unsafe_vs_analytic: {}", show(self.iou_rollout))?;
        writeln!(f, "computed_thr_inf: {}", show(self.computed_thr_inf))?;
        for p in &self.files {
            writeln!(f, "wrote: {}", p.display())?;
        }
        Ok(())
    }
}

/// Cells with `v² > 2·a_max·d`: no braking profile avoids the collision.
pub fn braking_analytic_infeasible(grid: &GridSpec) -> CellSet {
    CellSet::from_predicate(grid, |c| {
        !braking_analytic_feasible(BrakingState {
            distance: c[0],
            velocity: c[1],
        })
    })
}

/// Map, heatmaps and (for braking) agreement with the analytic region.
pub fn cmd_feasmap(checkpoint: &Path, grid: Option<&GridSpec>, out: Option<&Path>) -> Result<FeasmapOutcome> {
    let ck = Checkpoint::load(checkpoint)?;
    feasmap_for(&ck, grid, out)
}

pub fn default_grid(task: Task, env: &TaskEnv) -> Result<GridSpec> {
    match (task, env) {
        (Task::Braking, _) => Ok(GridSpec::braking_default()),
        (Task::Tabular, TaskEnv::Tabular(e)) => format!("0:{}:1", e.cmdp.n_states).parse(),
        _ => Err(FacError::GridMismatch(format!("task {} has no state grid", task.name()))),
    }
}

pub fn feasmap_for(ck: &Checkpoint, grid: Option<&GridSpec>, out: Option<&Path>) -> Result<FeasmapOutcome> {
    let cfg = &ck.config;
    let mut env = TaskEnv::build(cfg)?;
    let grid = match grid {
        Some(g) => g.clone(),
        None => default_grid(cfg.task, &env)?,
    };
    let learner = &ck.learner;
    let grid_env = env
        .as_grid()
        .ok_or_else(|| FacError::GridMismatch(format!("task {} has no state grid", cfg.task.name())))?;
    let map = build_map(learner, &grid, grid_env, cfg.thr_zero, cfg.thr_inf)?;
    let counts = [
        map.count(FeasibilityClass::Inactive),
        map.count(FeasibilityClass::Active),
        map.count(FeasibilityClass::Infeasible),
    ];

    let n = grid.num_cells();
    let states: Vec<f64> = grid.centers().flat_map(|c| grid_env.encode(&c)).collect();
    let computed_thr_inf = probe_gradient_norms(learner, &states, n)
        .and_then(|(o, c)| infinity_threshold(o, c))
        .ok();

    let (mut iou_infeasible, mut iou_rollout) = (None, None);
    if cfg.task == Task::Braking {
        let analytic = braking_analytic_infeasible(&grid);
        iou_infeasible = Some(iou(&map.cells_of(FeasibilityClass::Infeasible), &analytic)?);
        let safe = rollout_violation_map(
            |obs| mean_action(&learner.policy, obs),
            grid_env,
            &grid,
            1,
            cfg.fac.gamma_c,
            cfg.fac.threshold,
            cfg.fac.max_episode_len,
        )?;
        iou_rollout = Some(iou(&safe.complement(), &analytic)?);
    }

    let mut files = Vec::new();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let text = dir.join("feasmap.txt");
        write_atomic(&text, map.to_text().as_bytes())?;
        files.push(text);
        let classes = dir.join("feasmap_classes.png");
        plot::class_heatmap(&classes, &map, 4)?;
        files.push(classes);
        let lambdas = dir.join("feasmap_lambda.png");
        plot::lambda_heatmap(&lambdas, &map, 4)?;
        files.push(lambdas);
    }
    Ok(FeasmapOutcome {
        map,
        counts,
        iou_infeasible,
        iou_rollout,
        computed_thr_inf,
        files,
    })
}

pub fn cmd_oracle(cmdp_path: &Path) -> Result<OracleReport> {
    let cmdp = TabularCmdp::parse(&std::fs::read_to_string(cmdp_path)?)?;
    analyze(&cmdp)
}
