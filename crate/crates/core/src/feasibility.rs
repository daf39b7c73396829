//! Feasibility verdicts read off the trained multiplier.
//!
//! Multiplier magnitude is sorted into three bands: zero (constraint
//! inactive, inside the feasible region), finite (constraint active) and
//! "infinite" (beyond a heuristic threshold, infeasible region).

use std::fmt;
use std::str::FromStr;

use crate::envs::GridEnvironment;
use crate::error::{FacError, Result};
use crate::learner::LearnerState;
use crate::policy::SquashedGaussian;
use crate::replay::concat_rows;

pub const DEFAULT_THR_ZERO: f64 = 0.05;
pub const DEFAULT_THR_INF: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeasibilityClass {
    Inactive,
    Active,
    Infeasible,
}

impl FeasibilityClass {
    pub fn code(self) -> char {
        match self {
            FeasibilityClass::Inactive => 'I',
            FeasibilityClass::Active => 'A',
            FeasibilityClass::Infeasible => 'X',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "I" => Some(FeasibilityClass::Inactive),
            "A" => Some(FeasibilityClass::Active),
            "X" => Some(FeasibilityClass::Infeasible),
            _ => None,
        }
    }
}

pub fn classify(lambda: f64, thr_zero: f64, thr_inf: f64) -> Result<FeasibilityClass> {
    if !(lambda >= 0.0) {
        return Err(FacError::InvalidArgument(format!("multiplier {lambda} is negative")));
    }
    if !(thr_zero >= 0.0 && thr_zero < thr_inf) {
        return Err(FacError::InvalidArgument(format!(
            "thresholds need 0 <= thr_zero < thr_inf, got {thr_zero}, {thr_inf}"
        )));
    }
    Ok(if lambda <= thr_zero {
        FeasibilityClass::Inactive
    } else if lambda >= thr_inf {
        FeasibilityClass::Infeasible
    } else {
        FeasibilityClass::Active
    })
}

/// Scale at which a multiplier counts as infinite: the ratio of the mean
/// objective-gradient norm to the mean constraint-gradient norm.
pub fn infinity_threshold(mean_grad_norm_objective: f64, mean_grad_norm_constraint: f64) -> Result<f64> {
    if !(mean_grad_norm_constraint > 0.0) || !mean_grad_norm_objective.is_finite() {
        return Err(FacError::InvalidArgument(
            "degenerate infinity threshold: constraint gradient norm is zero".into(),
        ));
    }
    Ok(mean_grad_norm_objective / mean_grad_norm_constraint)
}

/// Mean policy-gradient norms of `min(Q1,Q2)(s, π(s))` and `Q_C(s, π(s))`
/// over probe states, with `π(s)` the deterministic mean action.
pub fn probe_gradient_norms(learner: &LearnerState, states: &[f64], n: usize) -> Result<(f64, f64)> {
    let obs_dim = learner.obs_dim;
    let k = learner.action_dim;
    if n == 0 || states.len() < n * obs_dim {
        return Err(FacError::DimensionMismatch {
            expected: n.max(1) * obs_dim,
            got: states.len(),
        });
    }
    let mut obj = 0.0;
    let mut con = 0.0;
    for s in states.chunks_exact(obs_dim).take(n) {
        let tape = learner.policy.forward_batch(s, 1)?;
        let action = SquashedGaussian::from_output(tape.output()).mode();
        let sa = concat_rows(s, obs_dim, &action, k);
        let critic = if learner.q1.forward(&sa)?[0] <= learner.q2.forward(&sa)?[0] {
            &learner.q1
        } else {
            &learner.q2
        };
        for (net, acc) in [(critic, &mut obj), (&learner.qc, &mut con)] {
            let (_, dx) = net.backward(&net.forward_batch(&sa, 1)?, &[1.0])?;
            // d tanh(mean)/d mean = 1 - a^2; log-std outputs get no gradient
            let mut grad_out = vec![0.0; 2 * k];
            for i in 0..k {
                grad_out[i] = dx[obs_dim + i] * (1.0 - action[i] * action[i]);
            }
            let (g, _) = learner.policy.backward(&tape, &grad_out)?;
            *acc += g.0.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
    }
    Ok((obj / n as f64, con / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Axis {
    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.step
    }
}

/// Regular grid of cells; each cell is evaluated at its center.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(FacError::GridMismatch("grid needs at least one axis".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if !(a.step > 0.0) || !(a.max > a.min) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(FacError::GridMismatch(format!("axis {i}: {}:{}:{}", a.min, a.max, a.step)));
            }
            let span = a.max - a.min;
            let covered = a.count() as f64 * a.step;
            if a.count() == 0 || (covered - span).abs() > 1e-9 * span.max(1.0) {
                return Err(FacError::GridMismatch(format!(
                    "axis {i}: step {} does not tile [{}, {}]",
                    a.step, a.min, a.max
                )));
            }
        }
        Ok(GridSpec { axes })
    }

    /// Braking evaluation grid: distance and speed over `[0, 10]` at 0.1 resolution.
    pub fn braking_default() -> Self {
        let axis = Axis {
            min: 0.0,
            max: 10.0,
            step: 0.1,
        };
        GridSpec { axes: vec![axis, axis] }
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::count).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(Axis::count).product()
    }

    /// Center of cell `index` (row-major, last axis fastest).
    pub fn center(&self, mut index: usize) -> Vec<f64> {
        let mut coords = vec![0.0; self.axes.len()];
        for (i, a) in self.axes.iter().enumerate().rev() {
            let n = a.count();
            coords[i] = a.center(index % n);
            index /= n;
        }
        coords
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.num_cells()).map(move |i| self.center(i))
    }
}

impl FromStr for GridSpec {
    type Err = FacError;

    /// `MIN:MAX:STEP[,MIN:MAX:STEP...]`
    fn from_str(s: &str) -> Result<Self> {
        let axes = s
            .split(',')
            .map(|part| {
                let nums: Vec<f64> = part
                    .split(':')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| FacError::GridMismatch(format!("cannot parse axis `{part}`")))?;
                match nums[..] {
                    [min, max, step] => Ok(Axis { min, max, step }),
                    _ => Err(FacError::GridMismatch(format!("axis `{part}` is not MIN:MAX:STEP"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        GridSpec::new(axes)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.axes.iter().map(|a| format!("{}:{}:{}", a.min, a.max, a.step)).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A subset of grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSet {
    pub grid: GridSpec,
    pub members: Vec<bool>,
}

impl CellSet {
    pub fn from_predicate(grid: &GridSpec, mut pred: impl FnMut(&[f64]) -> bool) -> Self {
        let members = grid.centers().map(|c| pred(&c)).collect();
        CellSet {
            grid: grid.clone(),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn complement(&self) -> Self {
        CellSet {
            grid: self.grid.clone(),
            members: self.members.iter().map(|m| !m).collect(),
        }
    }
}

/// Intersection over union; 1 when both sets are empty.
pub fn iou(predicted: &CellSet, reference: &CellSet) -> Result<f64> {
    if predicted.grid != reference.grid || predicted.members.len() != reference.members.len() {
        return Err(FacError::GridMismatch("iou over different grids".into()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in predicted.members.iter().zip(&reference.members) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityMap {
    pub grid: GridSpec,
    pub thr_zero: f64,
    pub thr_inf: f64,
    pub lambdas: Vec<f64>,
    pub cost_values: Vec<f64>,
    pub classes: Vec<FeasibilityClass>,
}

const MAP_MAGIC: &str = "fac-feasmap 1";

impl FeasibilityMap {
    pub fn cells_of(&self, class: FeasibilityClass) -> CellSet {
        CellSet {
            grid: self.grid.clone(),
            members: self.classes.iter().map(|&c| c == class).collect(),
        }
    }

    pub fn count(&self, class: FeasibilityClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(32 * self.lambdas.len() + 128);
        out.push_str(MAP_MAGIC);
        out.push('\n');
        out.push_str(&format!("grid {}\n", self.grid));
        out.push_str(&format!("thresholds {} {}\n", self.thr_zero, self.thr_inf));
        out.push_str(&format!("cells {}\n", self.lambdas.len()));
        for i in 0..self.lambdas.len() {
            out.push_str(&format!(
                "{} {} {}\n",
                self.lambdas[i],
                self.cost_values[i],
                self.classes[i].code()
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| FacError::Parse {
                line: 0,
                message: format!("missing {what}"),
            })
        };
        let perr = |line: usize, message: String| FacError::Parse { line: line + 1, message };
        let (l, magic) = next("header")?;
        if magic.trim() != MAP_MAGIC {
            return Err(perr(l, format!("expected `{MAP_MAGIC}`")));
        }
        let (l, grid_line) = next("grid")?;
        let grid: GridSpec = grid_line
            .strip_prefix("grid ")
            .ok_or_else(|| perr(l, "expected `grid`".into()))?
            .parse()?;
        let (l, thr_line) = next("thresholds")?;
        let thr: Vec<f64> = thr_line
            .strip_prefix("thresholds ")
            .ok_or_else(|| perr(l, "expected `thresholds`".into()))?
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(l, format!("{e}")))?;
        if thr.len() != 2 {
            return Err(perr(l, "thresholds takes two numbers".into()));
        }
        let (l, cells_line) = next("cells")?;
        let n: usize = cells_line
            .strip_prefix("cells ")
            .and_then(|x| x.trim().parse().ok())
            .ok_or_else(|| perr(l, "expected `cells N`".into()))?;
        if n != grid.num_cells() {
            return Err(perr(l, format!("{n} cells but grid has {}", grid.num_cells())));
        }
        let mut lambdas = Vec::with_capacity(n);
        let mut cost_values = Vec::with_capacity(n);
        let mut classes = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, row) = next("cell row")?;
            let parts: Vec<&str> = row.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(perr(l, "cell rows are `lambda cost_value class`".into()));
            }
            lambdas.push(parts[0].parse().map_err(|e| perr(l, format!("{e}")))?);
            cost_values.push(parts[1].parse().map_err(|e| perr(l, format!("{e}")))?);
            classes.push(FeasibilityClass::from_code(parts[2]).ok_or_else(|| perr(l, format!("class `{}`", parts[2])))?);
        }
        Ok(FeasibilityMap {
            grid,
            thr_zero: thr[0],
            thr_inf: thr[1],
            lambdas,
            cost_values,
            classes,
        })
    }
}

/// Multiplier, cost value and class at every cell center.
pub fn build_map<E: GridEnvironment + ?Sized>(
    learner: &LearnerState,
    grid: &GridSpec,
    env: &E,
    thr_zero: f64,
    thr_inf: f64,
) -> Result<FeasibilityMap> {
    if grid.dims() != env.grid_dim() {
        return Err(FacError::GridMismatch(format!(
            "grid has {} axes, environment state has {}",
            grid.dims(),
            env.grid_dim()
        )));
    }
    if env.obs_dim() != learner.obs_dim {
        return Err(FacError::GridMismatch("environment encoding does not match the learner".into()));
    }
    let n = grid.num_cells();
    let states: Vec<f64> = grid.centers().flat_map(|c| env.encode(&c)).collect();
    let lambdas = learner.multiplier_values(&states, n)?;
    let cost_values = learner.cost_values(&states, n)?;
    let classes = lambdas
        .iter()
        .map(|&l| classify(l, thr_zero, thr_inf))
        .collect::<Result<Vec<_>>>()?;
    Ok(FeasibilityMap {
        grid: grid.clone(),
        thr_zero,
        thr_inf,
        lambdas,
        cost_values,
        classes,
    })
}

/// Cells from which no rollout exceeds discounted cost `d`.
#[allow(clippy::too_many_arguments)]
pub fn rollout_violation_map<E, P>(
    mut policy: P,
    env: &mut E,
    grid: &GridSpec,
    episodes_per_cell: usize,
    gamma_c: f64,
    d: f64,
    max_steps: usize,
) -> Result<CellSet>
where
    E: GridEnvironment + ?Sized,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if episodes_per_cell == 0 {
        return Err(FacError::InvalidArgument("episodes_per_cell must be at least 1".into()));
    }
    if grid.dims() != env.grid_dim() {
        return Err(FacError::GridMismatch("grid does not match environment state".into()));
    }
    let mut members = Vec::with_capacity(grid.num_cells());
    for center in grid.centers() {
        let mut safe = true;
        'episodes: for _ in 0..episodes_per_cell {
            let mut obs = env.set_state(&center);
            let mut discounted = 0.0;
            let mut weight = 1.0;
            for _ in 0..max_steps {
                let action = policy(&obs)?;
                let step = env.step(&action);
                discounted += weight * step.cost;
                weight *= gamma_c;
                if discounted > d + 1e-12 {
                    safe = false;
                    break 'episodes;
                }
                if step.done {
                    break;
                }
                obs = step.obs;
            }
        }
        members.push(safe);
    }
    Ok(CellSet {
        grid: grid.clone(),
        members,
    })
}
