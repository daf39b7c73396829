//! Finite CMDPs solved exactly by enumerating deterministic stationary policies.
//!
//! This is the ground truth for feasible/infeasible regions and for the
//! statewise-versus-expectation comparisons. Everything here is pure.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{FacError, Result};

/// Largest number of deterministic policies we are willing to enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Slack used in every `v_C <= d` comparison.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const ROW_SUM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularCmdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']`
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub gamma: f64,
    pub gamma_c: f64,
    pub threshold: f64,
    pub initial: Vec<f64>,
}

/// Deterministic stationary policy: one action index per state.
pub type DeterministicPolicy = Vec<usize>;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValues {
    pub policy: DeterministicPolicy,
    pub v: Vec<f64>,
    pub v_c: Vec<f64>,
}

impl PolicyValues {
    pub fn objective(&self, cmdp: &TabularCmdp) -> f64 {
        dot(&cmdp.initial, &self.v)
    }

    pub fn expected_cost(&self, cmdp: &TabularCmdp) -> f64 {
        dot(&cmdp.initial, &self.v_c)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl TabularCmdp {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FacError::InvalidArgument(m));
        if self.n_states == 0 || self.n_actions == 0 {
            return bad("cmdp needs at least one state and one action".into());
        }
        let shape_ok = self.transition.len() == self.n_states
            && self.transition.iter().all(|row| {
                row.len() == self.n_actions && row.iter().all(|p| p.len() == self.n_states)
            })
            && [&self.reward, &self.cost]
                .iter()
                .all(|t| t.len() == self.n_states && t.iter().all(|r| r.len() == self.n_actions))
            && self.initial.len() == self.n_states;
        if !shape_ok {
            return Err(FacError::ShapeMismatch("cmdp tables disagree with n_states/n_actions".into()));
        }
        for (s, row) in self.transition.iter().enumerate() {
            for (a, p) in row.iter().enumerate() {
                if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                    return bad(format!("P[{s}][{a}] has a negative or non-finite entry"));
                }
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return bad(format!("P[{s}][{a}] sums to {sum}"));
                }
            }
        }
        if self.cost.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return bad("costs must be finite and nonnegative".into());
        }
        if self.reward.iter().flatten().any(|r| !r.is_finite()) {
            return bad("rewards must be finite".into());
        }
        for (name, g) in [("gamma", self.gamma), ("gamma_c", self.gamma_c)] {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("{name} = {g} outside (0, 1)"));
            }
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite".into());
        }
        if self.initial.iter().any(|x| !(*x >= 0.0)) {
            return bad("initial distribution has a negative entry".into());
        }
        let mass: f64 = self.initial.iter().sum();
        if (mass - 1.0).abs() > ROW_SUM_TOL {
            return bad(format!("initial distribution sums to {mass}"));
        }
        Ok(())
    }

    /// States with positive initial probability.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| self.initial[s] > 0.0).collect()
    }

    pub fn num_deterministic_policies(&self) -> u128 {
        (self.n_actions as u128).saturating_pow(self.n_states as u32)
    }

    pub fn deterministic_to_stochastic(&self, policy: &[usize]) -> Vec<Vec<f64>> {
        policy
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; self.n_actions];
                row[a] = 1.0;
                row
            })
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).cmdp()
    }

    /// Plain-text form accepted by [`TabularCmdp::parse`]; round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let line = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(out, "n_states {}", self.n_states);
        let _ = writeln!(out, "n_actions {}", self.n_actions);
        let _ = writeln!(out, "P");
        for row in &self.transition {
            for p in row {
                let _ = writeln!(out, "{}", line(p));
            }
        }
        let _ = writeln!(out, "r");
        for r in &self.reward {
            let _ = writeln!(out, "{}", line(r));
        }
        let _ = writeln!(out, "c");
        for c in &self.cost {
            let _ = writeln!(out, "{}", line(c));
        }
        let _ = writeln!(out, "gamma {}", self.gamma);
        let _ = writeln!(out, "gamma_c {}", self.gamma_c);
        let _ = writeln!(out, "d {}", self.threshold);
        let _ = writeln!(out, "d0");
        let _ = writeln!(out, "{}", line(&self.initial));
        out
    }
}

struct Parser<'a> {
    tokens: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| {
                let l = l.split('#').next().unwrap_or("");
                l.split_whitespace().map(move |t| (i + 1, t))
            })
            .collect();
        Parser { tokens, pos: 0 }
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| t.0)
            .unwrap_or(0)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(FacError::Parse {
            line: self.line(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.tokens.get(self.pos) {
            Some(&(_, t)) => {
                self.pos += 1;
                Ok(t)
            }
            None => self.err("unexpected end of input"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.next()?;
        if t == kw {
            Ok(())
        } else {
            self.pos -= 1;
            self.err(format!("expected `{kw}`, found `{t}`"))
        }
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse::<f64>().or_else(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found `{t}`"))
        })
    }

    fn count(&mut self) -> Result<usize> {
        let t = self.next()?;
        t.parse::<usize>().or_else(|_| {
            self.pos -= 1;
            self.err(format!("expected a positive integer, found `{t}`"))
        })
    }

    fn row(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.number()).collect()
    }

    fn cmdp(mut self) -> Result<TabularCmdp> {
        self.keyword("n_states")?;
        let n_states = self.count()?;
        self.keyword("n_actions")?;
        let n_actions = self.count()?;
        if n_states == 0 || n_actions == 0 {
            return self.err("n_states and n_actions must be positive");
        }
        self.keyword("P")?;
        let mut transition = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut per_action = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                per_action.push(self.row(n_states)?);
            }
            transition.push(per_action);
        }
        self.keyword("r")?;
        let reward = (0..n_states).map(|_| self.row(n_actions)).collect::<Result<_>>()?;
        self.keyword("c")?;
        let cost = (0..n_states).map(|_| self.row(n_actions)).collect::<Result<_>>()?;
        self.keyword("gamma")?;
        let gamma = self.number()?;
        self.keyword("gamma_c")?;
        let gamma_c = self.number()?;
        self.keyword("d")?;
        let threshold = self.number()?;
        self.keyword("d0")?;
        let initial = self.row(n_states)?;
        if self.pos != self.tokens.len() {
            return self.err("trailing tokens after d0");
        }
        let cmdp = TabularCmdp {
            n_states,
            n_actions,
            transition,
            reward,
            cost,
            gamma,
            gamma_c,
            threshold,
            initial,
        };
        cmdp.validate()?;
        Ok(cmdp)
    }
}

fn solve_discounted(p_pi: &DMatrix<f64>, rhs: &DVector<f64>, discount: f64) -> Result<DVector<f64>> {
    let n = rhs.len();
    let a = DMatrix::<f64>::identity(n, n) - p_pi * discount;
    let lu = a.clone().lu();
    let mut x = lu
        .solve(rhs)
        .ok_or_else(|| FacError::numeric("singular Bellman system"))?;
    // one round of iterative refinement keeps the residual well under tolerance
    for _ in 0..2 {
        let r = rhs - &a * &x;
        if r.amax() < RESIDUAL_TOL * 1e-2 {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    let residual = (rhs - &a * &x).amax();
    if !(residual < RESIDUAL_TOL) {
        return Err(FacError::numeric(format!("Bellman residual {residual:e}")));
    }
    Ok(x)
}

/// Exact `v` and `v_C` of a stationary (possibly stochastic) policy.
pub fn exact_policy_eval(cmdp: &TabularCmdp, policy: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, m) = (cmdp.n_states, cmdp.n_actions);
    if policy.len() != n || policy.iter().any(|row| row.len() != m) {
        return Err(FacError::ShapeMismatch("policy table shape".into()));
    }
    for (s, row) in policy.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(FacError::InvalidArgument(format!("policy row {s} is not a distribution")));
        }
    }
    let mut p_pi = DMatrix::<f64>::zeros(n, n);
    let mut r_pi = DVector::<f64>::zeros(n);
    let mut c_pi = DVector::<f64>::zeros(n);
    for s in 0..n {
        for a in 0..m {
            let w = policy[s][a];
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * cmdp.reward[s][a];
            c_pi[s] += w * cmdp.cost[s][a];
            for s2 in 0..n {
                p_pi[(s, s2)] += w * cmdp.transition[s][a][s2];
            }
        }
    }
    let v = solve_discounted(&p_pi, &r_pi, cmdp.gamma)?;
    let v_c = solve_discounted(&p_pi, &c_pi, cmdp.gamma_c)?;
    Ok((v.iter().copied().collect(), v_c.iter().copied().collect()))
}

pub fn evaluate_deterministic(cmdp: &TabularCmdp, policy: &[usize]) -> Result<PolicyValues> {
    if policy.iter().any(|&a| a >= cmdp.n_actions) {
        return Err(FacError::InvalidArgument("action index out of range".into()));
    }
    let (v, v_c) = exact_policy_eval(cmdp, &cmdp.deterministic_to_stochastic(policy))?;
    Ok(PolicyValues {
        policy: policy.to_vec(),
        v,
        v_c,
    })
}

/// Values of every deterministic stationary policy, in lexicographic order
/// of the action vector (state 0 varies slowest).
pub fn enumerate_policies(cmdp: &TabularCmdp) -> Result<Vec<PolicyValues>> {
    let needed = cmdp.num_deterministic_policies();
    if needed > ENUMERATION_LIMIT {
        return Err(FacError::Capacity {
            needed,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::with_capacity(needed as usize);
    let mut policy = vec![0usize; cmdp.n_states];
    loop {
        out.push(evaluate_deterministic(cmdp, &policy)?);
        // odometer increment, last state fastest
        let mut i = cmdp.n_states;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            policy[i] += 1;
            if policy[i] < cmdp.n_actions {
                break;
            }
            policy[i] = 0;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasibleRegion {
    pub feasible: Vec<usize>,
    pub infeasible: Vec<usize>,
}

impl FeasibleRegion {
    pub fn is_feasible(&self, s: usize) -> bool {
        self.feasible.contains(&s)
    }
}

fn region_from(cmdp: &TabularCmdp, all: &[PolicyValues]) -> FeasibleRegion {
    let d = cmdp.threshold;
    let (feasible, infeasible) = (0..cmdp.n_states)
        .partition(|&s| all.iter().any(|p| p.v_c[s] <= d + FEASIBILITY_TOL));
    FeasibleRegion { feasible, infeasible }
}

/// States that some policy keeps within the cost threshold, and the rest.
pub fn enumerate_feasible_region(cmdp: &TabularCmdp) -> Result<FeasibleRegion> {
    Ok(region_from(cmdp, &enumerate_policies(cmdp)?))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Optimal { policy: DeterministicPolicy, objective: f64 },
    Infeasible,
}

impl SolveOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            SolveOutcome::Optimal { objective, .. } => Some(*objective),
            SolveOutcome::Infeasible => None,
        }
    }

    pub fn policy(&self) -> Option<&[usize]> {
        match self {
            SolveOutcome::Optimal { policy, .. } => Some(policy),
            SolveOutcome::Infeasible => None,
        }
    }
}

fn best_of<'a>(cmdp: &TabularCmdp, candidates: impl Iterator<Item = &'a PolicyValues>) -> SolveOutcome {
    let mut best: Option<(&PolicyValues, f64)> = None;
    for p in candidates {
        let j = p.objective(cmdp);
        if best.map_or(true, |(_, bj)| j > bj) {
            best = Some((p, j));
        }
    }
    match best {
        Some((p, j)) => SolveOutcome::Optimal {
            policy: p.policy.clone(),
            objective: j,
        },
        None => SolveOutcome::Infeasible,
    }
}

/// Statewise-feasible on `supp(d0) ∩ S_F`.
pub fn statewise_feasible(cmdp: &TabularCmdp, region: &FeasibleRegion, p: &PolicyValues) -> bool {
    cmdp.support()
        .into_iter()
        .filter(|s| region.is_feasible(*s))
        .all(|s| p.v_c[s] <= cmdp.threshold + FEASIBILITY_TOL)
}

pub fn expectation_feasible(cmdp: &TabularCmdp, p: &PolicyValues) -> bool {
    p.expected_cost(cmdp) <= cmdp.threshold + FEASIBILITY_TOL
}

/// Best objective among policies satisfying the cost threshold at every
/// feasible initial state.
pub fn solve_statewise_optimal(cmdp: &TabularCmdp) -> Result<SolveOutcome> {
    let all = enumerate_policies(cmdp)?;
    let region = region_from(cmdp, &all);
    Ok(solve_statewise_from(cmdp, &region, &all))
}

fn solve_statewise_from(cmdp: &TabularCmdp, region: &FeasibleRegion, all: &[PolicyValues]) -> SolveOutcome {
    best_of(cmdp, all.iter().filter(|p| statewise_feasible(cmdp, region, p)))
}

/// Best objective among policies whose expected initial cost meets the threshold.
pub fn solve_expected_optimal(cmdp: &TabularCmdp) -> Result<SolveOutcome> {
    let all = enumerate_policies(cmdp)?;
    Ok(best_of(cmdp, all.iter().filter(|p| expectation_feasible(cmdp, p))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

/// Discounted-value threshold equivalent to a per-step cost rate.
///
/// The result is rounded to 12 significant digits: rates and discounts are
/// decimal quantities, and the raw binary quotient `0.1 / (1 - 0.99)` lands
/// a few ulps below 10.
pub fn rate_to_value_threshold(d_rate: f64, gamma_c: f64, horizon: Horizon) -> f64 {
    let raw = match horizon {
        Horizon::Infinite => d_rate / (1.0 - gamma_c),
        Horizon::Finite(n) => d_rate * (1.0 - gamma_c.powf(n as f64)) / (1.0 - gamma_c),
    };
    round_significant(raw, 12)
}

fn round_significant(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Five-state chain with one absorbing costly state (index 4) that no
/// policy can keep within the threshold. States 0..=3 are feasible; state 3
/// offers a rewarding action that risks falling into state 4.
pub fn hazard_chain_cmdp() -> TabularCmdp {
    let n = 5;
    let unit = |to: usize| {
        let mut row = vec![0.0; n];
        row[to] = 1.0;
        row
    };
    let mut risky = vec![0.0; n];
    risky[3] = 0.5;
    risky[4] = 0.5;
    TabularCmdp {
        n_states: n,
        n_actions: 2,
        transition: vec![
            vec![unit(0), unit(0)],
            vec![unit(0), unit(1)],
            vec![unit(0), unit(2)],
            vec![unit(0), risky],
            vec![unit(4), unit(4)],
        ],
        reward: vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.0, 0.5], vec![0.0, 1.0], vec![0.0, 0.0]],
        cost: vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]],
        gamma: 0.9,
        gamma_c: 0.9,
        threshold: 2.0,
        initial: vec![0.2; n],
    }
}

/// Everything the `oracle` command reports about one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub region: FeasibleRegion,
    pub statewise: SolveOutcome,
    pub expected: SolveOutcome,
    /// Present when `supp(d0) ⊆ S_F`: statewise-feasible policies that break the expectation constraint.
    pub containment_counterexamples: Option<Vec<DeterministicPolicy>>,
    pub statewise_policy_count: usize,
    pub expected_policy_count: usize,
}

impl OracleReport {
    pub fn containment_holds(&self) -> Option<bool> {
        self.containment_counterexamples.as_ref().map(Vec::is_empty)
    }

    /// `J_stw >= J_exp - tol` when both solvers found a policy.
    pub fn objective_bound_holds(&self, tol: f64) -> Option<bool> {
        match (self.statewise.objective(), self.expected.objective()) {
            (Some(s), Some(e)) => Some(s >= e - tol),
            _ => None,
        }
    }
}

pub fn analyze(cmdp: &TabularCmdp) -> Result<OracleReport> {
    let all = enumerate_policies(cmdp)?;
    let region = region_from(cmdp, &all);
    let statewise = solve_statewise_from(cmdp, &region, &all);
    let expected = best_of(cmdp, all.iter().filter(|p| expectation_feasible(cmdp, p)));
    let support_feasible = cmdp.support().iter().all(|s| region.is_feasible(*s));
    let stw_count = all.iter().filter(|p| statewise_feasible(cmdp, &region, p)).count();
    let exp_count = all.iter().filter(|p| expectation_feasible(cmdp, p)).count();
    let containment_counterexamples = support_feasible.then(|| {
        all.iter()
            .filter(|p| statewise_feasible(cmdp, &region, p) && !expectation_feasible(cmdp, p))
            .map(|p| p.policy.clone())
            .collect()
    });
    Ok(OracleReport {
        region,
        statewise,
        expected,
        containment_counterexamples,
        statewise_policy_count: stw_count,
        expected_policy_count: exp_count,
    })
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "feasible_states: {:?}", self.region.feasible)?;
        writeln!(f, "infeasible_states: {:?}", self.region.infeasible)?;
        let outcome = |o: &SolveOutcome| match o {
            SolveOutcome::Optimal { policy, objective } => format!("{objective} policy={policy:?}"),
            SolveOutcome::Infeasible => "infeasible".to_string(),
        };
        writeln!(f, "j_statewise: {}", outcome(&self.statewise))?;
        writeln!(f, "j_expected: {}", outcome(&self.expected))?;
        writeln!(
            f,
            "policies: statewise_feasible={} expectation_feasible={}",
            self.statewise_policy_count, self.expected_policy_count
        )?;
        let verdict = |v: Option<bool>| match v {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        };
        writeln!(f, "statewise_subset_of_expected: {}", verdict(self.containment_holds()))?;
        write!(f, "j_statewise_ge_j_expected: {}", verdict(self.objective_bound_holds(1e-9)))
    }
}

/// Random instance for property checks. Costs are sparse and the threshold
/// sits inside the attainable range, so constraints usually bind.
pub fn random_cmdp<R: Rng + ?Sized>(rng: &mut R, max_states: usize, max_actions: usize) -> TabularCmdp {
    let n_states = rng.gen_range(2..=max_states.max(2));
    let n_actions = rng.gen_range(2..=max_actions.max(2));
    let simplex = |rng: &mut R, n: usize| {
        let w: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-6f64..1.0).ln()).collect();
        let total: f64 = w.iter().sum();
        let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
        // put the rounding remainder on the largest entry so the row sums to 1 exactly enough
        let err = 1.0 - p.iter().sum::<f64>();
        let imax = (0..n).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
        p[imax] += err;
        p
    };
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| simplex(rng, n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    let cost = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..1.0) })
                .collect()
        })
        .collect();
    let gamma_c = 0.9;
    let support = rng.gen_range(1..=n_states);
    let mut initial = vec![0.0; n_states];
    let mass = simplex(rng, support);
    initial[..support].copy_from_slice(&mass);
    TabularCmdp {
        n_states,
        n_actions,
        transition,
        reward,
        cost,
        gamma: 0.9,
        gamma_c,
        threshold: rng.gen_range(0.5..4.0),
        initial,
    }
}
