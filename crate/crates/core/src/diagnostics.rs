//! Uniform-integrability diagnostics and the `u`/`w` gap.
//!
//! `E_x[1{tau > T} Z_T]` with `Z_T = exp(sum_{i<T} g(X_i) + G(X_T))` has
//! liminf zero in `T` exactly when the stopped family is uniformly
//! integrable, which forces `u = w`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::bellman::BellmanRun;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelRow, PowerLawTail, Tail, TailIntegrand};
use crate::logspace::{log_add_exp, log_sub_exp, log_sum_exp_weighted};
use crate::math::ln;
use crate::model::{sample_next, terminal_affine, MarkovModel};
use crate::policy::{batch_interval, run_trajectories, StoppingPolicy};
use crate::state::State;

pub use crate::closed_form::{regime_classifier, Regime};

/// Values below `ln(VANISH_TOL)` count as vanished.
pub const VANISH_TOL: f64 = 1e-8;
/// Forward propagation refuses to track more states than this.
const MAX_TRACKED: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UiMethod {
    Analytic,
    MonteCarlo { n_traj: usize, seed: u64 },
    /// Analytic when available, otherwise Monte Carlo.
    Auto { n_traj: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UiMode {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Vanishing,
    NonVanishing,
    Divergent,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Vanishing => "vanishing",
            Verdict::NonVanishing => "non-vanishing",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for UiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UiMode::Analytic => "analytic",
            UiMode::MonteCarlo => "monte-carlo",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UiProfile {
    pub t_grid: Vec<usize>,
    /// `ln E_x0[1{tau > T} Z_T]` per horizon.
    pub values: Vec<f64>,
    /// 99% intervals in Monte Carlo mode.
    pub intervals: Option<Vec<(f64, f64)>>,
    pub mode: UiMode,
    pub verdict: Verdict,
    /// Least-squares slope of the log-values over the last half of the grid.
    pub growth_rate: Option<f64>,
}

pub fn ui_profile(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    t_grid: &[usize],
    method: UiMethod,
) -> Result<UiProfile> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("T grid must be non-empty and increasing"));
    }
    model.check_state(x0)?;
    let analytic = || analytic_values(model, policy, x0, t_grid);
    match method {
        UiMethod::Analytic => Ok(finish_analytic(t_grid, analytic()?)),
        UiMethod::MonteCarlo { n_traj, seed } => mc_profile(model, policy, x0, t_grid, n_traj, seed),
        UiMethod::Auto { n_traj, seed } => match analytic() {
            Ok(values) => Ok(finish_analytic(t_grid, values)),
            Err(Error::AnalyticUnavailable(_)) => mc_profile(model, policy, x0, t_grid, n_traj, seed),
            Err(e) => Err(e),
        },
    }
}

fn last_half<T: Copy>(xs: &[T]) -> &[T] {
    &xs[xs.len() / 2..]
}

fn growth_rate(t_grid: &[usize], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = last_half(t_grid)
        .iter()
        .zip(last_half(values))
        .filter(|(_, v)| v.is_finite())
        .map(|(&t, &v)| (t as f64, v))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    Some(sxy / sxx)
}

fn finish_analytic(t_grid: &[usize], values: Vec<f64>) -> UiProfile {
    let floor = ln(VANISH_TOL);
    let tail = last_half(&values);
    let last = *values.last().unwrap_or(&f64::NEG_INFINITY);
    let non_increasing = tail.windows(2).all(|w| w[1] <= w[0]);
    let non_decreasing = tail.windows(2).all(|w| w[1] >= w[0]);
    let verdict = if values.iter().any(|v| *v == f64::INFINITY) {
        Verdict::Divergent
    } else if last == f64::NEG_INFINITY || (last < floor && non_increasing) {
        Verdict::Vanishing
    } else if tail.iter().all(|v| v.is_finite() && *v >= floor) && non_decreasing {
        Verdict::NonVanishing
    } else {
        Verdict::Inconclusive
    };
    UiProfile {
        t_grid: t_grid.to_vec(),
        growth_rate: growth_rate(t_grid, &values),
        values,
        intervals: None,
        mode: UiMode::Analytic,
        verdict,
    }
}

fn analytic_values(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    t_grid: &[usize],
) -> Result<Vec<f64>> {
    let costs = &model.costs;
    if policy.stops(costs, x0, 0) {
        return Ok(alloc::vec![f64::NEG_INFINITY; t_grid.len()]);
    }
    if let Kernel::Iid(row) = &model.kernel {
        if row.tail.is_some() {
            return iid_values(model, policy, x0, t_grid);
        }
    }
    // Forward propagation of the surviving sub-probability measure, weighted
    // by the running cost paid so far.
    let t_max = *t_grid.last().unwrap_or(&0);
    let mut mu: BTreeMap<State, f64> = BTreeMap::new();
    mu.insert(x0, 0.0);
    let mut out = Vec::with_capacity(t_grid.len());
    let mut next_idx = 0;
    for t in 0..=t_max {
        if t_grid[next_idx] == t {
            out.push(log_sum_exp_weighted(mu.iter().map(|(&y, &w)| (w, costs.terminal(y)))));
            next_idx += 1;
            if next_idx == t_grid.len() {
                break;
            }
        }
        if mu.is_empty() {
            out.resize(t_grid.len(), f64::NEG_INFINITY);
            break;
        }
        let mut next: BTreeMap<State, f64> = BTreeMap::new();
        for (&y, &w) in &mu {
            let row = model.kernel.row(y)?;
            if row.tail.is_some() {
                return Err(Error::AnalyticUnavailable("surviving paths enter an infinite tail"));
            }
            let base = w + costs.running(y);
            for &(z, p) in &row.atoms {
                if p > 0.0 && !policy.stops(costs, z, t + 1) {
                    let e = next.entry(z).or_insert(f64::NEG_INFINITY);
                    *e = log_add_exp(*e, base + ln(p));
                }
            }
        }
        if next.len() > MAX_TRACKED {
            return Err(Error::AnalyticUnavailable("too many surviving states to track"));
        }
        mu = next;
    }
    Ok(out)
}

/// i.i.d. rows with constant running cost: with `q = P[X continues]` and
/// `M = E[exp G(X); X continues]`, the value at `T >= 1` is
/// `T g + (T - 1) ln q + ln M`.
fn iid_values(model: &MarkovModel, policy: &StoppingPolicy, x0: State, t_grid: &[usize]) -> Result<Vec<f64>> {
    let costs = &model.costs;
    let g = costs
        .running
        .as_constant()
        .ok_or(Error::AnalyticUnavailable("running cost varies along an infinite tail"))?;
    if matches!(policy, StoppingPolicy::FiniteHorizon { .. }) {
        return Err(Error::AnalyticUnavailable("time-dependent rule on an infinite tail"));
    }
    let Kernel::Iid(row) = &model.kernel else {
        return Err(Error::AnalyticUnavailable("not an i.i.d. kernel"));
    };
    let (ln_q, ln_m) = iid_continue(model, policy, row)?;
    Ok(t_grid
        .iter()
        .map(|&t| {
            if t == 0 {
                costs.terminal(x0)
            } else if ln_m == f64::INFINITY {
                f64::INFINITY
            } else {
                t as f64 * g + (t - 1) as f64 * ln_q + ln_m
            }
        })
        .collect())
}

/// `(ln q, ln M)` for one i.i.d. draw: `q = P[X continues]`,
/// `M = E[exp G(X); X continues]`.
pub(crate) fn iid_continue(model: &MarkovModel, policy: &StoppingPolicy, row: &KernelRow) -> Result<(f64, f64)> {
    let costs = &model.costs;
    let continues = |z: State| !policy.stops(costs, z, 1);
    let mut ln_q = log_sum_exp_weighted(row.atoms.iter().filter(|a| continues(a.0)).map(|&(_, p)| (ln(p), 0.0)));
    let mut ln_m = log_sum_exp_weighted(
        row.atoms.iter().filter(|a| continues(a.0)).map(|&(z, p)| (ln(p), costs.terminal(z))),
    );
    if let Some(Tail::PowerLaw(t)) = &row.tail {
        ln_q = log_add_exp(ln_q, tail_continue(model, policy, t, true)?);
        ln_m = log_add_exp(ln_m, tail_continue(model, policy, t, false)?);
    }
    Ok((ln_q, ln_m))
}

/// `ln sum_{k continues} p(k)` (`probability`) or
/// `ln sum_{k continues} p(k) exp G(k)` over the tail.
fn tail_continue(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    tail: &PowerLawTail,
    probability: bool,
) -> Result<f64> {
    let costs = &model.costs;
    let (slope, intercept) = terminal_affine(costs)?;
    // Continuation region read off the closure: G > threshold.
    let (threshold, explicit): (f64, Vec<State>) = match policy {
        StoppingPolicy::Immediate => return Ok(f64::NEG_INFINITY),
        StoppingPolicy::StopOn(set) => (f64::NEG_INFINITY, set.iter().copied().collect()),
        StoppingPolicy::Hitting(v) => {
            let thr = match v.closure {
                crate::value::Closure::Terminal { cap } => cap + crate::TIE_TOL,
                crate::value::Closure::Constant(a) => a + crate::TIE_TOL,
            };
            (thr, v.support().collect())
        }
        StoppingPolicy::FiniteHorizon { .. } => {
            return Err(Error::AnalyticUnavailable("time-dependent rule on an infinite tail"))
        }
    };
    let cap = if probability { 0.0 } else { costs.terminal_cap };
    let f = TailIntegrand { cap, lo: threshold, hi: f64::INFINITY };
    let mut total = tail.log_expectation(slope, intercept, f)?;
    for s in explicit.into_iter().filter(|s| tail.contains(*s)) {
        let in_region = f.contains(costs.terminal.eval(s));
        let cont = !policy.stops(costs, s, 1);
        let term = tail.ln_prob(s.coord()) + if probability { 0.0 } else { costs.terminal(s) };
        if in_region && !cont {
            total = log_sub_exp(total, term);
        } else if !in_region && cont {
            total = log_add_exp(total, term);
        }
    }
    Ok(total)
}

fn mc_profile(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    t_grid: &[usize],
    n_traj: usize,
    seed: u64,
) -> Result<UiProfile> {
    if n_traj < 2 {
        return Err(Error::InvalidParams("n_traj must be at least 2"));
    }
    let costs = &model.costs;
    let t_max = *t_grid.last().unwrap_or(&0);
    let rows = run_trajectories(n_traj, seed, |rng| {
        let mut out = alloc::vec![f64::NEG_INFINITY; t_grid.len()];
        let (mut x, mut sum_g) = (x0, 0.0);
        let mut idx = 0;
        for t in 0..=t_max {
            if policy.stops(costs, x, t) {
                break;
            }
            if t_grid[idx] == t {
                out[idx] = sum_g + costs.terminal(x);
                idx += 1;
                if idx == t_grid.len() {
                    break;
                }
            }
            sum_g += costs.running(x);
            x = sample_next(model, x, rng)?;
        }
        Ok(out)
    })?;
    let mut values = Vec::with_capacity(t_grid.len());
    let mut intervals = Vec::with_capacity(t_grid.len());
    for j in 0..t_grid.len() {
        let samples: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (l, h) = batch_interval(&samples);
        values.push(l);
        intervals.push((l - h, l + h));
    }
    let floor = ln(VANISH_TOL);
    let verdict = if last_half(&intervals).iter().all(|(lo, _)| *lo > floor) {
        Verdict::NonVanishing
    } else {
        Verdict::Inconclusive
    };
    Ok(UiProfile {
        t_grid: t_grid.to_vec(),
        growth_rate: growth_rate(t_grid, &values),
        values,
        intervals: Some(intervals),
        mode: UiMode::MonteCarlo,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry {
    pub state: State,
    pub u: f64,
    pub w: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    /// States with `w - u > tol + slack`.
    pub flagged: Vec<State>,
    pub slack: f64,
    /// No state flagged.
    pub unique: bool,
    /// Both runs converged.
    pub conclusive: bool,
}

/// Compares the two extremal solutions state by state.
pub fn gap_report(u_run: &BellmanRun, w_run: &BellmanRun, eval_set: &[State], tol: f64) -> Result<GapReport> {
    if u_run.model != w_run.model {
        return Err(Error::ModelMismatch("u and w runs were computed on different models"));
    }
    if u_run.base() != w_run.base() {
        return Err(Error::ModelMismatch("u and w runs start from different states"));
    }
    let slack = u_run.slack() + w_run.slack();
    let mut entries = Vec::with_capacity(eval_set.len());
    let mut flagged = Vec::new();
    for &x in eval_set {
        let (u, w) = (u_run.at(x), w_run.at(x));
        let gap = if u == w { 0.0 } else { w - u };
        if gap > tol + slack {
            flagged.push(x);
        }
        entries.push(GapEntry { state: x, u, w, gap });
    }
    Ok(GapReport {
        unique: flagged.is_empty(),
        conclusive: u_run.converged && w_run.converged,
        entries,
        flagged,
        slack,
    })
}
