//! Log-domain Bellman operator and monotone value iteration.
//!
//! The iteration engine tabulates values on the states reachable from the
//! base point (and any extra states) through finite atoms, up to a support
//! depth `D`. A node first reached at depth `d` is exact at iterate `n` as
//! long as `d + n <= D + 1`; the engine grows `D` and restarts when the
//! convergence window would otherwise read an inexact node. Tails are
//! handled through the closure rule: for i.i.d. kernels with constant running
//! cost the continuation value is the same at every state, so the closure can
//! be updated exactly each step.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::{PowerLawTail, Tail};
use crate::logspace::{log_add_exp, log_sum_exp_weighted};
use crate::math::{exp, ln};
use crate::model::{closure_tail, correct, log_mgf, MarkovModel};
use crate::state::State;
use crate::value::{Closure, LogValueFn};
use crate::TIE_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    FromBelow,
    FromAbove,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::FromBelow => "from-below",
            Direction::FromAbove => "from-above",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Convergence window: states within this many steps of a root.
    pub eval_depth: usize,
    /// Roots besides the base point; they join the window at depth 0.
    pub extra_states: Vec<State>,
    /// Fixed support depth. `None` grows it on demand.
    pub support_depth: Option<usize>,
    pub keep_iterates: bool,
    /// Run exactly `max_iter` steps without the early convergence exit.
    pub run_all: bool,
    pub max_support_states: usize,
}

impl IterateOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        IterateOptions {
            tol,
            max_iter,
            eval_depth: 64,
            extra_states: Vec::new(),
            support_depth: None,
            keep_iterates: false,
            run_all: false,
            max_support_states: 4_000_000,
        }
    }

    /// Exactly `n` steps with every iterate kept.
    pub fn fixed_steps(n: usize) -> Self {
        IterateOptions { keep_iterates: true, run_all: true, ..Self::new(f64::MIN_POSITIVE, n) }
    }

    pub fn with_eval_depth(mut self, depth: usize) -> Self {
        self.eval_depth = depth;
        self
    }

    pub fn with_extra_states(mut self, states: impl IntoIterator<Item = State>) -> Self {
        self.extra_states.extend(states);
        self
    }

    pub fn with_support_depth(mut self, depth: usize) -> Self {
        self.support_depth = Some(depth);
        self
    }

    pub fn keeping_iterates(mut self) -> Self {
        self.keep_iterates = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParams("tol must be positive"));
        }
        Ok(())
    }
}

/// Outcome of a value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanRun {
    pub direction: Direction,
    pub tol: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `residuals[k]` is the sup over the window of `|v_{k+1} - v_k|`.
    pub residuals: Vec<f64>,
    /// Base point first, then the extra states.
    pub trace_states: Vec<State>,
    /// `trace[n][r]` is the `n`-th iterate at `trace_states[r]`.
    pub trace: Vec<Vec<f64>>,
    /// All iterates when requested, `iterates[0]` being the start.
    pub iterates: Vec<LogValueFn>,
    /// Final iterate on the exactly computed states.
    pub value: LogValueFn,
    /// First iterate after which the state never moved by more than `tol`.
    pub settled_at: Vec<Option<usize>>,
    /// Every step moved in the expected direction on exact states.
    pub monotone: bool,
    /// Every window state was computed without truncation.
    pub exact: bool,
    pub support_depth: usize,
    pub support_size: usize,
    pub model: MarkovModel,
}

impl BellmanRun {
    pub fn base(&self) -> State {
        self.value.base
    }

    /// Final iterate at `x`.
    pub fn at(&self, x: State) -> f64 {
        self.value.eval(&self.model.costs, x)
    }

    pub fn last_change(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// Distance budget to the limit implied by the run's own stopping rule.
    pub fn slack(&self) -> f64 {
        if self.converged {
            self.tol
        } else {
            self.last_change().max(self.tol)
        }
    }

    pub fn ensure_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterExceeded { iterations: self.iterations, last_change: self.last_change() })
        }
    }
}

fn tie_min(big_g: f64, cont: f64) -> f64 {
    if big_g - cont <= TIE_TOL {
        big_g
    } else {
        cont
    }
}

/// `min(G(x), g(x) + ln E_x[exp v(X_1)])` on `eval_set`.
///
/// The result keeps the closure rule of `v`.
pub fn apply_bellman(model: &MarkovModel, v: &LogValueFn, eval_set: &[State]) -> Result<LogValueFn> {
    let mut values = BTreeMap::new();
    for &x in eval_set {
        let cont = model.costs.running(x) + log_mgf(model, x, v)?;
        values.insert(x, tie_min(model.costs.terminal(x), cont));
    }
    Ok(LogValueFn { base: v.base, values, closure: v.closure })
}

/// `sup_x |v(x) - (Sv)(x)|` over `eval_set`.
pub fn residual(model: &MarkovModel, v: &LogValueFn, eval_set: &[State]) -> Result<f64> {
    let next = apply_bellman(model, v, eval_set)?;
    let mut worst: f64 = 0.0;
    for &x in eval_set {
        worst = worst.max(distance(v.eval(&model.costs, x), next.eval(&model.costs, x)));
    }
    Ok(worst)
}

fn distance(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

pub fn iterate_from_below(model: &MarkovModel, x0: State, opts: &IterateOptions) -> Result<BellmanRun> {
    let init = LogValueFn::closure_only(x0, Closure::ZERO);
    iterate_with(model, &init, Direction::FromBelow, opts)
}

pub fn iterate_from_above(model: &MarkovModel, x0: State, opts: &IterateOptions) -> Result<BellmanRun> {
    let init = LogValueFn::closure_only(x0, Closure::TERMINAL);
    iterate_with(model, &init, Direction::FromAbove, opts)
}

/// Iterates the operator from `init`, rooted at `init.base` and the extra
/// states of `opts`.
pub fn iterate_with(
    model: &MarkovModel,
    init: &LogValueFn,
    direction: Direction,
    opts: &IterateOptions,
) -> Result<BellmanRun> {
    opts.validate()?;
    let mut roots = alloc::vec![init.base];
    for &s in &opts.extra_states {
        if !roots.contains(&s) {
            roots.push(s);
        }
    }
    for &r in &roots {
        model.check_state(r)?;
    }
    let ceiling = opts.max_iter.saturating_add(opts.eval_depth).max(1);
    let mut depth = match opts.support_depth {
        Some(d) => d,
        None => ceiling.min(256),
    };
    loop {
        let compiled = Compiled::build(model, &roots, depth, opts.max_support_states)?;
        let growable = opts.support_depth.is_none() && depth < ceiling && !compiled.frozen_tail;
        match run_engine(model, &compiled, init, direction, opts, growable)? {
            Some(run) => return Ok(run),
            None => depth = depth.saturating_mul(2).min(ceiling),
        }
    }
}

struct Row {
    inside: Vec<(usize, f64)>,
    outside: Vec<(f64, State)>,
    tail: Option<(PowerLawTail, Vec<(usize, f64)>)>,
}

struct Compiled {
    states: Vec<State>,
    depth: Vec<usize>,
    running: Vec<f64>,
    terminal: Vec<f64>,
    rows: Vec<Row>,
    /// All nodes share `rows[0]`.
    shared: bool,
    /// Closure can be advanced exactly each step.
    dynamic_closure: bool,
    /// A tail is read through a closure that cannot be advanced exactly.
    frozen_tail: bool,
    saturated: bool,
    depth_limit: usize,
}

impl Compiled {
    fn build(model: &MarkovModel, roots: &[State], depth_limit: usize, max_states: usize) -> Result<Self> {
        let mut index: BTreeMap<State, usize> = BTreeMap::new();
        let mut states = Vec::new();
        let mut depth = Vec::new();
        for &r in roots {
            if !index.contains_key(&r) {
                index.insert(r, states.len());
                states.push(r);
                depth.push(0);
            }
        }
        let shared = model.kernel.is_iid();
        if shared {
            let row = model.kernel.row(roots[0])?;
            for &(y, _) in &row.atoms {
                if !index.contains_key(&y) {
                    index.insert(y, states.len());
                    states.push(y);
                    depth.push(1);
                }
            }
        } else {
            let mut head = 0;
            while head < states.len() {
                let (s, d) = (states[head], depth[head]);
                head += 1;
                if d >= depth_limit {
                    continue;
                }
                let row = model.kernel.row(s)?;
                for &(y, _) in &row.atoms {
                    if !index.contains_key(&y) {
                        index.insert(y, states.len());
                        states.push(y);
                        depth.push(d + 1);
                        if states.len() > max_states {
                            return Err(Error::InvalidParams("reachable set exceeds max_support_states"));
                        }
                    }
                }
            }
        }

        let compile_row = |s: State| -> Result<Row> {
            let row = model.kernel.row(s)?;
            let mut inside = Vec::with_capacity(row.atoms.len());
            let mut outside = Vec::new();
            for &(y, p) in &row.atoms {
                match index.get(&y) {
                    Some(&j) => inside.push((j, ln(p))),
                    None => outside.push((ln(p), y)),
                }
            }
            let tail = match &row.tail {
                Some(Tail::PowerLaw(t)) => {
                    let nodes = states
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| t.contains(**s))
                        .map(|(j, s)| (j, t.ln_prob(s.coord())))
                        .collect();
                    Some((t.clone(), nodes))
                }
                None => None,
            };
            Ok(Row { inside, outside, tail })
        };
        let rows = if shared {
            alloc::vec![compile_row(roots[0])?]
        } else {
            states.iter().map(|&s| compile_row(s)).collect::<Result<Vec<_>>>()?
        };
        let has_tail = rows.iter().any(|r| r.tail.is_some());
        let dynamic_closure = model.has_homogeneous_continuation();
        let saturated = rows.iter().all(|r| r.outside.is_empty());
        let running = states.iter().map(|&s| model.costs.running(s)).collect();
        let terminal = states.iter().map(|&s| model.costs.terminal(s)).collect();
        Ok(Compiled {
            states,
            depth,
            running,
            terminal,
            rows,
            shared,
            dynamic_closure,
            frozen_tail: has_tail && !dynamic_closure,
            saturated,
            depth_limit,
        })
    }

    /// Largest iterate index that is exact at a node of depth `d`.
    fn exact_through(&self, d: usize) -> usize {
        if self.dynamic_closure || (self.saturated && !self.frozen_tail) {
            usize::MAX
        } else if self.frozen_tail {
            1
        } else {
            (self.depth_limit + 1).saturating_sub(d)
        }
    }

    fn len(&self) -> usize {
        self.states.len()
    }

    /// Off-support atoms and closure tail of each row, in log form.
    fn fixed_parts(&self, model: &MarkovModel, closure: Closure) -> Result<Vec<(f64, f64)>> {
        self.rows
            .iter()
            .map(|row| {
                let atoms = log_sum_exp_weighted(
                    row.outside.iter().map(|&(lp, y)| (lp, closure.eval(&model.costs, y))),
                );
                let tail = match &row.tail {
                    Some((t, _)) => closure_tail(t, &model.costs, closure)?,
                    None => f64::NEG_INFINITY,
                };
                Ok((atoms, tail))
            })
            .collect()
    }

    fn continuation(&self, r: usize, vals: &[f64], fixed: &[(f64, f64)], closure_vals: &[f64]) -> f64 {
        let row = &self.rows[r];
        let mut shift = f64::NEG_INFINITY;
        for &(j, lp) in &row.inside {
            shift = shift.max(lp + vals[j]);
        }
        let mut total = fixed[r].0;
        if shift == f64::INFINITY {
            return f64::INFINITY;
        }
        if shift > f64::NEG_INFINITY {
            let mut sum = 0.0;
            for &(j, lp) in &row.inside {
                sum += exp(lp + vals[j] - shift);
            }
            total = log_add_exp(total, shift + ln(sum));
        }
        if let Some((_, nodes)) = &row.tail {
            let corrections: Vec<(f64, f64, f64)> = nodes
                .iter()
                .filter(|&&(j, _)| vals[j] != closure_vals[j])
                .map(|&(j, lp)| (lp, vals[j], closure_vals[j]))
                .collect();
            total = log_add_exp(total, correct(fixed[r].1, &corrections));
        }
        total
    }
}

/// Runs the iteration on a compiled support. `Ok(None)` asks for a deeper
/// support.
fn run_engine(
    model: &MarkovModel,
    cp: &Compiled,
    init: &LogValueFn,
    direction: Direction,
    opts: &IterateOptions,
    growable: bool,
) -> Result<Option<BellmanRun>> {
    let n_nodes = cp.len();
    let n_roots = 1 + opts.extra_states.iter().filter(|s| **s != init.base).count();
    let n_roots = n_roots.min(n_nodes);
    let costs = &model.costs;
    let mut closure = init.closure;
    let mut vals: Vec<f64> = cp.states.iter().map(|&s| init.eval(costs, s)).collect();
    let mut fixed = cp.fixed_parts(model, closure)?;
    let mut closure_vals: Vec<f64> = cp.states.iter().map(|&s| closure.eval(costs, s)).collect();

    let snapshot = |vals: &[f64], closure: Closure, n: usize| -> LogValueFn {
        let values = cp
            .states
            .iter()
            .zip(vals)
            .zip(&cp.depth)
            .filter(|(_, &d)| n <= cp.exact_through(d))
            .map(|((s, v), _)| (*s, *v))
            .collect();
        LogValueFn { base: init.base, values, closure }
    };

    let mut trace = alloc::vec![vals[..n_roots].to_vec()];
    let mut iterates = Vec::new();
    if opts.keep_iterates {
        iterates.push(snapshot(&vals, closure, 0));
    }
    let mut residuals = Vec::new();
    let mut monotone = true;
    let mut exact = true;
    let mut streak = 0usize;
    let mut converged = false;
    let mut n = 0usize;
    let mut next = alloc::vec![0.0; n_nodes];

    while n < opts.max_iter {
        n += 1;
        let window = n.min(opts.eval_depth);
        if n > cp.exact_through(window) {
            if growable {
                return Ok(None);
            }
            exact = false;
        }
        if cp.dynamic_closure && n > 1 {
            fixed = cp.fixed_parts(model, closure)?;
        }
        let shared_cont = if cp.shared { Some(cp.continuation(0, &vals, &fixed, &closure_vals)) } else { None };
        let update = |i: usize| -> f64 {
            let lmgf = match shared_cont {
                Some(l) => l,
                None => cp.continuation(i, &vals, &fixed, &closure_vals),
            };
            tie_min(cp.terminal[i], cp.running[i] + lmgf)
        };
        compute_all(&mut next, update);

        let mut change: f64 = 0.0;
        for i in 0..n_nodes {
            let d = cp.depth[i];
            if n > cp.exact_through(d) {
                continue;
            }
            let (old, new) = (vals[i], next[i]);
            let tol = 1e-12 * old.abs().max(1.0);
            let ok = match direction {
                Direction::FromBelow => new >= old - tol,
                Direction::FromAbove => new <= old + tol,
            };
            monotone &= ok || (old.is_infinite() && old == new);
            if d <= window {
                change = change.max(distance(old, new));
            }
        }
        core::mem::swap(&mut vals, &mut next);
        if let (true, Some(l)) = (cp.dynamic_closure, shared_cont) {
            let g = costs.running.as_constant().unwrap_or(0.0);
            closure = Closure::Terminal { cap: g + l };
            for (cv, &s) in closure_vals.iter_mut().zip(&cp.states) {
                *cv = closure.eval(costs, s);
            }
        }
        residuals.push(change);
        trace.push(vals[..n_roots].to_vec());
        if opts.keep_iterates {
            iterates.push(snapshot(&vals, closure, n));
        }
        streak = if change <= opts.tol { streak + 1 } else { 0 };
        if !opts.run_all && streak >= 3 {
            converged = true;
            break;
        }
    }
    if opts.run_all {
        converged = residuals.last().map_or(true, |&r| r <= opts.tol);
    }

    let settled_at = (0..n_roots)
        .map(|r| {
            let last_move = (1..trace.len()).rev().find(|&k| distance(trace[k][r], trace[k - 1][r]) > opts.tol);
            match last_move {
                None => Some(0),
                Some(k) if k < n || converged => Some(k),
                Some(_) => None,
            }
        })
        .collect();

    Ok(Some(BellmanRun {
        direction,
        tol: opts.tol,
        converged,
        iterations: n,
        residuals,
        trace_states: cp.states[..n_roots].to_vec(),
        trace,
        iterates,
        value: snapshot(&vals, closure, n),
        settled_at,
        monotone,
        exact,
        support_depth: if cp.saturated { usize::MAX } else { cp.depth_limit },
        support_size: n_nodes,
        model: model.clone(),
    }))
}

#[cfg(feature = "parallel")]
fn compute_all(out: &mut [f64], f: impl Fn(usize) -> f64 + Sync) {
    use rayon::prelude::*;
    if out.len() >= 4096 {
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    } else {
        out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
}

#[cfg(not(feature = "parallel"))]
fn compute_all(out: &mut [f64], f: impl Fn(usize) -> f64) {
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// From-below limits with the terminal cost replaced by `G ∧ level`.
pub fn truncated_terminal_iteration(
    model: &MarkovModel,
    x0: State,
    levels: &[f64],
    opts: &IterateOptions,
) -> Result<Vec<(f64, f64)>> {
    if levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams("levels must be increasing"));
    }
    levels
        .iter()
        .map(|&level| {
            let truncated = model.with_costs(model.costs.with_terminal_cap(level));
            let run = iterate_from_below(&truncated, x0, opts)?.ensure_converged()?;
            Ok((level, run.at(x0)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichEntry {
    pub state: State,
    pub u: f64,
    pub candidate: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport {
    pub entries: Vec<SandwichEntry>,
    /// `max(u - candidate)`.
    pub max_below: f64,
    /// `max(candidate - w)`.
    pub max_above: f64,
    pub slack: f64,
    pub violations: Vec<State>,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `u <= candidate <= w` on `eval_set`.
pub fn verify_sandwich(
    u_run: &BellmanRun,
    w_run: &BellmanRun,
    candidate: &LogValueFn,
    eval_set: &[State],
) -> Result<SandwichReport> {
    if u_run.model != w_run.model {
        return Err(Error::ModelMismatch("u and w runs were computed on different models"));
    }
    let costs = &u_run.model.costs;
    let slack = u_run.slack() + w_run.slack();
    let mut entries = Vec::with_capacity(eval_set.len());
    let mut violations = Vec::new();
    let (mut max_below, mut max_above) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in eval_set {
        let cand = candidate.eval(costs, x);
        let big_g = costs.terminal(x);
        if !(cand >= -1e-12 && cand <= big_g + 1e-12) {
            return Err(Error::BadCandidate { state: x, value: cand });
        }
        let (u, w) = (u_run.at(x), w_run.at(x));
        max_below = max_below.max(u - cand);
        max_above = max_above.max(cand - w);
        if u - cand > slack || cand - w > slack {
            violations.push(x);
        }
        entries.push(SandwichEntry { state: x, u, candidate: cand, w });
    }
    Ok(SandwichReport { entries, max_below, max_above, slack, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostFn, CostSpec};

    fn s(x: f64) -> State {
        State::at(x)
    }

    fn k_const(alpha: f64, c: f64) -> f64 {
        (alpha * c.exp() / (1.0 - (1.0 - alpha) * c.exp())).ln()
    }

    #[test]
    fn first_step_from_below_is_min_g_c() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        let v = apply_bellman(&m, &LogValueFn::zero(s(3.0)), &[s(3.0)]).unwrap();
        assert_eq!(v.values[&s(3.0)], 0.5);
    }

    #[test]
    fn ex1_terminal_is_a_fixed_point() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let xs: Vec<State> = (1..20).map(|k| s(k as f64)).collect();
        let v = apply_bellman(&m, &LogValueFn::terminal(s(1.0)), &xs).unwrap();
        for &x in &xs {
            assert_eq!(v.values[&x], x.coord());
        }
    }

    #[test]
    fn capped_identity_is_fixed_in_gap_regime() {
        let (alpha, c) = (0.5, 0.5);
        let k = k_const(alpha, c);
        let m = MarkovModel::ex3(alpha, c).unwrap();
        let v = LogValueFn::closure_only(s(5.0), Closure::Terminal { cap: k });
        let out = apply_bellman(&m, &v, &[s(5.0)]).unwrap();
        assert!((out.values[&s(5.0)] - k).abs() < 1e-12);
        assert!(residual(&m, &v, &[s(0.0), s(0.5), s(5.0)]).unwrap() < 1e-12);
    }

    #[test]
    fn exceeding_the_cap_shows_in_the_residual() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        let mut v = LogValueFn::terminal(s(2.0));
        v.insert(s(2.0), 3.0);
        assert!(residual(&m, &v, &[s(2.0)]).unwrap() >= 1.0);
    }

    #[test]
    fn from_below_first_regime_reaches_identity() {
        let m = MarkovModel::ex3(0.2, 0.5).unwrap();
        let run = iterate_from_below(&m, s(2.0), &IterateOptions::new(1e-8, 500)).unwrap();
        assert!(run.converged);
        assert_eq!(run.at(s(2.0)), 2.0);
        assert!(run.monotone);
    }

    #[test]
    fn from_below_gap_regime_reaches_k() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        let run = iterate_from_below(&m, s(5.0), &IterateOptions::new(1e-10, 500)).unwrap();
        assert!(run.converged);
        assert!((run.at(s(5.0)) - k_const(0.5, 0.5)).abs() < 1e-8);
    }

    #[test]
    fn from_above_wait_regime_reaches_k() {
        let m = MarkovModel::ex3(0.9, 0.5).unwrap();
        let run = iterate_from_above(&m, s(5.0), &IterateOptions::new(1e-10, 500)).unwrap();
        assert!(run.converged && run.monotone);
        assert!((run.at(s(5.0)) - k_const(0.9, 0.5)).abs() < 1e-8);
    }

    #[test]
    fn ex1_from_above_stays_at_terminal() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let run = iterate_from_above(&m, s(10.0), &IterateOptions::new(1e-10, 50)).unwrap();
        assert!(run.converged);
        assert!(run.trace.iter().all(|t| t[0] == 10.0));
    }

    #[test]
    fn depth_growth_keeps_deep_windows_exact() {
        // Slow growth of c_n forces several support doublings.
        let m = MarkovModel::ex3(0.2, 0.5).unwrap();
        let opts = IterateOptions::new(1e-8, 2000).with_eval_depth(200);
        let run = iterate_from_below(&m, s(3.0), &opts).unwrap();
        assert!(run.exact);
        assert!(run.support_depth > 256);
    }

    #[test]
    fn deterministic_shift_without_tail() {
        // Two-state cycle with G large at one state.
        let mut rows = BTreeMap::new();
        rows.insert(s(0.0), crate::kernel::KernelRow::atoms(alloc::vec![(s(1.0), 1.0)]));
        rows.insert(s(1.0), crate::kernel::KernelRow::atoms(alloc::vec![(s(0.0), 1.0)]));
        let costs = CostSpec {
            running: CostFn::Constant(1.0),
            terminal: CostFn::Affine { slope: 5.0, intercept: 0.5 },
            c_lower: 1.0,
            g_upper: 1.0,
            terminal_cap: f64::INFINITY,
        };
        let m = MarkovModel::table(rows, costs).unwrap();
        let run = iterate_from_below(&m, s(1.0), &IterateOptions::new(1e-12, 100)).unwrap();
        // At 1: continue to 0 costs 1 + 0.5 = 1.5 < 5.5.
        assert!((run.at(s(1.0)) - 1.5).abs() < 1e-15);
        assert_eq!(run.at(s(0.0)), 0.5);
    }

    #[test]
    fn sandwich_rejects_out_of_band_candidates() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        let opts = IterateOptions::new(1e-10, 500);
        let u = iterate_from_below(&m, s(5.0), &opts).unwrap();
        let w = iterate_from_above(&m, s(5.0), &opts).unwrap();
        let bad = LogValueFn::constant(s(5.0), -1.0);
        assert!(matches!(verify_sandwich(&u, &w, &bad, &[s(5.0)]), Err(Error::BadCandidate { .. })));
        let other = iterate_from_above(&MarkovModel::ex3(0.9, 0.5).unwrap(), s(5.0), &opts).unwrap();
        assert!(matches!(
            verify_sandwich(&u, &other, &u.value, &[s(5.0)]),
            Err(Error::ModelMismatch(_))
        ));
    }

    #[test]
    fn truncation_levels_must_increase() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        let opts = IterateOptions::new(1e-10, 500);
        assert!(truncated_terminal_iteration(&m, s(5.0), &[2.0, 1.0], &opts).is_err());
        let zero = truncated_terminal_iteration(&m, s(5.0), &[0.0], &opts).unwrap();
        assert_eq!(zero[0].1, 0.0);
    }
}
