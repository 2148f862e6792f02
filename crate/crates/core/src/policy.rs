//! Stopping policies and their Monte Carlo evaluation.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::bellman::{iterate_from_above, residual, IterateOptions};
use crate::costs::CostSpec;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Tail, TailIntegrand};
use crate::logspace::log_mean_exp;
use crate::math::{exp, sqrt};
use crate::model::{sample_next, terminal_affine, MarkovModel};
use crate::rng::{stream, Stream};
use crate::state::State;
use crate::value::{Closure, LogValueFn};
use crate::TIE_TOL;

/// Normal quantile for two-sided 99% intervals.
pub const Z99: f64 = 2.576;
/// Number of batch means behind every interval.
pub const BATCHES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingPolicy {
    /// Stop at time 0.
    Immediate,
    /// Stop at the first state where `v >= G`.
    Hitting(LogValueFn),
    /// `table[k]` is the `k`-step value; at step `t < horizon` stop iff
    /// `table[horizon - t] >= G`, and always stop at `horizon`. Entries past
    /// the end of the table repeat the last one.
    FiniteHorizon { table: Vec<LogValueFn>, horizon: usize },
    /// Stop on entering any of these states.
    StopOn(BTreeSet<State>),
}

/// Hitting rule of `v`; ties stop.
pub fn hitting_policy(v: LogValueFn) -> StoppingPolicy {
    StoppingPolicy::Hitting(v)
}

fn reaches(v: f64, big_g: f64) -> bool {
    v >= big_g - TIE_TOL
}

impl StoppingPolicy {
    pub fn stops(&self, costs: &CostSpec, x: State, step: usize) -> bool {
        match self {
            StoppingPolicy::Immediate => true,
            StoppingPolicy::Hitting(v) => reaches(v.eval(costs, x), costs.terminal(x)),
            StoppingPolicy::FiniteHorizon { table, horizon } => {
                if step >= *horizon || table.is_empty() {
                    return true;
                }
                let k = (horizon - step).min(table.len() - 1);
                reaches(table[k].eval(costs, x), costs.terminal(x))
            }
            StoppingPolicy::StopOn(set) => set.contains(&x),
        }
    }

    /// Region of tail states where the rule stops at `step`, as an upper
    /// bound on `G`; `None` when only finitely many tail states stop.
    fn tail_stop_threshold(&self, step: usize) -> Option<f64> {
        let from_closure = |v: &LogValueFn| match v.closure {
            Closure::Terminal { cap } => cap + TIE_TOL,
            Closure::Constant(a) => a + TIE_TOL,
        };
        match self {
            StoppingPolicy::Immediate => Some(f64::INFINITY),
            StoppingPolicy::Hitting(v) => Some(from_closure(v)),
            StoppingPolicy::FiniteHorizon { table, horizon } => {
                if step >= *horizon || table.is_empty() {
                    Some(f64::INFINITY)
                } else {
                    Some(from_closure(&table[(horizon - step).min(table.len() - 1)]))
                }
            }
            StoppingPolicy::StopOn(_) => None,
        }
    }
}

/// Log-domain Monte Carlo estimate of `ln E[exp(cost)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub log_mean: f64,
    /// 99% interval from 16 batch means (delta method in log scale).
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_traj: usize,
    pub n_censored: usize,
    pub seed: u64,
}

impl McEstimate {
    /// A deterministic value with a zero-width interval.
    pub fn exact(value: f64, n_traj: usize, seed: u64) -> Self {
        McEstimate { log_mean: value, ci_low: value, ci_high: value, n_traj, n_censored: 0, seed }
    }

    pub fn from_samples(samples: &[f64], n_censored: usize, seed: u64) -> Self {
        let (log_mean, half) = batch_interval(samples);
        McEstimate {
            log_mean,
            ci_low: log_mean - half,
            ci_high: log_mean + half,
            n_traj: samples.len(),
            n_censored,
            seed,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn brackets(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

/// `(ln mean exp(samples), 99% half-width)` from batch means.
///
/// With batch log-means `l_b` and overall `l`, the ratios `exp(l_b - l)` have
/// mean one and the half-width is `Z99 * sd(ratio) / sqrt(batches)`.
pub fn batch_interval(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let l = log_mean_exp(samples);
    if n < 2 || !l.is_finite() {
        return (l, 0.0);
    }
    let b = BATCHES.min(n);
    let ratios: Vec<f64> = (0..b)
        .map(|k| {
            let (lo, hi) = (k * n / b, (k + 1) * n / b);
            exp(log_mean_exp(&samples[lo..hi]) - l)
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / b as f64;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (b - 1) as f64;
    (l, Z99 * sqrt(var) / sqrt(b as f64))
}

/// Runs `n_traj` independent trajectories, trajectory `i` on stream `i`,
/// and returns their results in index order.
pub(crate) fn run_trajectories<T: Send>(
    n_traj: usize,
    seed: u64,
    f: impl Fn(&mut Stream) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_traj)
            .into_par_iter()
            .map(|i| f(&mut stream(seed, i as u64)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_traj).map(|i| f(&mut stream(seed, i as u64))).collect()
    }
}

/// One step of a rollout, for trace dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub traj: usize,
    pub step: usize,
    pub state: State,
    pub stop: bool,
    pub running_cost: f64,
}

/// Simulates one trajectory; returns `(total cost, censored)`.
fn rollout(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    horizon_cap: usize,
    rng: &mut Stream,
    mut record: Option<(&mut Vec<TraceStep>, usize)>,
) -> Result<(f64, bool)> {
    let costs = &model.costs;
    let (mut x, mut cost) = (x0, 0.0);
    let mut t = 0usize;
    loop {
        let stop = policy.stops(costs, x, t);
        let censored = !stop && t >= horizon_cap;
        let g = if stop || censored { 0.0 } else { costs.running(x) };
        if let Some((out, traj)) = record.as_mut() {
            out.push(TraceStep { traj: *traj, step: t, state: x, stop: stop || censored, running_cost: g });
        }
        if stop || censored {
            return Ok((cost + costs.terminal(x), censored));
        }
        cost += g;
        x = sample_next(model, x, rng)?;
        t += 1;
    }
}

/// Refuses rules whose expected payoff the kernel certifies as infinite.
///
/// Checks the first transition out of `x0`: if the rule continues at `x0`
/// and stops on an unbounded part of a tail where `E[exp G] = +inf`, the
/// target is infinite. For i.i.d. kernels with constant running cost the
/// stopping time is geometric, and `g + ln P[continue] >= 0` is also
/// refused.
pub fn divergence_guard(model: &MarkovModel, policy: &StoppingPolicy, x0: State) -> Result<()> {
    if policy.stops(&model.costs, x0, 0) {
        return Ok(());
    }
    if let (Kernel::Iid(row), Some(g)) = (&model.kernel, model.costs.running.as_constant()) {
        if !matches!(policy, StoppingPolicy::FiniteHorizon { .. }) {
            if let Ok((ln_q, _)) = crate::diagnostics::iid_continue(model, policy, row) {
                if ln_q > f64::NEG_INFINITY && g + ln_q >= 0.0 {
                    return Err(Error::DivergentTarget);
                }
            }
        }
    }
    let row = model.kernel.row(x0)?;
    let Some(Tail::PowerLaw(tail)) = &row.tail else {
        return Ok(());
    };
    let Some(hi) = policy.tail_stop_threshold(1) else {
        return Ok(());
    };
    let Ok((slope, intercept)) = terminal_affine(&model.costs) else {
        return Ok(());
    };
    let f = TailIntegrand { cap: model.costs.terminal_cap, lo: f64::NEG_INFINITY, hi };
    match tail.log_expectation(slope, intercept, f) {
        Ok(v) if v == f64::INFINITY => Err(Error::DivergentTarget),
        _ => Ok(()),
    }
}

/// Estimates `ln E_x0[exp(sum_{i<tau} g(X_i) + G(X_tau))]` for the rule,
/// stopping censored trajectories at `horizon_cap` and paying `G` there.
pub fn evaluate_policy_mc(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    n_traj: usize,
    horizon_cap: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_traj < 2 {
        return Err(Error::InvalidParams("n_traj must be at least 2"));
    }
    if horizon_cap < 1 {
        return Err(Error::InvalidParams("horizon_cap must be at least 1"));
    }
    model.check_state(x0)?;
    if policy.stops(&model.costs, x0, 0) {
        return Ok(McEstimate::exact(model.costs.terminal(x0), n_traj, seed));
    }
    divergence_guard(model, policy, x0)?;
    let results = run_trajectories(n_traj, seed, |rng| rollout(model, policy, x0, horizon_cap, rng, None))?;
    let n_censored = results.iter().filter(|r| r.1).count();
    let samples: Vec<f64> = results.into_iter().map(|r| r.0).collect();
    Ok(McEstimate::from_samples(&samples, n_censored, seed))
}

/// Step-by-step records of the first `n_traj` trajectories.
pub fn rollout_traces(
    model: &MarkovModel,
    policy: &StoppingPolicy,
    x0: State,
    n_traj: usize,
    horizon_cap: usize,
    seed: u64,
) -> Result<Vec<TraceStep>> {
    let mut out = Vec::new();
    for i in 0..n_traj {
        let mut rng = stream(seed, i as u64);
        rollout(model, policy, x0, horizon_cap, &mut rng, Some((&mut out, i)))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStat {
    pub step: usize,
    pub log_mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl CheckpointStat {
    fn half(&self) -> f64 {
        (0.5 * (self.ci_high - self.ci_low)).max(1e-12)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    /// `ln E[z_v(tau_v ∧ n)]` per checkpoint.
    pub stopped: Vec<CheckpointStat>,
    /// `ln E[z_v(n)]` per checkpoint.
    pub unstopped: Vec<CheckpointStat>,
    /// `v(x0)`, the value every stopped mean should sit at.
    pub anchor: f64,
    pub max_pairwise_gap: f64,
    /// No pair of stopped means differs by more than three combined
    /// half-widths.
    pub flat: bool,
    /// Every stopped mean is within three half-widths of the anchor.
    pub anchored: bool,
    /// No unstopped mean lies significantly below an earlier one.
    pub submartingale_ok: bool,
    /// Bellman residual of `v` at `x0` and its one-step successors, when
    /// computable.
    pub bellman_residual: Option<f64>,
    pub n_traj: usize,
    pub seed: u64,
}

/// Estimates `E[z_v(tau_v ∧ n)]` and `E[z_v(n)]` where
/// `z_v(n) = exp(sum_{i<n} g(X_i) + v(X_n))` and `tau_v` is the hitting
/// time of `{v >= G}`.
pub fn martingale_check(
    model: &MarkovModel,
    v: &LogValueFn,
    x0: State,
    n_traj: usize,
    checkpoints: &[usize],
    seed: u64,
) -> Result<MartingaleReport> {
    if n_traj < 2 {
        return Err(Error::InvalidParams("n_traj must be at least 2"));
    }
    if checkpoints.is_empty() || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("checkpoints must be non-empty and increasing"));
    }
    model.check_state(x0)?;
    let costs = &model.costs;
    let last = *checkpoints.last().unwrap_or(&0);
    let k = checkpoints.len();
    let rows = run_trajectories(n_traj, seed, |rng| {
        let mut out = alloc::vec![0.0; 2 * k];
        let (mut x, mut sum_g) = (x0, 0.0);
        let mut frozen: Option<f64> = None;
        let mut next_cp = 0;
        for n in 0..=last {
            let vx = v.eval(costs, x);
            let z = sum_g + vx;
            if frozen.is_none() && reaches(vx, costs.terminal(x)) {
                frozen = Some(z);
            }
            if next_cp < k && checkpoints[next_cp] == n {
                out[next_cp] = frozen.unwrap_or(z);
                out[k + next_cp] = z;
                next_cp += 1;
            }
            if n < last {
                sum_g += costs.running(x);
                x = sample_next(model, x, rng)?;
            }
        }
        Ok(out)
    })?;

    let stat = |col: usize, step: usize| {
        let samples: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        let (l, h) = batch_interval(&samples);
        CheckpointStat { step, log_mean: l, ci_low: l - h, ci_high: l + h }
    };
    let stopped: Vec<CheckpointStat> = checkpoints.iter().enumerate().map(|(i, &s)| stat(i, s)).collect();
    let unstopped: Vec<CheckpointStat> =
        checkpoints.iter().enumerate().map(|(i, &s)| stat(k + i, s)).collect();

    let anchor = v.eval(costs, x0);
    let mut max_gap: f64 = 0.0;
    let mut flat = true;
    for i in 0..k {
        for j in i + 1..k {
            let gap = (stopped[i].log_mean - stopped[j].log_mean).abs();
            max_gap = max_gap.max(gap);
            let (hi, hj) = (stopped[i].half(), stopped[j].half());
            flat &= gap <= 3.0 * sqrt(hi * hi + hj * hj);
        }
    }
    let anchored = stopped.iter().all(|s| (s.log_mean - anchor).abs() <= 3.0 * s.half());
    let mut submartingale_ok = true;
    for i in 0..k {
        for j in i + 1..k {
            submartingale_ok &= unstopped[j].ci_high >= unstopped[i].ci_low;
        }
    }
    // Residual at x0 and its finite one-step successors.
    let mut eval_set = alloc::vec![x0];
    if let Ok(row) = model.kernel.row(x0) {
        eval_set.extend(row.atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0));
    }
    let bellman_residual = residual(model, v, &eval_set).ok();
    Ok(MartingaleReport {
        stopped,
        unstopped,
        anchor,
        max_pairwise_gap: max_gap,
        flat,
        anchored,
        submartingale_ok,
        bellman_residual,
        n_traj,
        seed,
    })
}

/// Monte Carlo values of the optimal rules over stopping times bounded by
/// each horizon.
pub fn bounded_policy_floor(
    model: &MarkovModel,
    x0: State,
    horizons: &[usize],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParams("horizons must be increasing"));
    }
    if n_traj < 2 {
        return Err(Error::InvalidParams("n_traj must be at least 2"));
    }
    model.check_state(x0)?;
    horizons
        .iter()
        .map(|&horizon| {
            if horizon == 0 {
                return Ok(McEstimate::exact(model.costs.terminal(x0), n_traj, seed));
            }
            let run = iterate_from_above(model, x0, &IterateOptions::fixed_steps(horizon))?;
            let policy = StoppingPolicy::FiniteHorizon { table: run.iterates, horizon };
            evaluate_policy_mc(model, &policy, x0, n_traj, horizon, seed)
        })
        .collect()
}
