//! Piecewise-constant jump process in continuous time.
//!
//! The state stays put between jumps of a Poisson clock with intensity
//! `lambda`; at a jump it resets to `0` with probability `alpha` and moves up
//! by one otherwise. Running cost accrues at rate `d < lambda` and the
//! terminal cost is `G(x) = x`. Observed at jump epochs this is the
//! reset-or-advance chain with `c = ln lambda - ln(lambda - d)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::logspace::{log_add_exp, log_sum_exp};
use crate::math::{lgamma, ln, ln_1p};
use crate::model::MarkovModel;
use crate::policy::{divergence_guard, run_trajectories, McEstimate, StoppingPolicy};
use crate::rng::{exponential, uniform, Stream};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdmpParams {
    pub lambda: f64,
    pub d: f64,
    pub alpha: f64,
}

impl PdmpParams {
    pub fn new(lambda: f64, d: f64, alpha: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParams("lambda must be positive and finite"));
        }
        if !(d > 0.0 && d < lambda) {
            return Err(Error::InvalidParams("d must lie in (0, lambda)"));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParams("alpha must lie in [0, 1]"));
        }
        Ok(PdmpParams { lambda, d, alpha })
    }

    /// `ln lambda - ln(lambda - d)`, the log of `E[exp(d * gap)]`.
    pub fn c_embed(&self) -> f64 {
        -ln_1p(-self.d / self.lambda)
    }

    /// The jump chain with running cost `c_embed` per jump.
    pub fn embed(&self) -> Result<MarkovModel> {
        MarkovModel::ex3(self.alpha, self.c_embed())
    }

    fn jump<R: rand_core::RngCore + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        if uniform(rng) < self.alpha {
            0.0
        } else {
            x + 1.0
        }
    }
}

/// A path up to a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x0: f64,
    pub horizon: f64,
    pub jump_times: Vec<f64>,
    /// State right after each jump.
    pub states: Vec<f64>,
}

pub fn simulate_path(params: &PdmpParams, x0: f64, horizon: f64, rng: &mut Stream) -> Trajectory {
    let (mut t, mut x) = (0.0, x0);
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    loop {
        t += exponential(rng, params.lambda);
        if t > horizon {
            break;
        }
        x = params.jump(x, rng);
        jump_times.push(t);
        states.push(x);
    }
    Trajectory { x0, horizon, jump_times, states }
}

/// Monte Carlo value of a rule consulted at time 0 and at every jump, the
/// step index being the number of jumps so far. Paths still running at
/// `t_cap` pay `d * t_cap + G(X(t_cap))`.
pub fn simulate_and_evaluate(
    params: &PdmpParams,
    x0: f64,
    policy: &StoppingPolicy,
    n_traj: usize,
    t_cap: f64,
    seed: u64,
) -> Result<McEstimate> {
    if n_traj < 2 {
        return Err(Error::InvalidParams("n_traj must be at least 2"));
    }
    if !(t_cap > 0.0) {
        return Err(Error::InvalidParams("t_cap must be positive"));
    }
    let model = params.embed()?;
    let start = State::new(x0)?;
    model.check_state(start)?;
    let costs = &model.costs;
    if policy.stops(costs, start, 0) {
        return Ok(McEstimate::exact(costs.terminal(start), n_traj, seed));
    }
    divergence_guard(&model, policy, start)?;
    let results = run_trajectories(n_traj, seed, |rng| {
        let (mut t, mut x) = (0.0, start);
        let mut jumps = 0usize;
        loop {
            if policy.stops(costs, x, jumps) {
                return Ok((params.d * t + costs.terminal(x), false));
            }
            let gap = exponential(rng, params.lambda);
            if t + gap >= t_cap {
                return Ok((params.d * t_cap + costs.terminal(x), true));
            }
            t += gap;
            x = State::new(params.jump(x.coord(), rng))?;
            jumps += 1;
        }
    })?;
    let n_censored = results.iter().filter(|r| r.1).count();
    let samples: Vec<f64> = results.into_iter().map(|r| r.0).collect();
    Ok(McEstimate::from_samples(&samples, n_censored, seed))
}

/// Dyadic finite-horizon value with its truncation bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicValue {
    /// Lower end: Poisson sums cut after `k_max` jumps per step.
    pub value: f64,
    /// Upper end: cut sums plus the analytic bound on the remainder.
    pub upper: f64,
    /// `upper - value`.
    pub budget: f64,
    pub delta: f64,
    pub steps: usize,
}

/// `ln P[Poisson(nu) > k]`.
fn ln_poisson_tail(nu: f64, k: usize) -> f64 {
    if nu == 0.0 {
        return f64::NEG_INFINITY;
    }
    let term = |i: usize| -nu + i as f64 * ln(nu) - lgamma(i as f64 + 1.0);
    let mut total = f64::NEG_INFINITY;
    let mut i = k + 1;
    loop {
        let t = term(i);
        total = log_add_exp(total, t);
        if (t < total - 43.0 && i as f64 > nu) || i > k + 100_000 {
            return total;
        }
        i += 1;
    }
}

/// Value over stopping times on the grid `{0, T/2^m, ..., T}` with no
/// terminal cost at `T`:
/// `w^0 = 0`, `e^{w^j(x)} = E_x[e^{d Δ + w^{j-1}(X_Δ)}] ∧ e^{G(x)}`.
///
/// Each step conditions on the Poisson number of jumps in `Δ`, keeping at
/// most `k_max`. The dropped mass is bounded by
/// `e^{dΔ} e^{x} e^{μ(e-1)} P[Poisson(eμ) > k_max]` with `μ = λΔ`, and the
/// bracket width at `x0` is returned as the error budget.
pub fn dyadic_finite_horizon(
    params: &PdmpParams,
    x0: f64,
    t: f64,
    m: u32,
    k_max: usize,
    budget_limit: f64,
) -> Result<DyadicValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams("T must be positive"));
    }
    if !(x0 >= 0.0 && x0.is_finite()) {
        return Err(Error::InvalidParams("x0 must be finite and non-negative"));
    }
    if k_max < 1 {
        return Err(Error::InvalidParams("k_max must be at least 1"));
    }
    if m > 20 {
        return Err(Error::InvalidParams("m must be at most 20"));
    }
    let steps = 1usize << m;
    let delta = t / steps as f64;
    let mu = params.lambda * delta;
    let d_delta = params.d * delta;
    let (alpha, q) = (params.alpha, 1.0 - params.alpha);
    let (ln_a, ln_q) = (ln(alpha), ln(q));
    let ln_pois: Vec<f64> =
        (0..=k_max).map(|n| -mu + if n == 0 { 0.0 } else { n as f64 * ln(mu) } - lgamma(n as f64 + 1.0)).collect();
    let pow_q = |n: usize| if n == 0 { 0.0 } else { n as f64 * ln_q };
    let ln_rem_factor = d_delta + mu * (core::f64::consts::E - 1.0) + ln_poisson_tail(core::f64::consts::E * mu, k_max);

    // Grid: the upward path x0 + j and the reset chain i, j, i <= span.
    let span = k_max.saturating_mul(steps);
    if span > 50_000_000 {
        return Err(Error::InvalidParams("state grid too large; lower m or k_max"));
    }
    let up_g: Vec<f64> = (0..=span).map(|j| x0 + j as f64).collect();
    let reset_g: Vec<f64> = (0..=span).map(|i| i as f64).collect();

    let n_terms = 2 * (k_max + 1) + 1;
    let run = |upper: bool| -> f64 {
        let mut up = alloc::vec![0.0; span + 1];
        let mut reset = alloc::vec![0.0; span + 1];
        let mut up_next = up.clone();
        let mut reset_next = reset.clone();
        let mut prefix = alloc::vec![f64::NEG_INFINITY; k_max + 1];
        let mut terms = alloc::vec![f64::NEG_INFINITY; n_terms];
        for _ in 0..steps {
            // prefix[n] = ln sum_{i<n} alpha (1-alpha)^i e^{w(i)}
            for n in 1..=k_max {
                prefix[n] = log_add_exp(prefix[n - 1], ln_a + pow_q(n - 1) + reset[n - 1]);
            }
            let mut update = |vals: &[f64], grid: &[f64], out: &mut [f64]| {
                for idx in 0..=span {
                    for n in 0..=k_max {
                        let target = idx + n;
                        // Beyond the grid w <= G is used, which only the
                        // upper bound relies on.
                        let w = if target <= span { vals[target] } else { grid[idx] + n as f64 };
                        terms[2 * n] = ln_pois[n] + pow_q(n) + w;
                        terms[2 * n + 1] = ln_pois[n] + prefix[n];
                    }
                    terms[n_terms - 1] =
                        if upper { ln_rem_factor - d_delta + grid[idx] } else { f64::NEG_INFINITY };
                    let cont = d_delta + log_sum_exp(&terms);
                    let g = grid[idx];
                    out[idx] = if g - cont <= crate::TIE_TOL { g } else { cont };
                }
            };
            update(&up, &up_g, &mut up_next);
            update(&reset, &reset_g, &mut reset_next);
            core::mem::swap(&mut up, &mut up_next);
            core::mem::swap(&mut reset, &mut reset_next);
        }
        up[0]
    };
    let value = run(false);
    let upper = run(true);
    let budget = (upper - value).max(0.0);
    if budget > budget_limit {
        return Err(Error::BudgetExceeded { budget, limit: budget_limit });
    }
    Ok(DyadicValue { value, upper, budget, delta, steps })
}

/// Smallest Poisson truncation order whose remainder factor is below `eps`
/// for steps of length `delta`.
pub fn suggested_k_max(params: &PdmpParams, delta: f64, eps: f64) -> usize {
    let nu = core::f64::consts::E * params.lambda * delta;
    let mut k = 1usize;
    while k < 10_000 && ln_poisson_tail(nu, k) + nu > ln(eps) {
        k += 1;
    }
    k
}
