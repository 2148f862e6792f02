//! Exact values for the two reference chains.
//!
//! The reset-or-advance chain (`P(x, 0) = alpha`, `P(x, x + 1) = 1 - alpha`,
//! `g ≡ c`, `G(x) = x`) has explicit minimal and maximal solutions in all
//! three parameter regimes. For the Pareto chain only a bound on `u` is
//! explicit; the scalar recursion `b_{n+1} = c + ln E[exp min(X, b_n)]`
//! gives `u = min(x, b)` exactly.

use core::fmt;

use crate::error::{Error, Result};
use crate::kernel::zeta_tail;
use crate::logspace::log_sum_exp;
use crate::math::{exp, exp_m1, floor, ln, ln_1p, sqrt};
use alloc::vec::Vec;

/// Parameter regimes of the reset-or-advance chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `alpha <= 1 - e^{-c}`: `u = w = x`.
    StopNow,
    /// `1 - e^{-c} < alpha <= 1 - e^{-c-1}`: `u = x ∧ K < w = x`.
    Gap,
    /// `alpha > 1 - e^{-c-1}`: `u = w = x ∧ K`.
    Wait,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::StopNow => "stop-now",
            Regime::Gap => "gap",
            Regime::Wait => "wait",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex3Params {
    pub alpha: f64,
    pub c: f64,
}

impl Ex3Params {
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParams("alpha must lie in [0, 1]"));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParams("c must be positive and finite"));
        }
        Ok(Ex3Params { alpha, c })
    }

    /// `(1 - alpha) e^c`, the growth factor of `c_n`.
    pub fn growth(&self) -> f64 {
        (1.0 - self.alpha) * exp(self.c)
    }

    /// `K = ln(alpha e^c / (1 - (1 - alpha) e^c))` when `(1 - alpha) e^c < 1`.
    pub fn k(&self) -> Option<f64> {
        let r = self.growth();
        if r < 1.0 {
            Some(ln(self.alpha) + self.c - ln_1p(-r))
        } else {
            None
        }
    }

    /// Upper ends of the stop-now and gap intervals.
    pub fn boundaries(c: f64) -> (f64, f64) {
        (-exp_m1(-c), -exp_m1(-c - 1.0))
    }

    pub fn regime(&self) -> Regime {
        let (b1, b2) = Self::boundaries(self.c);
        if self.alpha <= b1 {
            Regime::StopNow
        } else if self.alpha <= b2 {
            Regime::Gap
        } else {
            Regime::Wait
        }
    }

    /// `ln((1 - alpha) e^{c+1})`, the per-step log growth of
    /// `E[1{tau > T} Z_T]` for the hitting rule of `u` started above `K`.
    pub fn ui_growth(&self) -> f64 {
        ln(1.0 - self.alpha) + self.c + 1.0
    }
}

/// Stop-now, gap or wait for the reset-or-advance chain.
pub fn regime_classifier(alpha: f64, c: f64) -> Result<Regime> {
    Ok(Ex3Params::new(alpha, c)?.regime())
}

fn check_coord(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams("state must be finite and non-negative"))
    }
}

/// `(u(x), w(x))`.
pub fn ex3_values(params: &Ex3Params, x: f64) -> Result<(f64, f64)> {
    check_coord(x)?;
    Ok(match (params.regime(), params.k()) {
        (Regime::StopNow, _) => (x, x),
        (Regime::Gap, Some(k)) => (x.min(k), x),
        (Regime::Wait, Some(k)) => (x.min(k), x.min(k)),
        // K is defined outside the stop-now regime.
        _ => (x, x),
    })
}

/// Constant part `c_n` of the `n`-th from-below iterate,
/// `w_n(x) = min(x, c_n)` for `x >= n`:
/// `e^{c_n} = sum_{k=1}^{n-1} alpha (1-alpha)^{k-1} e^{kc} + (1-alpha)^{n-1} e^{nc}`,
/// with `c_0 = 0`.
pub fn ex3_cn(params: &Ex3Params, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let ln_a = ln(params.alpha);
    let ln_q = ln(1.0 - params.alpha);
    let pow = |p: usize| if p == 0 { 0.0 } else { p as f64 * ln_q };
    let mut terms: Vec<f64> = (1..n).map(|k| ln_a + pow(k - 1) + k as f64 * params.c).collect();
    terms.push(pow(n - 1) + n as f64 * params.c);
    log_sum_exp(&terms)
}

/// The extra solution `x` on `[0, K] ∪ N`, `K` elsewhere (gap regime only).
pub fn ex3_discontinuous_solution(params: &Ex3Params, x: f64) -> Result<f64> {
    check_coord(x)?;
    match (params.regime(), params.k()) {
        (Regime::Gap, Some(k)) => Ok(if x <= k || x == floor(x) { x } else { k }),
        _ => Err(Error::WrongRegime("the discontinuous solution exists in the gap regime only")),
    }
}

/// `P[X = 1] = 6 / pi^2` for the Pareto law `1 / (C k^2)`.
pub const P1: f64 = 6.0 / (core::f64::consts::PI * core::f64::consts::PI);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex1Params {
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex1Values {
    /// `min(x, b_limit)`.
    pub u: f64,
    /// `ln B`, the value of waiting for state 1.
    pub u_bound: f64,
    pub w: f64,
    pub b_limit: f64,
}

impl Ex1Params {
    /// Requires `0 < c < -ln(1 - p1)`.
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < Self::c_max()) {
            return Err(Error::InvalidParams("c must lie in (0, -ln(1 - p1))"));
        }
        Ok(Ex1Params { c })
    }

    pub fn c_max() -> f64 {
        -ln_1p(-P1)
    }

    /// `ln B` with `B = p1 e^{c+1} / (1 - e^c (1 - p1))`.
    pub fn ln_b(&self) -> f64 {
        ln(P1) + self.c + 1.0 - ln_1p(-exp(self.c) * (1.0 - P1))
    }

    /// `e (1 - p1)^{1/2}`.
    pub fn growth_ratio() -> f64 {
        core::f64::consts::E * sqrt(1.0 - P1)
    }

    /// `c + ln E[exp min(X, b)]`.
    pub fn step(&self, b: f64) -> f64 {
        let zeta2 = core::f64::consts::PI * core::f64::consts::PI / 6.0;
        let m = floor(b.max(0.0));
        let mut terms = Vec::new();
        let mut k = 1.0;
        while k <= m {
            terms.push(k - 2.0 * ln(k));
            k += 1.0;
        }
        terms.push(b + ln(zeta_tail(2.0, m + 1.0)));
        self.c + log_sum_exp(&terms) - ln(zeta2)
    }

    /// `b_n` with `b_0 = 0`.
    pub fn b_n(&self, n: usize) -> f64 {
        (0..n).fold(0.0, |b, _| self.step(b))
    }

    /// `lim b_n`.
    pub fn b_limit(&self) -> f64 {
        let mut b = 0.0;
        for _ in 0..1_000_000 {
            let next = self.step(b);
            if (next - b).abs() <= 1e-15 * next.abs().max(1.0) {
                return next;
            }
            b = next;
        }
        b
    }
}

/// Values of the Pareto chain at a positive integer state.
pub fn ex1_values(params: &Ex1Params, x: f64) -> Result<Ex1Values> {
    if !(x >= 1.0 && x == floor(x) && x.is_finite()) {
        return Err(Error::InvalidParams("state must be a positive integer"));
    }
    let b = params.b_limit();
    Ok(Ex1Values { u: x.min(b), u_bound: params.ln_b(), w: x, b_limit: b })
}
