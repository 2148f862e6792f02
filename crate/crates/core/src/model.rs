//! Discrete-time Markov models with running and terminal costs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::costs::{CostFn, CostSpec};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelRow, PowerLawTail, Tail, TailIntegrand};
use crate::logspace::{log_add_exp, log_sum_exp_weighted};
use crate::math::{exp, ln};
use crate::rng::{uniform, uniform_pos};
use crate::state::State;
use crate::value::{Closure, LogValueFn};

/// Admissible states of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    NonNegative,
    PositiveIntegers,
    /// Exactly the states listed in a table kernel.
    TableStates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    pub kernel: Kernel,
    pub costs: CostSpec,
    pub domain: Domain,
}

impl MarkovModel {
    pub fn new(kernel: Kernel, costs: CostSpec, domain: Domain) -> Result<Self> {
        kernel.validate()?;
        if costs.c_lower.is_nan() || costs.g_upper.is_nan() || costs.terminal_cap.is_nan() {
            return Err(Error::InvalidParams("cost bounds must not be NaN"));
        }
        if domain == Domain::TableStates && !matches!(kernel, Kernel::Table(_)) {
            return Err(Error::InvalidParams("table domain needs a table kernel"));
        }
        Ok(MarkovModel { kernel, costs, domain })
    }

    /// i.i.d. discrete Pareto draws `P[X = k] = 1 / (C k^2)`, `C = pi^2/6`,
    /// with `g ≡ c` and `G(x) = x`.
    pub fn ex1(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParams("c must be positive and finite"));
        }
        let row = KernelRow {
            atoms: Vec::new(),
            tail: Some(Tail::PowerLaw(PowerLawTail { start: 1, exponent: 2.0, mass: 1.0 })),
        };
        Self::new(
            Kernel::Iid(row),
            CostSpec::constant_running_identity_terminal(c),
            Domain::PositiveIntegers,
        )
    }

    /// Reset to `0` with probability `alpha`, otherwise move up by one; with
    /// `g ≡ c` and `G(x) = x` on `[0, inf)`.
    pub fn ex3(alpha: f64, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParams("alpha must lie in [0, 1]"));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParams("c must be positive and finite"));
        }
        Self::new(
            Kernel::ResetOrAdvance { alpha, step: 1.0 },
            CostSpec::constant_running_identity_terminal(c),
            Domain::NonNegative,
        )
    }

    /// Explicit rows; the domain is the set of row keys.
    pub fn table(rows: BTreeMap<State, KernelRow>, costs: CostSpec) -> Result<Self> {
        let model = Self::new(Kernel::Table(rows), costs, Domain::TableStates)?;
        if let Kernel::Table(rows) = &model.kernel {
            for row in rows.values() {
                if row.tail.is_some() {
                    return Err(Error::InvalidKernel("table rows must be finite"));
                }
                for (s, _) in &row.atoms {
                    if !rows.contains_key(s) {
                        return Err(Error::InvalidKernel("atom has no row of its own"));
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn with_costs(&self, costs: CostSpec) -> Self {
        MarkovModel { costs, ..self.clone() }
    }

    pub fn check_state(&self, x: State) -> Result<()> {
        let ok = match self.domain {
            Domain::Real => true,
            Domain::NonNegative => x.coord() >= 0.0,
            Domain::PositiveIntegers => x.is_integer() && x.coord() >= 1.0,
            Domain::TableStates => match &self.kernel {
                Kernel::Table(rows) => rows.contains_key(&x),
                _ => false,
            },
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidState { state: x, reason: "outside the model's state space" })
        }
    }

    /// `g(x) + ln E_x[exp v(X_1)]` does not depend on `x`.
    pub fn has_homogeneous_continuation(&self) -> bool {
        self.kernel.is_iid() && self.costs.running.as_constant().is_some()
    }

    /// States reachable from `x` in at most `n` steps.
    ///
    /// Fails when a row on the way carries an infinite tail.
    pub fn reachable(&self, x: State, n: usize) -> Result<BTreeSet<State>> {
        let mut seen = BTreeSet::new();
        seen.insert(x);
        let mut frontier = alloc::vec![x];
        for _ in 0..n {
            let mut next = Vec::new();
            for s in frontier {
                let row = self.kernel.row(s)?;
                if row.tail.is_some() {
                    return Err(Error::InvalidKernel("reachable set is infinite"));
                }
                for (y, _) in &row.atoms {
                    if seen.insert(*y) {
                        next.push(*y);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(seen)
    }
}

/// One failed check of the standing cost assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// `None` for model-level problems.
    pub state: Option<State>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    LowerBoundNotPositive { c_lower: f64 },
    RunningBelowLower { value: f64 },
    RunningAboveUpper { value: f64 },
    NegativeTerminal { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.state {
            write!(f, "x = {s}: ")?;
        }
        match self.kind {
            ViolationKind::LowerBoundNotPositive { c_lower } => {
                write!(f, "c_lower = {c_lower} is not positive")
            }
            ViolationKind::RunningBelowLower { value } => write!(f, "g below c_lower (g = {value})"),
            ViolationKind::RunningAboveUpper { value } => write!(f, "g above g_upper (g = {value})"),
            ViolationKind::NegativeTerminal { value } => write!(f, "G negative (G = {value})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `0 < c_lower <= g <= g_upper` and `G >= 0` on the probe states.
pub fn validate_costs(model: &MarkovModel, probe_states: &[State]) -> ValidationReport {
    let costs = &model.costs;
    let mut violations = Vec::new();
    if !(costs.c_lower > 0.0) {
        violations.push(Violation {
            state: None,
            kind: ViolationKind::LowerBoundNotPositive { c_lower: costs.c_lower },
        });
    }
    for &x in probe_states {
        let g = costs.running(x);
        if !(g >= costs.c_lower) || !(g > 0.0) {
            violations.push(Violation { state: Some(x), kind: ViolationKind::RunningBelowLower { value: g } });
        }
        if !(g <= costs.g_upper) {
            violations.push(Violation { state: Some(x), kind: ViolationKind::RunningAboveUpper { value: g } });
        }
        let big_g = costs.terminal.eval(x);
        if !(big_g >= 0.0) {
            violations.push(Violation {
                state: Some(x),
                kind: ViolationKind::NegativeTerminal { value: big_g },
            });
        }
    }
    ValidationReport { violations }
}

/// `ln E_x[exp v(X_1)]`, `+inf` when the kernel certifies divergence.
pub fn log_mgf(model: &MarkovModel, x: State, v: &LogValueFn) -> Result<f64> {
    let row = model.kernel.row(x)?;
    let atoms = log_sum_exp_weighted(
        row.atoms.iter().map(|&(y, p)| (ln(p), v.eval(&model.costs, y))),
    );
    match &row.tail {
        None => Ok(atoms),
        Some(Tail::PowerLaw(t)) => {
            let explicit = v.values.iter().filter(|(s, _)| t.contains(**s)).map(|(s, val)| (*s, *val));
            let tail = tail_log_expectation(t, &model.costs, v.closure, explicit)?;
            Ok(log_add_exp(atoms, tail))
        }
    }
}

/// `ln sum_k P[X = k] exp v(k)` over a power-law tail, where `v` is the
/// closure rule except at the `explicit` states.
pub(crate) fn tail_log_expectation(
    tail: &PowerLawTail,
    costs: &CostSpec,
    closure: Closure,
    explicit: impl Iterator<Item = (State, f64)>,
) -> Result<f64> {
    let base = closure_tail(tail, costs, closure)?;
    let corrections: Vec<(f64, f64, f64)> = explicit
        .filter_map(|(s, val)| {
            let cl = closure.eval(costs, s);
            (val != cl).then(|| (tail.ln_prob(s.coord()), val, cl))
        })
        .collect();
    Ok(correct(base, &corrections))
}

/// Tail expectation of the closure rule alone.
pub(crate) fn closure_tail(tail: &PowerLawTail, costs: &CostSpec, closure: Closure) -> Result<f64> {
    match closure {
        Closure::Constant(a) => tail.log_expectation(0.0, a, TailIntegrand::capped(f64::INFINITY)),
        Closure::Terminal { cap } => {
            let (slope, intercept) = terminal_affine(costs)?;
            tail.log_expectation(slope, intercept, TailIntegrand::capped(cap.min(costs.terminal_cap)))
        }
    }
}

pub(crate) fn terminal_affine(costs: &CostSpec) -> Result<(f64, f64)> {
    match &costs.terminal {
        CostFn::Table { .. } => Err(Error::TailUndecidable),
        other => other.affine_form().ok_or(Error::TailUndecidable),
    }
}

/// `ln(exp(base) + sum p (exp(v) - exp(cl)))` for a correction list of
/// `(ln p, v, cl)`.
pub(crate) fn correct(base: f64, corrections: &[(f64, f64, f64)]) -> f64 {
    if corrections.is_empty() || base == f64::INFINITY {
        return base;
    }
    if base == f64::NEG_INFINITY {
        return log_sum_exp_weighted(corrections.iter().map(|&(lp, v, _)| (lp, v)));
    }
    let mut delta = 0.0;
    for &(lp, v, cl) in corrections {
        delta += exp(lp + v - base) - exp(lp + cl - base);
    }
    if delta == f64::INFINITY {
        return f64::INFINITY;
    }
    let scaled = 1.0 + delta;
    if scaled <= 0.0 {
        // Everything cancelled to rounding; fall back to the explicit part.
        return log_sum_exp_weighted(corrections.iter().map(|&(lp, v, _)| (lp, v)));
    }
    base + ln(scaled)
}

/// Draws `X_1` given `X_0 = x`.
pub fn sample_next<R: RngCore + ?Sized>(model: &MarkovModel, x: State, rng: &mut R) -> Result<State> {
    match &model.kernel {
        Kernel::ResetOrAdvance { alpha, step } => {
            let u = uniform(rng);
            if u < *alpha {
                Ok(State::at(0.0))
            } else {
                State::new(x.coord() + step)
            }
        }
        Kernel::Shift { step } => State::new(x.coord() + step),
        kernel => {
            let row = kernel.row(x)?;
            sample_row(&row, rng)
        }
    }
}

fn sample_row<R: RngCore + ?Sized>(row: &KernelRow, rng: &mut R) -> Result<State> {
    let u = uniform(rng);
    let mut acc = 0.0;
    for &(s, p) in &row.atoms {
        acc += p;
        if u < acc {
            return Ok(s);
        }
    }
    match &row.tail {
        Some(Tail::PowerLaw(t)) if t.mass > 0.0 => State::new(t.sample_index(uniform_pos(rng))),
        // Rounding left u beyond the cumulative sum: take the last atom.
        _ => row
            .atoms
            .iter()
            .rev()
            .find(|(_, p)| *p > 0.0)
            .map(|(s, _)| *s)
            .ok_or(Error::InvalidKernel("row has no mass")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn s(x: f64) -> State {
        State::at(x)
    }

    #[test]
    fn ex3_costs_satisfy_assumptions() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        assert!(validate_costs(&m, &[s(0.0), s(1.0), s(2.5)]).is_empty());
    }

    #[test]
    fn ex1_costs_satisfy_assumptions() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let probes: Vec<State> = (1..=50).map(|k| s(k as f64)).collect();
        assert!(validate_costs(&m, &probes).is_empty());
    }

    #[test]
    fn zero_running_cost_is_reported() {
        let mut m = MarkovModel::ex3(0.5, 0.5).unwrap();
        m.costs.running = CostFn::Constant(0.0);
        let report = validate_costs(&m, &[s(1.0)]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(alloc::format!("{}", report.violations[0]), "x = 1: g below c_lower (g = 0)");
        m.costs.c_lower = 0.0;
        let report = validate_costs(&m, &[s(1.0)]);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v.kind, ViolationKind::LowerBoundNotPositive { .. })));
    }

    #[test]
    fn negative_terminal_is_reported() {
        let mut m = MarkovModel::ex3(0.5, 0.5).unwrap();
        m.costs.terminal = CostFn::Affine { slope: 1.0, intercept: -1.0 };
        let report = validate_costs(&m, &[s(0.0), s(2.0)]);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].state, Some(s(0.0)));
    }

    #[test]
    fn log_mgf_of_zero_is_zero() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        assert_eq!(log_mgf(&m, s(3.0), &LogValueFn::zero(s(3.0))).unwrap(), 0.0);
    }

    #[test]
    fn ex1_terminal_expectation_is_infinite() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let v = LogValueFn::terminal(s(1.0));
        assert_eq!(log_mgf(&m, s(1.0), &v).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ex1_capped_below_one_is_the_cap() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let v = LogValueFn::closure_only(s(1.0), Closure::Terminal { cap: 0.5 });
        assert!((log_mgf(&m, s(1.0), &v).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn explicit_entries_correct_the_tail() {
        let m = MarkovModel::ex1(0.5).unwrap();
        let c = core::f64::consts::PI.powi(2) / 6.0;
        // v = 0 except v(1) = 1.
        let mut v = LogValueFn::constant(s(1.0), 0.0);
        v.insert(s(1.0), 1.0);
        let want = (1.0 + (1f64.exp() - 1.0) / c).ln();
        assert!((log_mgf(&m, s(5.0), &v).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn reachable_grows_with_depth() {
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        assert_eq!(m.reachable(s(5.0), 0).unwrap().len(), 1);
        let r2 = m.reachable(s(5.0), 2).unwrap();
        let want: BTreeSet<State> = [0.0, 1.0, 5.0, 6.0, 7.0].iter().map(|&x| s(x)).collect();
        assert_eq!(r2, want);
        assert!(MarkovModel::ex1(0.5).unwrap().reachable(s(1.0), 1).is_err());
    }

    #[test]
    fn degenerate_rows_sample_their_atom() {
        let mut rng = stream(3, 0);
        let one = MarkovModel::ex3(1.0, 0.5).unwrap();
        let zero = MarkovModel::ex3(0.0, 0.5).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_next(&one, s(4.0), &mut rng).unwrap(), s(0.0));
            assert_eq!(sample_next(&zero, s(4.0), &mut rng).unwrap(), s(5.0));
        }
    }

    #[test]
    fn domains() {
        let m = MarkovModel::ex1(0.5).unwrap();
        assert!(m.check_state(s(3.0)).is_ok());
        assert!(m.check_state(s(0.0)).is_err());
        assert!(m.check_state(s(1.5)).is_err());
        let m = MarkovModel::ex3(0.5, 0.5).unwrap();
        assert!(m.check_state(s(-1.0)).is_err());
        assert!(MarkovModel::ex3(1.5, 0.5).is_err());
        assert!(MarkovModel::ex3(0.5, 0.0).is_err());
    }
}
