//! Running and terminal cost functions.

use alloc::collections::BTreeMap;

use crate::state::State;

/// A cost as a function of the state coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum CostFn {
    Constant(f64),
    /// `slope * x + intercept`.
    Affine { slope: f64, intercept: f64 },
    /// Explicit values with a constant fallback.
    Table { values: BTreeMap<State, f64>, default: f64 },
}

impl CostFn {
    /// `G(x) = x`, the terminal cost of the reference examples.
    pub const IDENTITY: CostFn = CostFn::Affine { slope: 1.0, intercept: 0.0 };

    pub fn eval(&self, x: State) -> f64 {
        match self {
            CostFn::Constant(v) => *v,
            CostFn::Affine { slope, intercept } => slope * x.coord() + intercept,
            CostFn::Table { values, default } => values.get(&x).copied().unwrap_or(*default),
        }
    }

    /// `(slope, intercept)` when the function is affine everywhere.
    pub fn affine_form(&self) -> Option<(f64, f64)> {
        match self {
            CostFn::Constant(v) => Some((0.0, *v)),
            CostFn::Affine { slope, intercept } => Some((*slope, *intercept)),
            CostFn::Table { .. } => None,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            CostFn::Constant(v) => Some(*v),
            CostFn::Affine { slope, intercept } if *slope == 0.0 => Some(*intercept),
            _ => None,
        }
    }
}

/// Cost structure of a stopping problem.
///
/// `c_lower <= g <= g_upper` is the standing assumption on the running cost
/// and `G >= 0`; [`crate::validate_costs`] probes both. `terminal_cap`
/// replaces `G` by `G ∧ cap` (use `+inf` for no cap).
#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub running: CostFn,
    pub terminal: CostFn,
    pub c_lower: f64,
    pub g_upper: f64,
    pub terminal_cap: f64,
}

impl CostSpec {
    /// Constant running cost `c` and terminal cost `G(x) = x`.
    pub fn constant_running_identity_terminal(c: f64) -> Self {
        CostSpec {
            running: CostFn::Constant(c),
            terminal: CostFn::IDENTITY,
            c_lower: c,
            g_upper: c,
            terminal_cap: f64::INFINITY,
        }
    }

    #[inline]
    pub fn running(&self, x: State) -> f64 {
        self.running.eval(x)
    }

    /// `G(x) ∧ terminal_cap`.
    #[inline]
    pub fn terminal(&self, x: State) -> f64 {
        self.terminal.eval(x).min(self.terminal_cap)
    }

    pub fn with_terminal_cap(&self, cap: f64) -> Self {
        CostSpec { terminal_cap: self.terminal_cap.min(cap), ..self.clone() }
    }
}
