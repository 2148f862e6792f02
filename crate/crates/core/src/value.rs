//! Log-domain value functions over an enumerable support.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::costs::CostSpec;
use crate::error::Result;
use crate::state::State;

/// Value assigned to states outside the tabulated support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// `min(G(x), cap)`. A cap of `0` is the from-below start, `+inf` the
    /// from-above start.
    Terminal { cap: f64 },
    /// The same value everywhere.
    Constant(f64),
}

impl Closure {
    pub const ZERO: Closure = Closure::Terminal { cap: 0.0 };
    pub const TERMINAL: Closure = Closure::Terminal { cap: f64::INFINITY };

    pub fn eval(&self, costs: &CostSpec, x: State) -> f64 {
        match *self {
            Closure::Terminal { cap } => costs.terminal(x).min(cap),
            Closure::Constant(a) => a,
        }
    }
}

/// A function `v: E -> [-inf, +inf]` stored in log form.
#[derive(Debug, Clone, PartialEq)]
pub struct LogValueFn {
    pub base: State,
    pub values: BTreeMap<State, f64>,
    pub closure: Closure,
}

impl LogValueFn {
    /// Nothing tabulated; every state takes the closure value.
    pub fn closure_only(base: State, closure: Closure) -> Self {
        LogValueFn { base, values: BTreeMap::new(), closure }
    }

    /// `v ≡ 0`.
    pub fn zero(base: State) -> Self {
        Self::closure_only(base, Closure::Constant(0.0))
    }

    /// `v = G`.
    pub fn terminal(base: State) -> Self {
        Self::closure_only(base, Closure::TERMINAL)
    }

    pub fn constant(base: State, a: f64) -> Self {
        Self::closure_only(base, Closure::Constant(a))
    }

    /// Tabulates `f` on `states`.
    pub fn from_fn(
        base: State,
        states: impl IntoIterator<Item = State>,
        closure: Closure,
        mut f: impl FnMut(State) -> f64,
    ) -> Self {
        let values = states.into_iter().map(|s| (s, f(s))).collect();
        LogValueFn { base, values, closure }
    }

    /// Same as [`LogValueFn::from_fn`] on coordinates, rejecting invalid ones.
    pub fn from_coords(
        base: State,
        coords: &[f64],
        closure: Closure,
        mut f: impl FnMut(f64) -> f64,
    ) -> Result<Self> {
        let states = coords.iter().map(|&x| State::new(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self::from_fn(base, states, closure, |s| f(s.coord())))
    }

    pub fn eval(&self, costs: &CostSpec, x: State) -> f64 {
        match self.values.get(&x) {
            Some(v) => *v,
            None => self.closure.eval(costs, x),
        }
    }

    pub fn is_tabulated(&self, x: State) -> bool {
        self.values.contains_key(&x)
    }

    pub fn support(&self) -> impl Iterator<Item = State> + '_ {
        self.values.keys().copied()
    }

    pub fn insert(&mut self, x: State, v: f64) {
        self.values.insert(x, v);
    }
}
