//! States are points of a subset of the real line.
//!
//! The built-in models live on `[0, inf)` or on the positive integers, so a
//! state is identified with its coordinate. Ordering is `f64::total_cmp`
//! after normalising `-0.0`, which makes `State` usable as a map key.

use alloc::string::String;
use core::cmp::Ordering;
use core::fmt;
use core::hash::{Hash, Hasher};
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy)]
pub struct State(f64);

impl State {
    pub fn new(coord: f64) -> Result<Self> {
        if !coord.is_finite() {
            return Err(Error::InvalidParams("state coordinate must be finite"));
        }
        // 0.0 and -0.0 must be the same key.
        Ok(State(if coord == 0.0 { 0.0 } else { coord }))
    }

    /// Panics on a non-finite coordinate; for literals and internal arithmetic.
    pub fn at(coord: f64) -> Self {
        Self::new(coord).expect("finite state coordinate")
    }

    #[inline]
    pub fn coord(self) -> f64 {
        self.0
    }

    /// Shortest decimal text that parses back to the same coordinate.
    pub fn encode(self) -> String {
        alloc::format!("{}", self.0)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let coord = f64::from_str(text.trim())
            .map_err(|_| Error::InvalidParams("state is not a decimal number"))?;
        Self::new(coord)
    }

    /// `true` when the coordinate is a whole number.
    pub fn is_integer(self) -> bool {
        self.0 == crate::math::floor(self.0)
    }
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for State {}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Hash for State {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({})", self.0)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
