//! Extended-real log-domain arithmetic.
//!
//! Values live in `[-inf, +inf]` as plain `f64`. `+inf` is a legitimate
//! result (an expectation certified infinite) and propagates through
//! addition; `min(G, +inf)` picks `G`.

use crate::math::{exp, ln, ln_1p};

/// `ln(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + ln_1p(exp(lo - hi))
}

/// `ln(e^a - e^b)` for `a >= b`. Returns `-inf` when the difference is zero
/// or negative through rounding.
#[inline]
pub fn log_sub_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a == f64::INFINITY {
        return f64::INFINITY;
    }
    if b >= a {
        return f64::NEG_INFINITY;
    }
    a + ln_1p(-exp(b - a))
}

/// `ln(sum e^x_i)`, `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum)
}

/// `ln(sum w_i e^x_i)` with non-negative weights given as `ln w_i`.
pub fn log_sum_exp_weighted(pairs: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let max = pairs
        .clone()
        .map(|(lw, x)| lw + x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = pairs.map(|(lw, x)| exp(lw + x - max)).sum();
    max + ln(sum)
}

/// `ln(mean e^x_i)`. Identical inputs return that input exactly.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| exp(x - max)).sum();
    max + ln(sum / xs.len() as f64)
}
