use proptest::prelude::*;
use riskstop_core::rng::stream;
use riskstop_core::value::Closure;
use riskstop_core::{log_mgf, sample_next, LogValueFn, MarkovModel, State};

fn s(x: f64) -> State {
    State::at(x)
}

/// Binomial 3-sigma check of an empirical frequency.
fn within_binomial(hits: usize, n: usize, p: f64) -> bool {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    ((hits as f64 / n as f64) - p).abs() <= 3.0 * sd
}

#[test]
fn pareto_first_atom_frequency() {
    let m = MarkovModel::ex1(0.5).unwrap();
    let mut rng = stream(2024, 0);
    let n = 1_000_000;
    let mut ones = 0;
    let mut twos = 0;
    for _ in 0..n {
        match sample_next(&m, s(1.0), &mut rng).unwrap().coord() as u64 {
            1 => ones += 1,
            2 => twos += 1,
            _ => {}
        }
    }
    let p1 = 6.0 / std::f64::consts::PI.powi(2);
    assert!(within_binomial(ones, n, p1));
    assert!(within_binomial(twos, n, p1 / 4.0));
}

#[test]
fn reset_row_frequencies() {
    for alpha in [0.1, 0.5, 0.9] {
        let m = MarkovModel::ex3(alpha, 0.5).unwrap();
        let mut rng = stream(77, 1);
        let n = 200_000;
        let resets = (0..n).filter(|_| sample_next(&m, s(3.0), &mut rng).unwrap() == s(0.0)).count();
        assert!(within_binomial(resets, n, alpha), "alpha = {alpha}");
    }
}

#[test]
fn pareto_mgf_of_capped_terminal_matches_partial_sums() {
    let m = MarkovModel::ex1(0.5).unwrap();
    let c = std::f64::consts::PI.powi(2) / 6.0;
    for cap in [0.5, 1.0, 3.7, 12.0] {
        let v = LogValueFn::closure_only(s(1.0), Closure::Terminal { cap });
        let got = log_mgf(&m, s(4.0), &v).unwrap();
        // Partial sums to 1e6 plus the integral remainder of the capped part.
        let n = 1_000_000u64;
        let mut sum = 0.0;
        for k in (1..n).rev() {
            let k = k as f64;
            sum += (k.min(cap)).exp() / (c * k * k);
        }
        sum += cap.exp() / (c * n as f64 - 0.5 * c);
        assert!((got - sum.ln()).abs() < 1e-12, "cap = {cap}");
    }
}

proptest! {
    #[test]
    fn mgf_of_constant_is_the_constant(a in -50.0f64..50.0, x in 0.0f64..100.0, alpha in 0.0f64..=1.0) {
        let m = MarkovModel::ex3(alpha, 0.5).unwrap();
        let v = LogValueFn::constant(s(x), a);
        prop_assert!((log_mgf(&m, s(x), &v).unwrap() - a).abs() <= 1e-12 * a.abs().max(1.0));
        let p = MarkovModel::ex1(0.5).unwrap();
        prop_assert!((log_mgf(&p, s(1.0), &v).unwrap() - a).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn mgf_is_monotone_in_v(
        alpha in 0.0f64..=1.0,
        caps in (0.0f64..20.0, 0.0f64..20.0),
        x in 0.0f64..30.0,
        bumps in proptest::collection::vec((0u32..40, 0.0f64..3.0), 0..6),
    ) {
        let (lo_cap, hi_cap) = if caps.0 <= caps.1 { caps } else { (caps.1, caps.0) };
        let mut lo = LogValueFn::closure_only(s(x), Closure::Terminal { cap: lo_cap });
        let mut hi = LogValueFn::closure_only(s(x), Closure::Terminal { cap: hi_cap });
        for (k, b) in bumps {
            let y = s(k as f64);
            let base = y.coord().min(lo_cap);
            lo.insert(y, base);
            hi.insert(y, base + b);
        }
        for m in [MarkovModel::ex3(alpha, 0.5).unwrap(), MarkovModel::ex1(0.5).unwrap()] {
            let x = if m.check_state(s(x)).is_ok() { s(x) } else { s(1.0) };
            let a = log_mgf(&m, x, &lo).unwrap();
            let b = log_mgf(&m, x, &hi).unwrap();
            prop_assert!(a <= b + 1e-12, "{a} > {b}");
        }
    }
}
