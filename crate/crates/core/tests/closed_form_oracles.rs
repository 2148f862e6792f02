use riskstop_core::closed_form::{
    ex1_values, ex3_cn, ex3_discontinuous_solution, ex3_values, Ex1Params, Ex3Params, Regime,
};
use riskstop_core::value::Closure;
use riskstop_core::{
    iterate_from_above, iterate_from_below, residual, verify_sandwich, IterateOptions, LogValueFn, MarkovModel, State,
};

fn s(x: f64) -> State {
    State::at(x)
}

fn grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 10.0).collect()
}

/// `min(x, c + ln(alpha e^{v(0)} + (1 - alpha) e^{v(x+1)}))` written out by hand.
fn ex3_operator(alpha: f64, c: f64, v: impl Fn(f64) -> f64, x: f64) -> f64 {
    let cont = c + (alpha * v(0.0).exp() + (1.0 - alpha) * v(x + 1.0).exp()).ln();
    if x - cont <= 1e-14 {
        x
    } else {
        cont
    }
}

const CASES: [(f64, f64); 9] = [
    (0.2, 0.5),
    (0.3, 0.5),
    (0.5, 0.5),
    (0.6, 0.5),
    (0.9, 0.5),
    (0.95, 0.1),
    (0.05, 2.0),
    (0.9, 2.0),
    (1.0, 1.0),
];

#[test]
fn ex3_closed_forms_are_fixed_points() {
    for (alpha, c) in CASES {
        let p = Ex3Params::new(alpha, c).unwrap();
        let u = |x: f64| ex3_values(&p, x).unwrap().0;
        let w = |x: f64| ex3_values(&p, x).unwrap().1;
        for x in grid() {
            for v in [&u as &dyn Fn(f64) -> f64, &w] {
                let r = (ex3_operator(alpha, c, v, x) - v(x)).abs();
                assert!(r <= 1e-12, "alpha={alpha} c={c} x={x}: residual {r}");
            }
        }
        // Same check through the library operator.
        let m = MarkovModel::ex3(alpha, c).unwrap();
        let states: Vec<State> = grid().into_iter().map(s).collect();
        let closure = match p.k() {
            Some(k) => Closure::Terminal { cap: k },
            None => Closure::TERMINAL,
        };
        let u_fn = LogValueFn::from_fn(s(0.0), states.clone(), closure, |x| u(x.coord()));
        assert!(residual(&m, &u_fn, &states).unwrap() <= 1e-12);
    }
}

#[test]
fn ex3_regime_shapes() {
    for (alpha, c) in CASES {
        let p = Ex3Params::new(alpha, c).unwrap();
        let (b1, b2) = (1.0 - (-c).exp(), 1.0 - (-c - 1.0).exp());
        let want = if alpha <= b1 {
            Regime::StopNow
        } else if alpha <= b2 {
            Regime::Gap
        } else {
            Regime::Wait
        };
        assert_eq!(p.regime(), want);
        for x in grid() {
            let (u, w) = ex3_values(&p, x).unwrap();
            match want {
                Regime::StopNow => assert!(u == x && w == x),
                Regime::Gap => assert!(u == x.min(p.k().unwrap()) && w == x),
                Regime::Wait => assert!(u == w && u == x.min(p.k().unwrap())),
            }
        }
    }
}

#[test]
fn ex3_cn_matches_the_iterates() {
    for (alpha, c) in [(0.5, 0.5), (0.9, 0.5), (0.2, 0.5), (0.6, 1.0)] {
        let p = Ex3Params::new(alpha, c).unwrap();
        let m = MarkovModel::ex3(alpha, c).unwrap();
        let x0 = 1000.0;
        let run = iterate_from_below(&m, s(x0), &IterateOptions::fixed_steps(60)).unwrap();
        for n in 0..=60 {
            // Direct sum in linear scale.
            let mut sum = 0.0;
            for k in 1..n {
                sum += alpha * (1.0 - alpha).powi(k as i32 - 1) * (k as f64 * c).exp();
            }
            if n > 0 {
                sum += (1.0 - alpha).powi(n as i32 - 1) * (n as f64 * c).exp();
            }
            let oracle = if n == 0 { 0.0 } else { sum.ln() };
            let cn = ex3_cn(&p, n);
            assert!((cn - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "n={n}");
            let got = run.trace[n][0];
            assert!((got - x0.min(cn)).abs() <= 1e-12 * cn.abs().max(1.0), "alpha={alpha} n={n}: {got} vs {cn}");
        }
    }
}

#[test]
fn discontinuous_solution_in_the_gap() {
    let (alpha, c) = (0.5, 0.5);
    let p = Ex3Params::new(alpha, c).unwrap();
    let k = p.k().unwrap();
    let sol = |x: f64| ex3_discontinuous_solution(&p, x).unwrap();
    for x in grid() {
        let r = (ex3_operator(alpha, c, sol, x) - sol(x)).abs();
        assert!(r <= 1e-12, "x={x}: {r}");
    }
    assert_eq!(sol(3.0), 3.0);
    assert_eq!(sol(3.5), k);
    assert!(ex3_discontinuous_solution(&Ex3Params::new(0.9, 0.5).unwrap(), 1.0).is_err());

    let m = MarkovModel::ex3(alpha, c).unwrap();
    let states: Vec<State> = grid().into_iter().map(s).collect();
    let opts = IterateOptions::new(1e-10, 5000).with_eval_depth(0).with_extra_states(states.clone());
    let u = iterate_from_below(&m, s(5.0), &opts).unwrap();
    let w = iterate_from_above(&m, s(5.0), &opts).unwrap();
    assert!(u.converged && w.converged);
    let cand = LogValueFn::from_fn(s(5.0), states.clone(), Closure::TERMINAL, |x| sol(x.coord()));
    let report = verify_sandwich(&u, &w, &cand, &states).unwrap();
    assert!(report.holds(), "{:?}", report.violations);
}

/// `c + ln E[exp min(X, b)]` by partial sums to 1e6 plus the integral tail.
fn ex1_step_oracle(c: f64, b: f64) -> f64 {
    let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
    let n = 1_000_000u64;
    let mut sum = 0.0;
    for k in (1..n).rev() {
        let kf = k as f64;
        sum += kf.min(b).exp() / (kf * kf);
    }
    sum += b.exp() / (n as f64 - 0.5);
    c + (sum / zeta2).ln()
}

#[test]
fn ex1_iterates_are_min_x_bn() {
    let c = 0.5;
    let p = Ex1Params::new(c).unwrap();
    let m = MarkovModel::ex1(c).unwrap();
    let xs: Vec<State> = (1..=30).map(|k| s(k as f64)).collect();
    let opts = IterateOptions { extra_states: xs.clone(), ..IterateOptions::fixed_steps(60) };
    let run = iterate_from_below(&m, s(1.0), &opts).unwrap();
    let mut b = 0.0;
    for n in 0..=60 {
        assert!((p.b_n(n) - b).abs() <= 1e-12 * b.max(1.0), "n={n}");
        for &x in &xs {
            let got = run.iterates[n].eval(&m.costs, x);
            assert!((got - x.coord().min(b)).abs() <= 1e-12 * b.max(1.0), "n={n} x={x:?}");
        }
        b = ex1_step_oracle(c, b);
    }
}

#[test]
fn ex1_limit_and_bound() {
    let p = Ex1Params::new(0.5).unwrap();
    let v = ex1_values(&p, 3.0).unwrap();
    assert!((v.u_bound - 2.041942).abs() < 1e-6);
    assert!(v.b_limit <= v.u_bound);
    assert!((ex1_step_oracle(0.5, v.b_limit) - v.b_limit).abs() <= 1e-12);
    assert_eq!(v.u, 3.0f64.min(v.b_limit));
    assert_eq!(v.w, 3.0);
    assert!(Ex1Params::new(Ex1Params::c_max()).is_err());
    assert!(ex1_values(&p, 1.5).is_err());
}
