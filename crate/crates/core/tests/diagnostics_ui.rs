use std::collections::BTreeMap;

use proptest::prelude::*;
use riskstop_core::closed_form::Ex3Params;
use riskstop_core::costs::{CostFn, CostSpec};
use riskstop_core::diagnostics::{gap_report, ui_profile, UiMethod, UiMode, Verdict};
use riskstop_core::value::Closure;
use riskstop_core::{iterate_from_above, iterate_from_below, IterateOptions, KernelRow, LogValueFn, MarkovModel, State, StoppingPolicy};

fn s(x: f64) -> State {
    State::at(x)
}

fn table_model(n: usize) -> impl Strategy<Value = MarkovModel> {
    let row = proptest::collection::vec((0..n, 0.05f64..1.0), 1..=3);
    (
        proptest::collection::vec(row, n),
        proptest::collection::vec(0.1f64..1.0, n),
        proptest::collection::vec(0.0f64..5.0, n),
    )
        .prop_map(move |(rows, g, big_g)| {
            let mut table = BTreeMap::new();
            for (i, atoms) in rows.into_iter().enumerate() {
                let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
                for (j, w) in atoms {
                    *merged.entry(j).or_default() += w;
                }
                let total: f64 = merged.values().sum();
                let mut list: Vec<(State, f64)> = merged.into_iter().map(|(j, w)| (s(j as f64), w / total)).collect();
                let rest: f64 = list[1..].iter().map(|a| a.1).sum();
                list[0].1 = 1.0 - rest;
                table.insert(s(i as f64), KernelRow::atoms(list));
            }
            let costs = CostSpec {
                running: CostFn::Table { values: (0..n).map(|i| (s(i as f64), g[i])).collect(), default: 1.0 },
                terminal: CostFn::Table { values: (0..n).map(|i| (s(i as f64), big_g[i])).collect(), default: 0.0 },
                c_lower: 0.1,
                g_upper: 1.0,
                terminal_cap: f64::INFINITY,
            };
            MarkovModel::table(table, costs).unwrap()
        })
}

/// `E_x[1{tau > T} Z_T]` summed over every path of length `T`.
fn enumerate(m: &MarkovModel, stop: &StoppingPolicy, x: State, t: usize, step: usize, acc: f64) -> f64 {
    if stop.stops(&m.costs, x, step) {
        return 0.0;
    }
    if step == t {
        return (acc + m.costs.terminal(x)).exp();
    }
    let acc = acc + m.costs.running(x);
    m.kernel
        .row(x)
        .unwrap()
        .atoms
        .iter()
        .map(|&(y, p)| p * enumerate(m, stop, y, t, step + 1, acc))
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn analytic_profile_matches_path_enumeration(m in table_model(4), stop_set in proptest::collection::btree_set(0usize..4, 0..2)) {
        let stop = StoppingPolicy::StopOn(stop_set.into_iter().map(|i| s(i as f64)).collect());
        let x0 = s(3.0);
        let grid: Vec<usize> = (0..=12).collect();
        let prof = ui_profile(&m, &stop, x0, &grid, UiMethod::Analytic).unwrap();
        for (&t, &v) in grid.iter().zip(&prof.values) {
            let want = enumerate(&m, &stop, x0, t, 0, 0.0);
            if want == 0.0 {
                prop_assert_eq!(v, f64::NEG_INFINITY);
            } else {
                prop_assert!((v.exp() - want).abs() <= 1e-10 * want, "T={}: {} vs {}", t, v.exp(), want);
            }
        }
    }
}

#[test]
fn ex3_profile_matches_brute_force_to_t20() {
    let m = MarkovModel::ex3(0.5, 0.5).unwrap();
    let k = Ex3Params::new(0.5, 0.5).unwrap().k().unwrap();
    let policy = StoppingPolicy::Hitting(LogValueFn::closure_only(s(0.0), Closure::Terminal { cap: k }));
    let grid: Vec<usize> = (0..=20).collect();
    let prof = ui_profile(&m, &policy, s(2.5), &grid, UiMethod::Analytic).unwrap();
    for (&t, &v) in grid.iter().zip(&prof.values) {
        let want = enumerate(&m, &policy, s(2.5), t, 0, 0.0);
        assert!((v.exp() - want).abs() <= 1e-10 * want, "T={t}");
    }
}

#[test]
fn ui_growth_rates_and_verdicts() {
    for (alpha, verdict) in [(0.5, Verdict::NonVanishing), (0.9, Verdict::Vanishing)] {
        let p = Ex3Params::new(alpha, 0.5).unwrap();
        let m = MarkovModel::ex3(alpha, 0.5).unwrap();
        let policy = StoppingPolicy::Hitting(LogValueFn::closure_only(s(0.0), Closure::Terminal { cap: p.k().unwrap() }));
        let grid: Vec<usize> = (0..=12).map(|i| 1usize << i).collect();
        let prof = ui_profile(&m, &policy, s(5.0), &grid, UiMethod::Analytic).unwrap();
        assert_eq!(prof.mode, UiMode::Analytic);
        assert_eq!(prof.verdict, verdict);
        assert!((prof.growth_rate.unwrap() - p.ui_growth()).abs() < 1e-9);
    }
}

#[test]
fn monte_carlo_profile_brackets_the_analytic_one() {
    let m = MarkovModel::ex3(0.5, 0.5).unwrap();
    let policy = StoppingPolicy::StopOn([s(0.0)].into_iter().collect());
    let grid = [1, 2, 3, 4, 5];
    let exact = ui_profile(&m, &policy, s(1.0), &grid, UiMethod::Analytic).unwrap();
    let mc = ui_profile(&m, &policy, s(1.0), &grid, UiMethod::MonteCarlo { n_traj: 200_000, seed: 8 }).unwrap();
    assert_eq!(mc.mode, UiMode::MonteCarlo);
    for ((lo, hi), v) in mc.intervals.unwrap().iter().zip(&exact.values) {
        assert!(lo <= v && v <= hi, "{lo} {v} {hi}");
    }
    assert_eq!(mc.verdict, Verdict::NonVanishing);
}

#[test]
fn pareto_profile_uses_the_product_formula() {
    let m = MarkovModel::ex1(0.5).unwrap();
    let policy = StoppingPolicy::StopOn([s(1.0)].into_iter().collect());
    let prof = ui_profile(&m, &policy, s(3.0), &[0, 1, 2, 3], UiMethod::Analytic).unwrap();
    assert_eq!(prof.values[0], 3.0);
    assert_eq!(prof.verdict, Verdict::Divergent);
}

#[test]
fn gap_report_in_the_gap_regime() {
    let m = MarkovModel::ex3(0.5, 0.5).unwrap();
    let states: Vec<State> = (0..=10).map(|i| s(i as f64)).collect();
    let opts = IterateOptions::new(1e-10, 5000).with_extra_states(states.clone());
    let u = iterate_from_below(&m, s(5.0), &opts).unwrap();
    let w = iterate_from_above(&m, s(5.0), &opts).unwrap();
    let rep = gap_report(&u, &w, &states, 1e-6).unwrap();
    assert!(!rep.unique && rep.conclusive);
    assert_eq!(rep.flagged.len(), 9);
    let other = MarkovModel::ex3(0.9, 0.5).unwrap();
    let w2 = iterate_from_above(&other, s(5.0), &opts).unwrap();
    assert!(gap_report(&u, &w2, &states, 1e-6).is_err());
}
