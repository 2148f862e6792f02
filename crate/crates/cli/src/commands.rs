use std::collections::{BTreeMap, BTreeSet};

use riskstop_core::closed_form::{
    ex1_values, ex3_discontinuous_solution, ex3_values, Ex1Params, Ex3Params, Regime,
};
use riskstop_core::costs::{CostFn, CostSpec};
use riskstop_core::diagnostics::{gap_report, regime_classifier, ui_profile, GapReport, UiMethod};
use riskstop_core::pdmp::{dyadic_finite_horizon, simulate_and_evaluate, simulate_path, suggested_k_max, PdmpParams};
use riskstop_core::policy::rollout_traces;
use riskstop_core::rng::stream;
use riskstop_core::value::Closure;
use riskstop_core::{
    evaluate_policy_mc, iterate_from_above, iterate_from_below, residual, validate_costs, verify_sandwich,
    BellmanRun, IterateOptions, KernelRow, LogValueFn, MarkovModel, McEstimate, State, StoppingPolicy,
};

use crate::config::{Family, PolicyChoice, Settings};
use crate::report::{list, Cell, Num, Report, Table};
use crate::{row, CliError};

/// Report, CSV tables and whether every numeric step succeeded.
pub struct Outcome {
    pub report: Report,
    pub tables: Vec<Table>,
    pub numeric_failure: Option<String>,
}

impl Outcome {
    fn new(report: Report) -> Self {
        Outcome { report, tables: Vec::new(), numeric_failure: None }
    }

    fn fail(&mut self, why: impl Into<String>) {
        if self.numeric_failure.is_none() {
            self.numeric_failure = Some(why.into());
        }
    }
}

fn state(x: f64) -> Result<State, CliError> {
    Ok(State::new(x)?)
}

fn pdmp_params(st: &Settings) -> Result<PdmpParams, CliError> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("{name} is required")));
    Ok(PdmpParams::new(need(st.lambda, "lambda")?, need(st.d, "d")?, st.alpha()?)?)
}

/// The discrete chain a command works on; `ex5` maps to its jump chain.
pub fn build_model(st: &Settings) -> Result<MarkovModel, CliError> {
    Ok(match st.family {
        Family::Ex1 => MarkovModel::ex1(st.c()?)?,
        Family::Ex3 => MarkovModel::ex3(st.alpha()?, st.c()?)?,
        Family::Ex5 => pdmp_params(st)?.embed()?,
        Family::Table => {
            let rows = st.table.as_deref().unwrap_or_default();
            let mut kernel = BTreeMap::new();
            let (mut g, mut big_g) = (BTreeMap::new(), BTreeMap::new());
            for r in rows {
                let x = state(r.x)?;
                let atoms = r.next.iter().map(|&(y, p)| Ok((state(y)?, p))).collect::<Result<Vec<_>, CliError>>()?;
                if kernel.insert(x, KernelRow::atoms(atoms)).is_some() {
                    return Err(CliError::Config(format!("state {} listed twice", r.x)));
                }
                g.insert(x, r.g);
                big_g.insert(x, r.big_g);
            }
            let lo = g.values().copied().fold(f64::INFINITY, f64::min);
            let hi = g.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let costs = CostSpec {
                running: CostFn::Table { values: g, default: 0.0 },
                terminal: CostFn::Table { values: big_g, default: 0.0 },
                c_lower: st.c_lower.unwrap_or(lo),
                g_upper: st.g_upper.unwrap_or(hi),
                terminal_cap: f64::INFINITY,
            };
            MarkovModel::table(kernel, costs)?
        }
    })
}

fn eval_states(st: &Settings, model: &MarkovModel) -> Result<Vec<State>, CliError> {
    let mut out: Vec<State> = Vec::new();
    for &x in st.states.iter().chain(std::iter::once(&st.x0)) {
        let x = state(x)?;
        model.check_state(x)?;
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out.sort();
    Ok(out)
}

fn iterate_opts(st: &Settings, states: &[State]) -> IterateOptions {
    IterateOptions::new(st.tol, st.max_iter)
        .with_eval_depth(st.eval_depth)
        .with_extra_states(states.iter().copied())
}

fn assumptions(report: &mut Report, model: &MarkovModel, states: &[State]) -> bool {
    let v = validate_costs(model, states);
    report.section("assumptions");
    report.kv("probe_states", states.len());
    report.kv("a1_bounds", if v.is_empty() { "ok" } else { "violated" });
    for (i, viol) in v.violations.iter().enumerate() {
        report.kv(&format!("a1_violation_{i}"), viol);
    }
    report.kv("a2_a3", "untested (only the running/terminal cost bounds are checked)");
    v.is_empty()
}

fn model_section(report: &mut Report, st: &Settings) {
    report.section("model");
    report.kv("family", st.family.name());
    for (k, v) in [("alpha", st.alpha), ("c", st.c), ("lambda", st.lambda), ("d", st.d)] {
        if let Some(v) = v {
            report.kv(k, v);
        }
    }
    if let Ok(p) = pdmp_params(st) {
        if st.family == Family::Ex5 {
            report.kv("c_embed", p.c_embed());
        }
    }
    if let Some(t) = &st.table {
        report.kv("table_states", t.len());
    }
    report.kv("x0", st.x0);
}

fn run_section(report: &mut Report, name: &str, run: &BellmanRun, x0: State) {
    report.section(name);
    report.kv("converged", run.converged);
    report.kv("iterations", run.iterations);
    report.kv("last_change", Num(run.last_change()));
    report.kv("monotone", run.monotone);
    report.kv("exact", run.exact);
    report.kv("support_size", run.support_size);
    report.kv("value_x0", run.at(x0));
}

fn trace_rows(table: &mut Table, run: &BellmanRun) {
    for (n, values) in run.trace.iter().enumerate() {
        let res = if n == 0 { String::new() } else { run.residuals[n - 1].cell() };
        for (x, v) in run.trace_states.iter().zip(values) {
            table.push(row![run.direction.name(), n, x, v, res]);
        }
    }
}

fn gap_section(report: &mut Report, gap: &GapReport) {
    report.section("gap");
    report.kv("verdict", if gap.unique { "unique" } else { "non-unique" });
    report.kv("conclusive", gap.conclusive);
    report.kv("slack", Num(gap.slack));
    report.kv("flagged_count", gap.flagged.len());
    report.kv("flagged", list(&gap.flagged));
    let max = gap.entries.iter().map(|e| e.gap).fold(0.0, f64::max);
    report.kv("max_gap", Num(max));
}

fn solve_pair(st: &Settings, model: &MarkovModel, states: &[State]) -> Result<(BellmanRun, BellmanRun), CliError> {
    let x0 = state(st.x0)?;
    let opts = iterate_opts(st, states);
    Ok((iterate_from_below(model, x0, &opts)?, iterate_from_above(model, x0, &opts)?))
}

pub fn solve(st: &Settings) -> Result<Outcome, CliError> {
    let model = build_model(st)?;
    let states = eval_states(st, &model)?;
    let x0 = state(st.x0)?;
    let mut out = Outcome::new(Report::new(st)?);
    model_section(&mut out.report, st);
    assumptions(&mut out.report, &model, &states);
    let (u, w) = solve_pair(st, &model, &states)?;
    run_section(&mut out.report, "below", &u, x0);
    run_section(&mut out.report, "above", &w, x0);
    for run in [&u, &w] {
        if !run.converged {
            out.fail(format!("{} iteration did not converge in {} steps", run.direction.name(), run.iterations));
        }
    }
    let gap = gap_report(&u, &w, &states, st.gap_tol)?;
    gap_section(&mut out.report, &gap);

    let mut values = Table::new("values", &["state", "u", "w", "gap", "flagged"]);
    for e in &gap.entries {
        values.push(row![e.state, e.u, e.w, e.gap, gap.flagged.contains(&e.state)]);
    }
    let mut iterations = Table::new("iterations", &["direction", "iteration", "state", "value", "residual"]);
    trace_rows(&mut iterations, &u);
    trace_rows(&mut iterations, &w);
    out.tables = vec![values, iterations];
    Ok(out)
}

/// The rule a stochastic command evaluates.
fn policy(st: &Settings, model: &MarkovModel) -> Result<(StoppingPolicy, String), CliError> {
    if let Some(set) = &st.stop_on {
        let set = set.iter().map(|&x| state(x)).collect::<Result<BTreeSet<_>, _>>()?;
        let name = format!("stop-on {}", list(&set.iter().collect::<Vec<_>>()));
        return Ok((StoppingPolicy::StopOn(set), name));
    }
    let states = eval_states(st, model)?;
    let x0 = state(st.x0)?;
    let opts = iterate_opts(st, &states);
    let run = match st.policy {
        PolicyChoice::Immediate => return Ok((StoppingPolicy::Immediate, "immediate".into())),
        PolicyChoice::U => iterate_from_below(model, x0, &opts)?,
        PolicyChoice::W => iterate_from_above(model, x0, &opts)?,
    };
    let run = run.ensure_converged()?;
    Ok((StoppingPolicy::Hitting(run.value), format!("hitting {}", if st.policy == PolicyChoice::U { "u" } else { "w" })))
}

fn estimate_section(report: &mut Report, est: &McEstimate) {
    report.section("estimate");
    report.kv("log_mean", est.log_mean);
    report.kv("ci_low", est.ci_low);
    report.kv("ci_high", est.ci_high);
    report.kv("n_traj", est.n_traj);
    report.kv("n_censored", est.n_censored);
    report.kv("seed", est.seed);
}

pub fn simulate(st: &Settings) -> Result<Outcome, CliError> {
    let seed = st.require_seed()?;
    let model = build_model(st)?;
    let x0 = state(st.x0)?;
    let mut out = Outcome::new(Report::new(st)?);
    model_section(&mut out.report, st);
    assumptions(&mut out.report, &model, &eval_states(st, &model)?);
    let (policy, name) = policy(st, &model)?;
    out.report.section("policy");
    out.report.kv("rule", name);
    let est = if st.family == Family::Ex5 {
        out.report.kv("time", "continuous");
        out.report.kv("t_cap", st.horizon_cap);
        simulate_and_evaluate(&pdmp_params(st)?, st.x0, &policy, st.n_traj, st.horizon_cap as f64, seed)?
    } else {
        out.report.kv("time", "discrete");
        out.report.kv("horizon_cap", st.horizon_cap);
        evaluate_policy_mc(&model, &policy, x0, st.n_traj, st.horizon_cap, seed)?
    };
    estimate_section(&mut out.report, &est);
    let mut est_table = Table::new("estimate", &["log_mean", "ci_low", "ci_high", "n_traj", "n_censored", "seed"]);
    est_table.push(row![est.log_mean, est.ci_low, est.ci_high, est.n_traj, est.n_censored, est.seed]);
    out.tables.push(est_table);

    if st.traces > 0 {
        if st.family == Family::Ex5 {
            let p = pdmp_params(st)?;
            let mut t = Table::new("traces", &["traj_id", "jump", "time", "state"]);
            for i in 0..st.traces {
                let path = simulate_path(&p, st.x0, st.horizon_cap as f64, &mut stream(seed, i as u64));
                t.push(row![i, 0usize, 0.0, path.x0]);
                for (j, (time, x)) in path.jump_times.iter().zip(&path.states).enumerate() {
                    t.push(row![i, j + 1, time, x]);
                }
            }
            out.tables.push(t);
        } else {
            let steps = rollout_traces(&model, &policy, x0, st.traces, st.horizon_cap, seed)?;
            let mut t = Table::new("traces", &["traj_id", "step", "state", "action", "running_cost"]);
            for r in steps {
                t.push(row![r.traj, r.step, r.state, if r.stop { "stop" } else { "continue" }, r.running_cost]);
            }
            out.tables.push(t);
        }
        out.report.kv("traces", st.traces);
    }
    Ok(out)
}

fn regime_section(report: &mut Report, alpha: f64, c: f64) -> Result<Regime, CliError> {
    let p = Ex3Params::new(alpha, c)?;
    let regime = regime_classifier(alpha, c)?;
    let (b1, b2) = Ex3Params::boundaries(c);
    report.section("regime");
    report.kv("regime", regime);
    report.kv("alpha_stop_now_max", b1);
    report.kv("alpha_gap_max", b2);
    report.kv("k", p.k().map_or_else(|| "none".to_string(), |k| k.to_string()));
    report.kv("ui_growth", p.ui_growth());
    Ok(regime)
}

pub fn diagnose(st: &Settings) -> Result<Outcome, CliError> {
    let model = build_model(st)?;
    let x0 = state(st.x0)?;
    let grid = st.int_t_grid()?;
    let mut out = Outcome::new(Report::new(st)?);
    model_section(&mut out.report, st);
    assumptions(&mut out.report, &model, &eval_states(st, &model)?);
    match st.family {
        Family::Ex3 => {
            regime_section(&mut out.report, st.alpha()?, st.c()?)?;
        }
        Family::Ex5 => {
            regime_section(&mut out.report, st.alpha()?, pdmp_params(st)?.c_embed())?;
        }
        _ => {}
    }
    let (policy, name) = policy(st, &model)?;
    out.report.section("policy");
    out.report.kv("rule", name);
    let method = match st.seed {
        Some(seed) => UiMethod::Auto { n_traj: st.n_traj, seed },
        None => UiMethod::Analytic,
    };
    let prof = ui_profile(&model, &policy, x0, &grid, method)?;
    out.report.section("ui");
    out.report.kv("mode", prof.mode);
    out.report.kv("verdict", prof.verdict);
    out.report.kv("growth_rate", prof.growth_rate.map_or_else(|| "none".to_string(), |g| g.to_string()));
    out.report.kv("t_max", grid.last().copied().unwrap_or(0));
    out.report.kv("log_value_t_max", prof.values.last().copied().unwrap_or(f64::NAN));
    let mut t = Table::new("ui_profile", &["T", "log_value", "ci_low", "ci_high"]);
    for (i, (tt, v)) in prof.t_grid.iter().zip(&prof.values).enumerate() {
        let (lo, hi) = prof.intervals.as_ref().map_or((*v, *v), |iv| iv[i]);
        t.push(row![tt, v, lo, hi]);
    }
    out.tables.push(t);
    Ok(out)
}

pub fn dyadic(st: &Settings) -> Result<Outcome, CliError> {
    if st.family != Family::Ex5 {
        return Err(CliError::Config("dyadic needs the ex5 family".into()));
    }
    let p = pdmp_params(st)?;
    let mut out = Outcome::new(Report::new(st)?);
    model_section(&mut out.report, st);
    let mut t = Table::new("dyadic", &["T", "m", "value", "upper", "budget", "delta", "k_max"]);
    let mut cells = Vec::new();
    for &big_t in &st.t_grid {
        for &m in &st.m {
            let delta = big_t / f64::from(1u32 << m.min(20));
            let k = st.k_max.unwrap_or_else(|| suggested_k_max(&p, delta, 1e-12));
            let v = dyadic_finite_horizon(&p, st.x0, big_t, m, k, st.budget_limit)?;
            t.push(row![big_t, m, v.value, v.upper, v.budget, v.delta, k]);
            cells.push((big_t, m, v));
        }
    }
    out.tables.push(t);

    // Monotonicity within the declared budgets.
    let ok_t = st.m.iter().all(|&m| {
        let col: Vec<_> = cells.iter().filter(|c| c.1 == m).collect();
        col.windows(2).all(|w| w[1].2.upper >= w[0].2.value)
    });
    let ok_m = st.t_grid.iter().all(|&tt| {
        let row: Vec<_> = cells.iter().filter(|c| c.0 == tt).collect();
        row.windows(2).all(|w| w[1].2.value <= w[0].2.upper)
    });
    let embedded = Ex3Params::new(p.alpha, p.c_embed())?;
    let target = ex3_values(&embedded, st.x0)?.0;
    let last = &cells[cells.len() - 1];
    out.report.section("dyadic");
    out.report.kv("cells", cells.len());
    out.report.kv("max_budget", Num(cells.iter().map(|c| c.2.budget).fold(0.0, f64::max)));
    out.report.kv("non_decreasing_in_t", ok_t);
    out.report.kv("non_increasing_in_m", ok_m);
    out.report.kv("embedded_u_x0", target);
    out.report.kv("last_cell", format!("T={} m={}", last.0, last.1));
    out.report.kv("last_value", last.2.value);
    out.report.kv("distance_to_embedded", Num((last.2.value - target).abs()));
    Ok(out)
}

struct Checks<'a> {
    report: &'a mut Report,
    all: bool,
}

impl Checks<'_> {
    fn check(&mut self, name: &str, pass: bool, detail: impl std::fmt::Display) {
        self.all &= pass;
        self.report.kv(name, format!("{} ({detail})", if pass { "pass" } else { "fail" }));
    }
}

fn max_err(run: &BellmanRun, states: &[State], f: impl Fn(f64) -> f64) -> f64 {
    states.iter().map(|&x| (run.at(x) - f(x.coord())).abs()).fold(0.0, f64::max)
}

pub fn example(st: &Settings) -> Result<Outcome, CliError> {
    let model = build_model(st)?;
    let states = eval_states(st, &model)?;
    let mut out = Outcome::new(Report::new(st)?);
    model_section(&mut out.report, st);
    assumptions(&mut out.report, &model, &states);
    let mut values = Table::new("values", &["state", "u", "w", "u_oracle", "w_oracle"]);
    let all = match st.family {
        Family::Ex3 => example_ex3(st, &model, &states, &mut out.report, &mut values)?,
        Family::Ex1 => example_ex1(st, &model, &states, &mut out.report, &mut values)?,
        Family::Ex5 => example_ex5(st, &model, &states, &mut out.report, &mut values)?,
        Family::Table => return Err(CliError::Config("example runs ex1, ex3 or ex5".into())),
    };
    out.report.section("summary");
    out.report.kv("result", if all { "pass" } else { "fail" });
    if !all {
        out.fail("a reproduction check failed");
    }
    out.tables.push(values);
    Ok(out)
}

fn example_ex3(
    st: &Settings,
    model: &MarkovModel,
    states: &[State],
    report: &mut Report,
    values: &mut Table,
) -> Result<bool, CliError> {
    let (alpha, c) = (st.alpha()?, st.c()?);
    let p = Ex3Params::new(alpha, c)?;
    let regime = regime_section(report, alpha, c)?;
    let x0 = state(st.x0)?;
    // Every evaluation state is a root, so the window only needs depth 0.
    let opts = iterate_opts(st, states).with_eval_depth(0);
    let u = iterate_from_below(model, x0, &opts)?;
    let w = iterate_from_above(model, x0, &opts)?;
    run_section(report, "below", &u, x0);
    run_section(report, "above", &w, x0);
    let gap = gap_report(&u, &w, states, st.gap_tol)?;
    gap_section(report, &gap);
    let oracle = |x: f64| ex3_values(&p, x).expect("state checked");
    for &x in states {
        let (ou, ow) = oracle(x.coord());
        values.push(row![x, u.at(x), w.at(x), ou, ow]);
    }

    report.section("checks");
    let mut ck = Checks { report, all: true };
    ck.check("converged", u.converged && w.converged, format!("{} / {} iterations", u.iterations, w.iterations));
    let eu = max_err(&u, states, |x| oracle(x).0);
    let ew = max_err(&w, states, |x| oracle(x).1);
    ck.check("u_closed_form", eu <= 1e-6, format!("max_err = {eu:e}"));
    ck.check("w_closed_form", ew <= 1e-6, format!("max_err = {ew:e}"));
    let closure = match p.k() {
        Some(k) if regime != Regime::StopNow => Closure::Terminal { cap: k },
        _ => Closure::TERMINAL,
    };
    // Tabulate the successors too so no value comes from the closure.
    let mut support: Vec<State> = states.to_vec();
    support.extend(states.iter().map(|x| State::at(x.coord() + 1.0)));
    let u_fn = LogValueFn::from_fn(x0, support.iter().copied(), closure, |x| oracle(x.coord()).0);
    let w_fn = LogValueFn::from_fn(x0, support.iter().copied(), Closure::TERMINAL, |x| oracle(x.coord()).1);
    let w_fn = if regime == Regime::Wait { u_fn.clone() } else { w_fn };
    let ru = residual(model, &u_fn, states)?;
    let rw = residual(model, &w_fn, states)?;
    ck.check("u_residual", ru <= 1e-12, format!("residual = {ru:e}"));
    ck.check("w_residual", rw <= 1e-12, format!("residual = {rw:e}"));
    let want_unique = regime != Regime::Gap;
    ck.check(
        "gap_verdict",
        gap.unique == want_unique,
        format!("{} for regime {regime}", if gap.unique { "unique" } else { "non-unique" }),
    );
    if regime == Regime::Gap {
        let disc = LogValueFn::from_fn(x0, support.iter().copied(), closure, |x| {
            ex3_discontinuous_solution(&p, x.coord()).expect("gap regime")
        });
        let rd = residual(model, &disc, states)?;
        ck.check("discontinuous_residual", rd <= 1e-12, format!("residual = {rd:e}"));
        let sw = verify_sandwich(&u, &w, &disc, states)?;
        ck.check("discontinuous_sandwich", sw.holds(), format!("violations = {}", sw.violations.len()));
    }
    Ok(ck.all)
}

fn example_ex1(
    st: &Settings,
    model: &MarkovModel,
    states: &[State],
    report: &mut Report,
    values: &mut Table,
) -> Result<bool, CliError> {
    let p = Ex1Params::new(st.c()?)?;
    let x0 = state(st.x0)?;
    let opts = iterate_opts(st, states).keeping_iterates();
    let u = iterate_from_below(model, x0, &opts)?;
    let w = iterate_from_above(model, x0, &opts)?;
    run_section(report, "below", &u, x0);
    run_section(report, "above", &w, x0);
    let gap = gap_report(&u, &w, states, st.gap_tol)?;
    gap_section(report, &gap);
    let b = p.b_limit();
    report.section("oracle");
    report.kv("b_limit", b);
    report.kv("ln_b", p.ln_b());
    for &x in states {
        let o = ex1_values(&p, x.coord())?;
        values.push(row![x, u.at(x), w.at(x), o.u, o.w]);
    }

    report.section("checks");
    let mut ck = Checks { report, all: true };
    ck.check("converged", u.converged && w.converged, format!("{} / {} iterations", u.iterations, w.iterations));
    let literal = w.iterates.iter().all(|it| states.iter().all(|&x| it.eval(&model.costs, x) == x.coord()));
    ck.check("w_iterates_equal_g", literal, format!("{} iterates", w.iterates.len()));
    let eu = max_err(&u, states, |x| x.min(b));
    ck.check("u_min_x_b", eu <= 1e-8, format!("max_err = {eu:e}"));
    ck.check("b_below_ln_b", b <= p.ln_b(), format!("b = {b}, ln B = {}", p.ln_b()));
    let want: Vec<State> = states.iter().copied().filter(|x| x.coord() > b).collect();
    ck.check("gap_flags_above_b", gap.flagged == want, format!("{} flagged", gap.flagged.len()));
    Ok(ck.all)
}

fn example_ex5(
    st: &Settings,
    model: &MarkovModel,
    states: &[State],
    report: &mut Report,
    values: &mut Table,
) -> Result<bool, CliError> {
    let seed = st.require_seed()?;
    let p = pdmp_params(st)?;
    let regime = regime_section(report, p.alpha, p.c_embed())?;
    let emb = Ex3Params::new(p.alpha, p.c_embed())?;
    let x0 = state(st.x0)?;
    let opts = iterate_opts(st, states).with_eval_depth(0);
    let u = iterate_from_below(model, x0, &opts)?;
    let w = iterate_from_above(model, x0, &opts)?;
    run_section(report, "below", &u, x0);
    run_section(report, "above", &w, x0);
    for &x in states {
        let (ou, ow) = ex3_values(&emb, x.coord())?;
        values.push(row![x, u.at(x), w.at(x), ou, ow]);
    }
    let target = ex3_values(&emb, st.x0)?.0;
    let est = simulate_and_evaluate(
        &p,
        st.x0,
        &StoppingPolicy::Hitting(u.value.clone()),
        st.n_traj,
        st.horizon_cap as f64,
        seed,
    )?;
    estimate_section(report, &est);

    report.section("checks");
    let mut ck = Checks { report, all: true };
    ck.check("converged", u.converged && w.converged, format!("{} / {} iterations", u.iterations, w.iterations));
    let eu = max_err(&u, states, |x| ex3_values(&emb, x).expect("checked").0);
    ck.check("u_embedded_closed_form", eu <= 1e-6, format!("max_err = {eu:e}, regime {regime}"));
    ck.check(
        "mc_brackets_u",
        est.brackets(target),
        format!("u(x0) = {target}, ci = [{}, {}]", est.ci_low, est.ci_high),
    );
    Ok(ck.all)
}
