use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// i.i.d. Pareto chain on the positive integers.
    Ex1,
    /// Reset-or-advance chain.
    Ex3,
    /// Continuous-time jump process and its embedded chain.
    Ex5,
    /// Finite chain given state by state in the config file.
    Table,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ex1 => "ex1",
            Family::Ex3 => "ex3",
            Family::Ex5 => "ex5",
            Family::Table => "table",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyChoice {
    /// Hitting rule of the minimal solution.
    U,
    /// Hitting rule of the maximal solution.
    W,
    Immediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableState {
    pub x: f64,
    pub g: f64,
    #[serde(rename = "G")]
    pub big_g: f64,
    /// `[next_state, probability]` pairs.
    pub next: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Option<Family>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub d: Option<f64>,
    pub x0: Option<f64>,
    pub c_lower: Option<f64>,
    pub g_upper: Option<f64>,
    pub states: Option<Vec<TableState>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub eval_depth: Option<usize>,
    pub n_traj: Option<usize>,
    pub horizon_cap: Option<usize>,
    pub seed: Option<u64>,
    pub t_grid: Option<Vec<f64>>,
    pub m: Option<Vec<u32>>,
    pub states: Option<Vec<f64>>,
    pub gap_tol: Option<f64>,
    pub budget_limit: Option<f64>,
    pub k_max: Option<usize>,
    pub traces: Option<usize>,
    pub policy: Option<PolicyChoice>,
    pub stop_on: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub formats: Option<Vec<Format>>,
}

/// Config file layout.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub numeric: NumericSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Model and numeric settings after defaults and overrides. This is what
/// gets hashed into every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub command: String,
    pub family: Family,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub d: Option<f64>,
    pub x0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eval_depth: usize,
    pub n_traj: usize,
    pub horizon_cap: usize,
    pub seed: Option<u64>,
    pub t_grid: Vec<f64>,
    pub m: Vec<u32>,
    pub states: Vec<f64>,
    pub gap_tol: f64,
    pub budget_limit: f64,
    pub k_max: Option<usize>,
    pub traces: usize,
    pub policy: PolicyChoice,
    pub stop_on: Option<Vec<f64>>,
    pub c_lower: Option<f64>,
    pub g_upper: Option<f64>,
    pub table: Option<Vec<TableState>>,
}

impl Settings {
    pub fn sha256(&self) -> Result<String, CliError> {
        let text = toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("`{}` is stochastic and needs a seed", self.command)))
    }

    pub fn alpha(&self) -> Result<f64, CliError> {
        self.alpha.ok_or_else(|| CliError::Config("alpha is required".into()))
    }

    pub fn c(&self) -> Result<f64, CliError> {
        self.c.ok_or_else(|| CliError::Config("c is required".into()))
    }

    /// Integer horizons for the UI profile.
    pub fn int_t_grid(&self) -> Result<Vec<usize>, CliError> {
        self.t_grid
            .iter()
            .map(|&t| {
                if t >= 0.0 && t.fract() == 0.0 && t <= 1e9 {
                    Ok(t as usize)
                } else {
                    Err(CliError::Config(format!("T grid entry {t} is not a non-negative integer")))
                }
            })
            .collect()
    }
}

pub struct Output {
    pub directory: PathBuf,
    pub csv: bool,
    pub text: bool,
}

impl Output {
    pub fn from_section(section: &OutputSection, dir_override: Option<PathBuf>) -> Output {
        let formats = section.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Text]);
        Output {
            directory: dir_override.or_else(|| section.directory.clone()).unwrap_or_else(|| PathBuf::from("riskstop-out")),
            csv: formats.contains(&Format::Csv),
            text: formats.contains(&Format::Text),
        }
    }
}

fn default_t_grid(command: &str) -> Vec<f64> {
    if command == "dyadic" {
        vec![5.0, 10.0, 20.0, 30.0]
    } else {
        (0..=12).map(|i| (1u64 << i) as f64).collect()
    }
}

fn default_states(family: Family, table: Option<&[TableState]>) -> Vec<f64> {
    match family {
        Family::Ex1 => (1..=30).map(f64::from).collect(),
        Family::Ex3 | Family::Ex5 => (0..=20).map(|i| f64::from(i) / 2.0).collect(),
        Family::Table => table.map(|t| t.iter().map(|s| s.x).collect()).unwrap_or_default(),
    }
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub family: Option<Family>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub d: Option<f64>,
    pub x0: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub n_traj: Option<usize>,
    pub horizon_cap: Option<usize>,
    pub seed: Option<u64>,
    pub t_grid: Option<Vec<f64>>,
    pub m: Option<Vec<u32>>,
    pub traces: Option<usize>,
    pub policy: Option<PolicyChoice>,
    pub stop_on: Option<Vec<f64>>,
}

pub fn resolve(command: &str, file: &FileConfig, o: &Overrides) -> Result<Settings, CliError> {
    if let Some(c) = &file.command {
        if c != command {
            return Err(CliError::Config(format!("config is for `{c}` but `{command}` was requested")));
        }
    }
    let (m, n) = (&file.model, &file.numeric);
    let family = o
        .family
        .or(m.family)
        .ok_or_else(|| CliError::Config("model family missing (ex1, ex3, ex5 or table)".into()))?;
    let pick = |cli: Option<f64>, file: Option<f64>, default: Option<f64>| cli.or(file).or(default);
    let (alpha, c, lambda, d, x0) = match family {
        Family::Ex1 => (None, pick(o.c, m.c, Some(0.5)), None, None, pick(o.x0, m.x0, Some(10.0))),
        Family::Ex3 => (pick(o.alpha, m.alpha, Some(0.5)), pick(o.c, m.c, Some(0.5)), None, None, pick(o.x0, m.x0, Some(5.0))),
        Family::Ex5 => (
            pick(o.alpha, m.alpha, Some(0.9)),
            None,
            pick(o.lambda, m.lambda, Some(2.0)),
            pick(o.d, m.d, Some(1.0)),
            pick(o.x0, m.x0, Some(5.0)),
        ),
        Family::Table => (None, None, None, None, pick(o.x0, m.x0, None)),
    };
    let x0 = x0.ok_or_else(|| CliError::Config("x0 is required for table models".into()))?;
    let table = match family {
        Family::Table => Some(m.states.clone().ok_or_else(|| CliError::Config("table models need [[model.states]]".into()))?),
        _ => None,
    };
    let settings = Settings {
        command: command.to_string(),
        family,
        alpha,
        c,
        lambda,
        d,
        x0,
        tol: o.tol.or(n.tol).unwrap_or(1e-8),
        max_iter: o.max_iter.or(n.max_iter).unwrap_or(1000),
        eval_depth: n.eval_depth.unwrap_or(64),
        n_traj: o.n_traj.or(n.n_traj).unwrap_or(100_000),
        horizon_cap: o.horizon_cap.or(n.horizon_cap).unwrap_or(10_000),
        seed: o.seed.or(n.seed),
        t_grid: o.t_grid.clone().or_else(|| n.t_grid.clone()).unwrap_or_else(|| default_t_grid(command)),
        m: o.m.clone().or_else(|| n.m.clone()).unwrap_or_else(|| vec![4, 6, 8]),
        states: n.states.clone().unwrap_or_else(|| default_states(family, table.as_deref())),
        gap_tol: n.gap_tol.unwrap_or(1e-6),
        budget_limit: n.budget_limit.unwrap_or(1e-6),
        k_max: n.k_max,
        traces: o.traces.or(n.traces).unwrap_or(0),
        policy: o.policy.or(n.policy).unwrap_or(PolicyChoice::U),
        stop_on: o.stop_on.clone().or_else(|| n.stop_on.clone()),
        c_lower: m.c_lower,
        g_upper: m.g_upper,
        table,
    };
    validate(&settings)?;
    Ok(settings)
}

fn validate(s: &Settings) -> Result<(), CliError> {
    let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
    if let Some(a) = s.alpha {
        if !(0.0..=1.0).contains(&a) {
            return bad("alpha must lie in [0, 1]");
        }
    }
    if let Some(c) = s.c {
        if !(c.is_finite() && c > 0.0) {
            return bad("c must be positive and finite");
        }
    }
    if !(s.tol > 0.0) {
        return bad("tol must be positive");
    }
    if s.max_iter == 0 {
        return bad("max_iter must be at least 1");
    }
    if s.n_traj < 2 {
        return bad("n_traj must be at least 2");
    }
    if s.horizon_cap == 0 {
        return bad("horizon_cap must be at least 1");
    }
    if s.t_grid.is_empty() || s.t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return bad("T grid must be non-empty and increasing");
    }
    if s.m.is_empty() || s.m.windows(2).any(|w| w[0] >= w[1]) {
        return bad("m must be non-empty and increasing");
    }
    if !(s.x0.is_finite()) || s.states.iter().any(|x| !x.is_finite()) {
        return bad("states must be finite");
    }
    Ok(())
}
