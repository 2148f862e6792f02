use std::fmt::Display;
use std::fs;
use std::path::Path;

use crate::config::{Output, Settings};
use crate::CliError;

/// Line-oriented `key = value` report with `[section]` headers.
#[derive(Debug, Default)]
pub struct Report {
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Report {
    pub fn new(settings: &Settings) -> Result<Self, CliError> {
        let mut r = Report::default();
        r.section("run");
        r.kv("command", &settings.command);
        r.kv("family", settings.family.name());
        r.kv("config_sha256", settings.sha256()?);
        r.kv("seed", settings.seed.map_or_else(|| "none".to_string(), |s| s.to_string()));
        Ok(r)
    }

    pub fn section(&mut self, name: &str) {
        self.sections.push((name.to_string(), Vec::new()));
    }

    pub fn kv(&mut self, key: &str, value: impl Display) {
        if self.sections.is_empty() {
            self.section("run");
        }
        let last = self.sections.len() - 1;
        self.sections[last].1.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections
            .iter()
            .filter(|s| s.0 == section)
            .flat_map(|s| s.1.iter())
            .find(|kv| kv.0 == key)
            .map(|kv| kv.1.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, (name, entries)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

/// Plain notation for ordinary magnitudes, scientific otherwise.
pub struct Num(pub f64);

impl Display for Num {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e7).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

pub fn list<T: Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Rows of already formatted cells.
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Table { name, header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// CSV cell text; floats go through [`Num`].
pub trait Cell {
    fn cell(&self) -> String;
}

impl Cell for f64 {
    fn cell(&self) -> String {
        Num(*self).to_string()
    }
}

macro_rules! display_cell {
    ($($t:ty),*) => {$(
        impl Cell for $t {
            fn cell(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_cell!(usize, u32, u64, bool, str, String, riskstop_core::State);

impl<T: Cell + ?Sized> Cell for &T {
    fn cell(&self) -> String {
        (**self).cell()
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::report::Cell::cell(&$x)),*] };
}

fn write_csv(dir: &Path, table: &Table) -> Result<(), CliError> {
    let path = dir.join(format!("{}.csv", table.name));
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for r in &table.rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn emit(out: &Output, report: &Report, tables: &[Table]) -> Result<(), CliError> {
    fs::create_dir_all(&out.directory)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.directory.display())))?;
    if out.text {
        let path = out.directory.join("report.txt");
        fs::write(&path, report.render()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    if out.csv {
        for t in tables {
            write_csv(&out.directory, t)?;
        }
    }
    Ok(())
}
