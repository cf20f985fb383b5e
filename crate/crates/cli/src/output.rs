//! Tables and their CSV / JSON emission.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{Command, Format, RunConfig};
use crate::error::{CliError, CliResult};

pub const TOOL: &str = "limitcycle";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(&'static str),
    Missing,
}

impl Cell {
    /// Shortest round-trip exponent form, so output is exact and byte-stable.
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => (*s).to_owned(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(_) | Cell::Missing => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<i32> for Cell {
    fn from(i: i32) -> Self {
        Cell::Int(i.into())
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<&'static str> for Cell {
    fn from(s: &'static str) -> Self {
        Cell::Text(s)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &'static [&'static str]) -> Self {
        Self {
            name,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    fn write_csv<W: Write>(&self, command: Command, cfg: &RunConfig, out: W) -> io::Result<()> {
        let mut out = out;
        writeln!(out, "# {TOOL} {VERSION}")?;
        writeln!(out, "# command: {}", command.name())?;
        writeln!(out, "# table: {}", self.name)?;
        writeln!(out, "# config: {}", config_json(cfg))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv))?;
        }
        w.flush()
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Array(r.iter().map(Cell::json).collect()))
            .collect();
        json!({ "name": self.name, "columns": self.columns, "rows": rows })
    }
}

fn config_json(cfg: &RunConfig) -> String {
    serde_json::to_string(cfg).expect("run config serializes")
}

/// Where table `index` goes: the first at `out`, the rest at `<stem>.<name>.csv` beside it.
pub fn table_path(out: &Path, index: usize, name: &str) -> PathBuf {
    if index == 0 {
        return out.to_path_buf();
    }
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{name}.csv"))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn emit(command: Command, cfg: &RunConfig, tables: &[Table]) -> CliResult<()> {
    let stdout = Path::new("<stdout>");
    match (cfg.format, &cfg.out) {
        (Format::Csv, Some(out)) => {
            for (i, table) in tables.iter().enumerate() {
                let path = table_path(out, i, table.name);
                let mut file = create(&path)?;
                table
                    .write_csv(command, cfg, &mut file)
                    .map_err(io_err(&path))?;
                file.flush().map_err(io_err(&path))?;
            }
        }
        (Format::Csv, None) => {
            let mut lock = io::stdout().lock();
            for (i, table) in tables.iter().enumerate() {
                if i > 0 {
                    writeln!(lock).map_err(io_err(stdout))?;
                }
                table
                    .write_csv(command, cfg, &mut lock)
                    .map_err(io_err(stdout))?;
            }
        }
        (Format::Json, out) => {
            let doc = json!({
                "tool": TOOL,
                "version": VERSION,
                "command": command.name(),
                "config": serde_json::to_value(cfg).expect("run config serializes"),
                "tables": tables.iter().map(Table::to_json).collect::<Vec<_>>(),
            });
            let text = serde_json::to_string_pretty(&doc).expect("document serializes");
            match out {
                Some(path) => {
                    let mut file = create(path)?;
                    writeln!(file, "{text}")
                        .and_then(|_| file.flush())
                        .map_err(io_err(path))?;
                }
                None => writeln!(io::stdout().lock(), "{text}").map_err(io_err(stdout))?,
            }
        }
    }
    Ok(())
}
