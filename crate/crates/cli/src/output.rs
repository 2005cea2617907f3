//! CSV tables with a producer column, plus JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const CLI_VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct Table {
    producer: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    /// `module` names the core module that produced the rows.
    pub fn new(module: &str, header: &[&str]) -> Self {
        Self {
            producer: format!("pitchfork::{module}@{}", pitchfork::VERSION),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        let mut head = self.header.clone();
        head.push("producer".into());
        w.write_record(&head).map_err(|e| io_err(path, e))?;
        for r in &self.rows {
            w.write_record(r.iter().map(String::as_str).chain([self.producer.as_str()]))
                .map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Shortest round-trip formatting (exponent form for tiny and huge values).
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn usize_s(v: usize) -> String {
    v.to_string()
}

pub fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

/// Collects the tables of one command and writes them with a sidecar.
pub struct Run<'a> {
    command: &'static str,
    cfg: &'a RunConfig,
    dir: PathBuf,
    started: std::time::Instant,
    outputs: Vec<String>,
    timings: Vec<(String, f64)>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'static str, cfg: &'a RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir.clone();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            command,
            cfg,
            dir,
            started: std::time::Instant::now(),
            outputs: Vec::new(),
            timings: Vec::new(),
        })
    }

    pub fn table(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{name}.csv"));
        table.write(&path)?;
        self.outputs.push(format!("{name}.csv"));
        Ok(path)
    }

    /// Time a stage; the duration goes into the sidecar.
    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = std::time::Instant::now();
        let out = f();
        self.timings
            .push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    /// Writes `<command>.json`. Runtimes live only here so the CSVs stay
    /// reproducible.
    pub fn finish(self, summary: Value) -> Result<PathBuf, CliError> {
        let path = self.dir.join(format!("{}.json", self.command));
        let runtimes: serde_json::Map<String, Value> = self
            .timings
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        let doc = json!({
            "command": self.command,
            "versions": {
                "pitchfork": pitchfork::VERSION,
                "pitchfork-cli": CLI_VERSION,
            },
            "threads": rayon::current_num_threads(),
            "config": self.cfg,
            "outputs": self.outputs,
            "summary": summary,
            "runtime_seconds": {
                "total": self.started.elapsed().as_secs_f64(),
                "stages": runtimes,
            },
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}
