//! Result files. JSON results are wrapped in an envelope carrying the
//! command, config hash, seed and worker count; CSV files start with a
//! `#` comment line holding the same fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunStamp {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
}

impl RunStamp {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        RunStamp { command: command.into(), config_hash: cfg.hash(), seed: cfg.mc.seed, workers: cfg.mc.workers }
    }

    pub fn envelope(&self, result: Value) -> Value {
        json!({
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "workers": self.workers,
            "result": result,
        })
    }

    fn csv_comment(&self) -> String {
        format!("# command={},config_hash={},seed={},workers={}\n", self.command, self.config_hash, self.seed, self.workers)
    }
}

#[derive(Debug, Clone)]
pub struct OutputWriter {
    pub dir: PathBuf,
    pub stamp: RunStamp,
    json: bool,
    csv: bool,
}

impl OutputWriter {
    pub fn new(cfg: &RunConfig, command: &str) -> Result<Self, CliError> {
        let dir = PathBuf::from(&cfg.output.dir);
        fs::create_dir_all(&dir)?;
        Ok(OutputWriter { dir, stamp: RunStamp::new(command, cfg), json: cfg.output.wants("json"), csv: cfg.output.wants("csv") })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `<name>` with the envelope; returns the enveloped value.
    pub fn json(&self, name: &str, result: Value) -> Result<Value, CliError> {
        let v = self.stamp.envelope(result);
        if self.json {
            fs::write(self.path(name), serde_json::to_string_pretty(&v).expect("json serializes") + "\n")?;
        }
        Ok(v)
    }

    /// Writes `<name>` when CSV output is enabled and returns its path.
    pub fn csv<I>(&self, name: &str, header: &[&str], rows: I) -> Result<Option<PathBuf>, CliError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        if !self.csv {
            return Ok(None);
        }
        let path = self.path(name);
        let mut buf = self.stamp.csv_comment().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(&r)?;
            }
            w.flush()?;
        }
        fs::write(&path, buf)?;
        Ok(Some(path))
    }
}

/// Writes `error.json` into `dir` (best effort) and returns the record.
pub fn write_error_record(dir: &Path, stamp: Option<&RunStamp>, err: &CliError) -> Value {
    let mut rec = err.record();
    if let Some(s) = stamp {
        rec["command"] = json!(s.command);
        rec["config_hash"] = json!(s.config_hash);
        rec["seed"] = json!(s.seed);
        rec["workers"] = json!(s.workers);
    }
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("error.json"), serde_json::to_string_pretty(&rec).expect("json serializes") + "\n");
    }
    rec
}

/// Reads a CSV written by [`OutputWriter::csv`], skipping the comment line.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}
