//! Results tables: CSV rows with `#` comment headers and a TOML sidecar.
//!
//! A results file starts with comment lines carrying the code version,
//! schema version, seeds and the full configuration, followed by a CSV table
//! whose first column is `schema_version`. Rows are keyed by
//! `(strategy, stream, shuffle)`; per-shuffle rows use the shuffle index and
//! aggregate rows use `mean` and `std` (sample standard deviation, 0 for a
//! single shuffle).

use std::cmp::Ordering;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = concat!("fstta-cli ", env!("CARGO_PKG_VERSION"));

/// Metric columns in table order.
pub const METRICS: [&str; 5] = ["sr", "osr", "spl", "tl", "ne"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub strategy: String,
    pub stream: String,
    pub shuffle: String,
    /// Successful cells behind the row.
    pub n: usize,
    pub sr: Option<f64>,
    pub osr: Option<f64>,
    pub spl: Option<f64>,
    pub tl: Option<f64>,
    pub ne: Option<f64>,
    /// Wall-clock milliseconds per episode.
    pub time_ms: Option<f64>,
    pub fast_updates: Option<u64>,
    pub slow_updates: Option<u64>,
    pub quarantined: Option<u64>,
    pub status: String,
}

impl ResultRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "sr" => self.sr,
            "osr" => self.osr,
            "spl" => self.spl,
            "tl" => self.tl,
            "ne" => self.ne,
            "time_ms" => self.time_ms,
            _ => None,
        }
    }

    fn set_metric(&mut self, name: &str, v: Option<f64>) {
        match name {
            "sr" => self.sr = v,
            "osr" => self.osr = v,
            "spl" => self.spl = v,
            "tl" => self.tl = v,
            "ne" => self.ne = v,
            "time_ms" => self.time_ms = v,
            _ => unreachable!("unknown metric {name}"),
        }
    }

    pub fn is_aggregate(&self) -> bool {
        self.shuffle == "mean" || self.shuffle == "std"
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn key(&self) -> (&str, &str, &str) {
        (&self.strategy, &self.stream, &self.shuffle)
    }
}

fn shuffle_rank(s: &str) -> (u8, u64) {
    match s {
        "mean" => (1, 0),
        "std" => (2, 0),
        other => (0, other.parse().unwrap_or(u64::MAX)),
    }
}

/// Canonical row order: stream, strategy, then shuffles before aggregates.
pub fn canonical_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.stream
        .cmp(&b.stream)
        .then_with(|| a.strategy.cmp(&b.strategy))
        .then_with(|| shuffle_rank(&a.shuffle).cmp(&shuffle_rank(&b.shuffle)))
        .then_with(|| a.shuffle.cmp(&b.shuffle))
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and std rows over the successful per-shuffle rows, in the given order.
pub fn aggregate(strategy: &str, stream: &str, rows: &[&ResultRow]) -> [ResultRow; 2] {
    let ok: Vec<&&ResultRow> = rows.iter().filter(|r| r.is_ok()).collect();
    let blank = |shuffle: &str| ResultRow {
        schema_version: SCHEMA_VERSION,
        strategy: strategy.to_string(),
        stream: stream.to_string(),
        shuffle: shuffle.to_string(),
        n: ok.len(),
        sr: None,
        osr: None,
        spl: None,
        tl: None,
        ne: None,
        time_ms: None,
        fast_updates: None,
        slow_updates: None,
        quarantined: None,
        status: if ok.is_empty() { "error: no successful shuffles".into() } else { "ok".into() },
    };
    let mut mean = blank("mean");
    let mut std = blank("std");
    if !ok.is_empty() {
        for m in METRICS.iter().copied().chain(["time_ms"]) {
            let vals: Vec<f64> = ok.iter().filter_map(|r| r.metric(m)).collect();
            if vals.len() == ok.len() {
                let (mu, sd) = mean_std(&vals);
                mean.set_metric(m, Some(mu));
                std.set_metric(m, Some(sd));
            }
        }
    }
    [mean, std]
}

/// Checks that every aggregate row equals the recomputation from its shuffles.
pub fn verify_aggregates(rows: &[ResultRow]) -> Result<()> {
    for agg in rows.iter().filter(|r| r.shuffle == "mean" || r.shuffle == "std") {
        let members: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| !r.is_aggregate() && r.strategy == agg.strategy && r.stream == agg.stream)
            .collect();
        let [mean, std] = aggregate(&agg.strategy, &agg.stream, &members);
        let expect = if agg.shuffle == "mean" { mean } else { std };
        if &expect != agg {
            return Err(HarnessError::Data(format!(
                "aggregate row ({}, {}, {}) does not match its shuffle rows",
                agg.strategy, agg.stream, agg.shuffle
            )));
        }
    }
    Ok(())
}

/// Comment header shared by every emitted table.
pub fn header_lines(command: &str, cfg: &RunConfig) -> Vec<String> {
    let mut out = vec![
        format!("# code_version = {CODE_VERSION}"),
        format!("# schema_version = {SCHEMA_VERSION}"),
        format!("# command = {command}"),
        format!(
            "# seeds: pretrain_seed = {}, stream_seeds = {:?}, shuffle_seed = {}",
            cfg.pretrain_seed, cfg.stream_seeds, cfg.shuffle_seed
        ),
        "# config:".to_string(),
    ];
    out.extend(cfg.to_toml().lines().filter(|l| !l.trim().is_empty()).map(|l| format!("#   {l}")));
    out
}

/// Writes comment lines then a CSV table of `rows`.
pub fn write_table<T: Serialize>(path: &Path, header: &[String], rows: &[T]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in header {
        writeln!(file, "{line}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    file.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    code_version: &'a str,
    schema_version: u32,
    command: &'a str,
    table: String,
    config: &'a RunConfig,
}

/// Writes `<table stem>.toml` next to `table` with the full configuration.
pub fn write_sidecar(table: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let side = Sidecar {
        code_version: CODE_VERSION,
        schema_version: SCHEMA_VERSION,
        command,
        table: table.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        config: cfg,
    };
    let text = toml::to_string(&side).map_err(|e| HarnessError::Data(e.to_string()))?;
    std::fs::write(table.with_extension("toml"), text)?;
    Ok(())
}

pub fn write_results(path: &Path, command: &str, cfg: &RunConfig, rows: &[ResultRow]) -> Result<()> {
    write_table(path, &header_lines(command, cfg), rows)?;
    write_sidecar(path, command, cfg)
}

/// Reads a results file, rejecting schema versions other than the current one.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(BufReader::new(file));
    let headers = rdr.headers()?.clone();
    let Some(vcol) = headers.iter().position(|h| h == "schema_version") else {
        return Err(HarnessError::Data(format!("{}: no schema_version column", path.display())));
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let version = rec.get(vcol).unwrap_or("");
        if version != SCHEMA_VERSION.to_string() {
            return Err(HarnessError::Data(format!(
                "{}: schema version {version} does not match supported version {SCHEMA_VERSION}",
                path.display()
            )));
        }
        let row: ResultRow = rec.deserialize(Some(&headers)).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

/// Comment lines at the top of a table file, `#` prefix kept.
pub fn read_header(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.starts_with('#') {
            break;
        }
        out.push(line);
    }
    Ok(out)
}
