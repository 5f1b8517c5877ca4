//! Merging results files into one comparison table.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::results::{self, canonical_order, ResultRow, CODE_VERSION, SCHEMA_VERSION};

/// Metrics flagged as best per stream, with their direction.
const BEST: [(&str, bool); 4] = [("sr", true), ("osr", true), ("spl", true), ("ne", false)];

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub sources: Vec<PathBuf>,
    /// All rows of all sources in canonical order.
    pub rows: Vec<ResultRow>,
    /// `(row index, metric)` pairs holding the best mean of their stream.
    pub best: BTreeSet<(usize, &'static str)>,
}

#[derive(Debug, Serialize)]
struct CompareRow<'a> {
    schema_version: u32,
    stream: &'a str,
    strategy: &'a str,
    n: usize,
    sr: Option<f64>,
    sr_std: Option<f64>,
    osr: Option<f64>,
    spl: Option<f64>,
    spl_std: Option<f64>,
    tl: Option<f64>,
    ne: Option<f64>,
    time_ms: Option<f64>,
    best: String,
}

pub fn compare<P: AsRef<Path>>(paths: &[P]) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(HarnessError::Config("compare needs at least one results file".into()));
    }
    let mut rows: Vec<ResultRow> = Vec::new();
    for p in paths {
        let file_rows = results::read_results(p.as_ref())?;
        results::verify_aggregates(&file_rows)?;
        rows.extend(file_rows);
    }
    rows.sort_by(canonical_order);
    for w in rows.windows(2) {
        if w[0].key() == w[1].key() {
            let (st, sm, sh) = w[0].key();
            return Err(HarnessError::Data(format!(
                "row (strategy {st}, stream {sm}, shuffle {sh}) appears more than once; the merge is ambiguous"
            )));
        }
    }

    let mut best = BTreeSet::new();
    let streams: BTreeSet<&str> = rows.iter().map(|r| r.stream.as_str()).collect();
    for stream in streams {
        let means: Vec<usize> = (0..rows.len())
            .filter(|&i| rows[i].stream == stream && rows[i].shuffle == "mean" && rows[i].is_ok())
            .collect();
        for (metric, higher) in BEST {
            let vals: Vec<(usize, f64)> = means.iter().filter_map(|&i| rows[i].metric(metric).map(|v| (i, v))).collect();
            let target = if higher {
                vals.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max)
            } else {
                vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min)
            };
            for (i, v) in vals {
                if v == target {
                    best.insert((i, metric));
                }
            }
        }
    }
    Ok(Comparison { sources: paths.iter().map(|p| p.as_ref().to_path_buf()).collect(), rows, best })
}

impl Comparison {
    fn std_of(&self, mean: &ResultRow, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.shuffle == "std" && r.strategy == mean.strategy && r.stream == mean.stream)
            .and_then(|r| r.metric(metric))
    }

    fn flags(&self, i: usize) -> Vec<&'static str> {
        BEST.iter().map(|b| b.0).filter(|m| self.best.contains(&(i, *m))).collect()
    }

    /// Aggregate table, one line per (stream, strategy); best values starred.
    pub fn render_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:<16} {:>3} {:>15} {:>8} {:>15} {:>7} {:>7} {:>9}",
            "stream", "strategy", "n", "SR", "OSR", "SPL", "TL", "NE", "ms/ep"
        );
        for (i, r) in self.rows.iter().enumerate().filter(|(_, r)| r.shuffle == "mean") {
            let star = |m: &str| if self.best.contains(&(i, BEST.iter().find(|b| b.0 == m).unwrap().0)) { "*" } else { " " };
            let pm = |m: &str| format!("{}±{}{}", fmt(r.metric(m)), fmt(self.std_of(r, m)), star(m));
            let _ = writeln!(
                out,
                "{:<14} {:<16} {:>3} {:>15} {:>8} {:>15} {:>7} {:>7} {:>9}",
                r.stream,
                r.strategy,
                r.n,
                pm("sr"),
                format!("{}{}", fmt(r.osr), star("osr")),
                pm("spl"),
                fmt(r.tl),
                format!("{}{}", fmt(r.ne), star("ne")),
                r.time_ms.map_or("-".into(), |t| format!("{t:.3}")),
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<CompareRow> = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.shuffle == "mean")
            .map(|(i, r)| CompareRow {
                schema_version: SCHEMA_VERSION,
                stream: &r.stream,
                strategy: &r.strategy,
                n: r.n,
                sr: r.sr,
                sr_std: self.std_of(r, "sr"),
                osr: r.osr,
                spl: r.spl,
                spl_std: self.std_of(r, "spl"),
                tl: r.tl,
                ne: r.ne,
                time_ms: r.time_ms,
                best: self.flags(i).join(";"),
            })
            .collect();
        let mut header = vec![
            format!("# code_version = {CODE_VERSION}"),
            format!("# schema_version = {SCHEMA_VERSION}"),
            "# command = compare".to_string(),
        ];
        header.extend(self.sources.iter().map(|s| format!("# source = {}", s.display())));
        results::write_table(path, &header, &rows)
    }
}
