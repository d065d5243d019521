//! CSV trace files.
//!
//! A file starts with `# key=value` metadata lines, then the header
//! `outer_iter,inner_iter,cumulative_seconds,wsr_bits,inner_objective` and one
//! row per record. Optional columns are left empty. Files are written to a
//! temporary sibling and renamed, so a reader never sees a partial row.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fhmimo::solvers::{IterationTrace, TraceRecord};

use crate::BenchError;

pub const HEADER: &str = "outer_iter,inner_iter,cumulative_seconds,wsr_bits,inner_objective";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario: String,
    pub solver: String,
    pub variant: String,
    pub seed: u64,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub users_per_cell: usize,
    pub streams: usize,
    pub num_cells: usize,
    pub horizon: usize,
}

impl TraceMeta {
    fn lines(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scenario", self.scenario.clone()),
            ("solver", self.solver.clone()),
            ("variant", self.variant.clone()),
            ("seed", self.seed.to_string()),
            ("M", self.tx_antennas.to_string()),
            ("N", self.rx_antennas.to_string()),
            ("K", self.users_per_cell.to_string()),
            ("d", self.streams.to_string()),
            ("L", self.num_cells.to_string()),
            ("T", self.horizon.to_string()),
        ]
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}__{}__M{}__seed{}.csv",
            self.scenario, self.solver, self.tx_antennas, self.seed
        )
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn row(r: &TraceRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.outer_iteration,
        opt(r.inner_iteration),
        r.cumulative_seconds,
        r.wsr_bits,
        opt(r.inner_objective)
    )
}

fn io_error(path: &Path, e: std::io::Error) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

pub fn write_trace(trace: &IterationTrace, meta: &TraceMeta, path: &Path) -> Result<(), BenchError> {
    if trace.is_empty() {
        return Err(BenchError::Io(format!("{}: refusing to write an empty trace", path.display())));
    }
    let tmp = path.with_extension("csv.partial");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for (k, v) in meta.lines() {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{HEADER}")?;
        for r in &trace.records {
            writeln!(w, "{}", row(r))?;
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    };
    write().map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub meta: Vec<(String, String)>,
    pub records: Vec<TraceRecord>,
}

impl ParsedTrace {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn parse_opt<T: std::str::FromStr>(field: &str) -> Result<Option<T>, ()> {
    if field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some).map_err(|_| ())
    }
}

/// Parse a trace file and check its structure: metadata, exact header, five
/// fields per row and a nondecreasing time column.
pub fn read_trace(path: &Path) -> Result<ParsedTrace, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let bad = |line: usize, msg: &str| BenchError::Io(format!("{}:{}: {msg}", path.display(), line + 1));
    let mut meta = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, l)) = lines.peek() {
        let Some(kv) = l.strip_prefix("# ") else { break };
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(0, "malformed metadata"))?;
        meta.push((k.to_string(), v.to_string()));
        lines.next();
    }
    match lines.next() {
        Some((_, h)) if h == HEADER => {}
        Some((i, _)) => return Err(bad(i, "unexpected header")),
        None => return Err(bad(0, "missing header")),
    }
    let mut records = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(i, "expected 5 fields"));
        }
        let rec = (|| -> Result<TraceRecord, ()> {
            Ok(TraceRecord {
                outer_iteration: f[0].parse().map_err(|_| ())?,
                inner_iteration: parse_opt(f[1])?,
                cumulative_seconds: f[2].parse().map_err(|_| ())?,
                wsr_bits: f[3].parse().map_err(|_| ())?,
                inner_objective: parse_opt(f[4])?,
            })
        })()
        .map_err(|_| bad(i, "unparsable field"))?;
        if rec.cumulative_seconds < last_time {
            return Err(bad(i, "cumulative_seconds decreased"));
        }
        last_time = rec.cumulative_seconds;
        records.push(rec);
    }
    if records.is_empty() {
        return Err(bad(0, "no data rows"));
    }
    Ok(ParsedTrace { meta, records })
}

pub fn trace_path(dir: &Path, meta: &TraceMeta) -> PathBuf {
    dir.join(meta.file_name())
}
