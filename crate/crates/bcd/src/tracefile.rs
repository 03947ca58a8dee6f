//! Loss trace CSV.
//!
//! ```text
//! # algo=monotone
//! outer_iter,total,output,hidden_1,...,hidden_{L-1},wall_ms
//! 0,3.1234567890123456e2,...
//! ```
//!
//! One row per outer iteration, flushed as soon as it is written.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use bcd_core::{LossBreakdown, NetworkState, TraceObserver};

use crate::data::fmt_f64;
use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Monotone,
    ReluSkip,
    ReluNoskip,
}

impl Algo {
    pub fn skip(self) -> bool {
        self == Algo::ReluSkip
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Monotone => "monotone",
            Algo::ReluSkip => "relu_skip",
            Algo::ReluNoskip => "relu_noskip",
        })
    }
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "monotone" => Ok(Algo::Monotone),
            "relu_skip" => Ok(Algo::ReluSkip),
            "relu_noskip" => Ok(Algo::ReluNoskip),
            _ => Err(format!("unknown mode {s:?} (expected monotone, relu_skip or relu_noskip)")),
        }
    }
}

pub fn header(layers: usize) -> String {
    let mut h = String::from("outer_iter,total,output");
    for j in 1..layers {
        h.push_str(&format!(",hidden_{j}"));
    }
    h.push_str(",wall_ms");
    h
}

/// Streams trace rows to a writer as training proceeds.
///
/// With `clock = None` every `wall_ms` is written as 0, which makes the file
/// a pure function of the numerics.
pub struct TraceWriter<W: Write> {
    out: W,
    clock: Option<Instant>,
    error: Option<io::Error>,
    rows: usize,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, algo: Algo, layers: usize, timed: bool) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        TraceWriter::new(BufWriter::new(file), algo, layers, timed).map_err(|e| CliError::io(path, e))
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, algo: Algo, layers: usize, timed: bool) -> io::Result<Self> {
        writeln!(out, "# algo={algo}")?;
        writeln!(out, "{}", header(layers))?;
        out.flush()?;
        Ok(Self { out, clock: timed.then(Instant::now), error: None, rows: 0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn write_row(&mut self, iteration: usize, losses: &LossBreakdown) -> io::Result<()> {
        let mut line = format!("{iteration},{},{}", fmt_f64(losses.total), fmt_f64(losses.output));
        for h in &losses.hidden {
            line.push(',');
            line.push_str(&fmt_f64(*h));
        }
        let ms = self.clock.map_or(0, |t| t.elapsed().as_millis());
        line.push_str(&format!(",{ms}"));
        writeln!(self.out, "{line}")?;
        self.out.flush()
    }

    /// The first write error, if any, and the underlying writer.
    pub fn finish(mut self) -> io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> TraceObserver for TraceWriter<W> {
    fn on_iteration(&mut self, iteration: usize, _state: &NetworkState, losses: &LossBreakdown) {
        if self.error.is_some() {
            return;
        }
        match self.write_row(iteration, losses) {
            Ok(()) => self.rows += 1,
            Err(e) => self.error = Some(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub total: f64,
    pub output: f64,
    pub hidden: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub algo: Algo,
    pub rows: Vec<TraceRow>,
}

impl TraceFile {
    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    pub fn final_total(&self) -> Option<f64> {
        self.rows.last().map(|r| r.total)
    }

    /// Largest increase of the total loss between consecutive rows.
    pub fn max_uptick(&self) -> f64 {
        self.rows.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let bad = |no: usize, m: String| CliError::parse(PathBuf::from(path), format!("line {no}: {m}"));
    let mut next = || lines.next().map(|(i, l)| (i + 1, l.map_err(|e| CliError::io(path, e))));

    let (no, first) = next().ok_or_else(|| bad(1, "empty trace file".into()))?;
    let first = first?;
    let algo = first
        .strip_prefix("# algo=")
        .ok_or_else(|| bad(no, "expected `# algo=<mode>`".into()))?
        .parse()
        .map_err(|m| bad(no, m))?;
    let (no, head) = next().ok_or_else(|| bad(2, "missing header".into()))?;
    let head = head?;
    let cols: Vec<&str> = head.split(',').collect();
    let layers = cols.len().checked_sub(3).filter(|&l| l >= 2).ok_or_else(|| bad(no, "short header".into()))?;
    if head != header(layers) {
        return Err(bad(no, format!("unexpected header {head:?}")));
    }

    let mut rows = Vec::new();
    while let Some((no, line)) = next() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad(no, format!("expected {} fields, found {}", cols.len(), fields.len())));
        }
        let num = |k: usize| fields[k].parse::<f64>().map_err(|_| bad(no, format!("bad number {:?}", fields[k])));
        rows.push(TraceRow {
            outer_iter: fields[0].parse().map_err(|_| bad(no, format!("bad iteration {:?}", fields[0])))?,
            total: num(1)?,
            output: num(2)?,
            hidden: (3..fields.len() - 1).map(num).collect::<Result<_>>()?,
            wall_ms: fields[fields.len() - 1].parse().map_err(|_| bad(no, "bad wall_ms".into()))?,
        });
    }
    Ok(TraceFile { algo, rows })
}
