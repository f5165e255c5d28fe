use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::histogram::LatencyHistogram;

/// How operators coordinate in a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Tokens,
    Notifications,
    /// Watermark stages with an all-to-all exchange before each stage.
    WatermarksX,
    /// Watermark stages in independent per-worker pipelines.
    WatermarksP,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Tokens, Arm::Notifications, Arm::WatermarksX, Arm::WatermarksP];

    pub fn name(&self) -> &'static str {
        match self {
            Arm::Tokens => "tokens",
            Arm::Notifications => "notifications",
            Arm::WatermarksX => "watermarks-X",
            Arm::WatermarksP => "watermarks-P",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unknown arm `{0}`")]
    Arm(String),
    #[error("unknown status `{0}`")]
    Status(String),
    #[error("bad header `{0}`")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Fields { line: usize, expected: usize, found: usize },
    #[error("line {line}: bad number `{value}` in column {column}")]
    Number { line: usize, column: &'static str, value: String },
}

impl FromStr for Arm {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Arm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| ParseError::Arm(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    Dnf,
}

/// Latency percentiles of a finished run, in nanoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Latencies {
    pub p50: u64,
    pub p999: u64,
    pub max: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentRow {
    pub experiment: String,
    pub arm: Arm,
    pub workers: usize,
    pub rate_per_worker: u64,
    pub total_rate: u64,
    pub quantum: u64,
    pub sequence_length: Option<usize>,
    /// `None` exactly when the run did not finish.
    pub latencies: Option<Latencies>,
}

impl ExperimentRow {
    pub fn status(&self) -> Status {
        if self.latencies.is_some() {
            Status::Ok
        } else {
            Status::Dnf
        }
    }

    pub fn latencies_from(histogram: &LatencyHistogram) -> Option<Latencies> {
        if histogram.is_dnf() {
            return None;
        }
        Some(Latencies {
            p50: histogram.quantile(0.5).unwrap_or(0),
            p999: histogram.quantile(0.999).unwrap_or(0),
            max: histogram.max(),
        })
    }
}

pub const COLUMNS: [&str; 11] = [
    "experiment",
    "arm",
    "workers",
    "rate_per_worker",
    "total_rate",
    "quantum",
    "sequence_length",
    "0.5",
    "0.999",
    "max",
    "status",
];

/// Tab-separated rows under a header line.
pub fn emit_tsv(rows: &[ExperimentRow]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for row in rows {
        let (p50, p999, max) = match row.latencies {
            Some(l) => (l.p50.to_string(), l.p999.to_string(), l.max.to_string()),
            None => Default::default(),
        };
        let fields = [
            row.experiment.clone(),
            row.arm.to_string(),
            row.workers.to_string(),
            row.rate_per_worker.to_string(),
            row.total_rate.to_string(),
            row.quantum.to_string(),
            row.sequence_length.map(|l| l.to_string()).unwrap_or_default(),
            p50,
            p999,
            max,
            match row.status() {
                Status::Ok => "ok".to_string(),
                Status::Dnf => "DNF".to_string(),
            },
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

pub fn parse_tsv(text: &str) -> Result<Vec<ExperimentRow>, ParseError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != COLUMNS.join("\t") {
        return Err(ParseError::Header(header.to_string()));
    }
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        let line_no = index + 2;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(ParseError::Fields { line: line_no, expected: COLUMNS.len(), found: f.len() });
        }
        let num = |i: usize| -> Result<u64, ParseError> {
            f[i].parse().map_err(|_| ParseError::Number { line: line_no, column: COLUMNS[i], value: f[i].to_string() })
        };
        let latencies = match f[10] {
            "ok" => Some(Latencies { p50: num(7)?, p999: num(8)?, max: num(9)? }),
            "DNF" => None,
            other => return Err(ParseError::Status(other.to_string())),
        };
        rows.push(ExperimentRow {
            experiment: f[0].to_string(),
            arm: f[1].parse()?,
            workers: num(2)? as usize,
            rate_per_worker: num(3)?,
            total_rate: num(4)?,
            quantum: num(5)?,
            sequence_length: if f[6].is_empty() { None } else { Some(num(6)? as usize) },
            latencies,
        });
    }
    Ok(rows)
}
