//! Round-log CSV files and the best-validation-accuracy summary.
//!
//! Columns: `round, strategy, train_loss_mean, val_loss, val_accuracy,
//! bytes_broadcast, bytes_uploaded, wall_time_s, clients`. `clients` is a
//! `;`-separated id list; unevaluated rounds leave the validation cells empty.
//! Wall-clock time is the only non-deterministic column and can be left empty
//! and written to a sidecar file instead (see [`WallTime`]).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fedproto::{best_round, BestRound, RoundLog};

pub const CSV_HEADER: [&str; 9] = [
    "round",
    "strategy",
    "train_loss_mean",
    "val_loss",
    "val_accuracy",
    "bytes_broadcast",
    "bytes_uploaded",
    "wall_time_s",
    "clients",
];

/// Where the wall-clock column goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallTime {
    /// Written in the `wall_time_s` column.
    Column,
    /// Column left empty; times go to a `round,wall_time_s` sidecar, keeping the log deterministic.
    #[default]
    Sidecar,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    Error::format(offset, format!("{}: {e}", path.display()))
}

/// Streams round logs into a CSV writer, one flushed row per round.
pub struct RoundLogWriter<W: Write> {
    inner: csv::Writer<W>,
    wall_time: WallTime,
}

impl<W: Write> RoundLogWriter<W> {
    pub fn new(writer: W, wall_time: WallTime) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner
            .write_record(CSV_HEADER)
            .map_err(|e| Error::Internal(format!("csv header: {e}")))?;
        Ok(Self { inner, wall_time })
    }

    pub fn append(&mut self, log: &RoundLog) -> Result<()> {
        let clients = log
            .participating_clients
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let wall = match self.wall_time {
            WallTime::Column => log.wall_time_s.to_string(),
            WallTime::Sidecar => String::new(),
        };
        self.inner
            .write_record([
                log.round.to_string(),
                log.strategy.clone(),
                log.train_loss_mean.to_string(),
                opt(log.val_loss),
                opt(log.val_accuracy),
                log.bytes_broadcast.to_string(),
                log.bytes_uploaded.to_string(),
                wall,
                clients,
            ])
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|e| Error::Internal(format!("csv row: {e}")))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Internal(format!("csv flush: {e}")))
    }
}

/// Renders complete round logs as CSV text.
pub fn to_csv(logs: &[RoundLog], wall_time: WallTime) -> Result<String> {
    let mut w = RoundLogWriter::new(Vec::new(), wall_time)?;
    for log in logs {
        w.append(log)?;
    }
    Ok(String::from_utf8(w.into_inner()?).expect("csv is UTF-8"))
}

/// Sidecar text with `round,wall_time_s` rows.
pub fn timing_csv(logs: &[RoundLog]) -> String {
    let mut s = String::from("round,wall_time_s\n");
    for log in logs {
        let _ = writeln!(s, "{},{}", log.round, log.wall_time_s);
    }
    s
}

fn parse_opt(field: &str) -> std::result::Result<Option<f64>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some).map_err(|_| format!("bad number {field:?}"))
    }
}

/// Reads a round-log CSV; malformed content is a format error naming the file.
pub fn read_round_csv(path: impl AsRef<Path>) -> Result<Vec<RoundLog>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Format {
            offset: 0,
            detail: format!("{}: {e}", path.display()),
        },
        _ => csv_err(path, e),
    })?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::format(0, format!("{}: unexpected header {:?}", path.display(), headers)));
    }
    let mut logs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let offset = record.position().map_or(0, |p| p.byte());
        let bad = |what: String| Error::format(offset, format!("{}: {what}", path.display()));
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("column {} is not a number: {:?}", CSV_HEADER[i], &record[i])))
        };
        let int = |i: usize| -> Result<u64> {
            record[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("column {} is not an integer: {:?}", CSV_HEADER[i], &record[i])))
        };
        let clients = if record[8].is_empty() {
            Vec::new()
        } else {
            record[8]
                .split(';')
                .map(|c| c.parse::<usize>().map_err(|_| bad(format!("bad client id {c:?}"))))
                .collect::<Result<_>>()?
        };
        logs.push(RoundLog {
            round: int(0)? as usize,
            strategy: record[1].to_string(),
            train_loss_mean: num(2)?,
            val_loss: parse_opt(&record[3]).map_err(bad)?,
            val_accuracy: parse_opt(&record[4]).map_err(bad)?,
            bytes_broadcast: int(5)?,
            bytes_uploaded: int(6)?,
            wall_time_s: parse_opt(&record[7]).map_err(bad)?.unwrap_or(0.0),
            participating_clients: clients,
        });
    }
    if logs.is_empty() {
        return Err(Error::format(0, format!("{}: log has no rounds", path.display())));
    }
    Ok(logs)
}

/// Output layout of [`compare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Table,
    Csv,
}

/// One row of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub source: String,
    pub strategy: String,
    pub best: BestRound,
    pub rounds: usize,
}

/// Best validation accuracy and its round for each log file.
pub fn compare_logs<P: AsRef<Path>>(paths: &[P]) -> Result<Vec<ComparisonRow>> {
    if paths.is_empty() {
        return Err(Error::Input("compare needs at least one log file".into()));
    }
    paths
        .iter()
        .map(|p| {
            let path = p.as_ref();
            let logs = read_round_csv(path)?;
            let best = best_round(&logs).ok_or_else(|| {
                Error::format(0, format!("{}: no round has a validation accuracy", path.display()))
            })?;
            Ok(ComparisonRow {
                source: path.display().to_string(),
                strategy: logs[0].strategy.clone(),
                best,
                rounds: logs.len(),
            })
        })
        .collect()
}

pub fn render_comparison(rows: &[ComparisonRow], format: TableFormat) -> String {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("log,strategy,best_round,bva,rounds\n");
            for r in rows {
                let _ = writeln!(out, "{},{},{},{},{}", r.source, r.strategy, r.best.round, r.best.accuracy, r.rounds);
            }
        }
        TableFormat::Table => {
            let width = rows.iter().map(|r| r.source.len()).max().unwrap_or(3).max(3);
            let _ = writeln!(out, "{:<width$}  {:<8}  {:>10}  {:>8}", "log", "strategy", "best_round", "bva");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:<8}  {:>10}  {:>7.2}%",
                    r.source,
                    r.strategy,
                    r.best.round,
                    100.0 * r.best.accuracy
                );
            }
        }
    }
    out
}

/// Reads the logs and renders the comparison.
pub fn compare<P: AsRef<Path>>(paths: &[P], format: TableFormat) -> Result<String> {
    Ok(render_comparison(&compare_logs(paths)?, format))
}
