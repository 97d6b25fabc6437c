//! Run artifacts: the per-round CSV, the JSON summary and the resolved
//! configuration.
//!
//! Rows are flushed as soon as they are written, so an interrupted run
//! leaves a valid CSV prefix. The summary is written to a temporary file and
//! renamed into place.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenarios::{RoundReport, ScenarioRun};

pub const ROUNDS_HEADER: [&str; 5] = [
    "round",
    "federated_test_mae_m",
    "centralized_test_mae_m",
    "federated_train_mae_m",
    "centralized_train_mae_m",
];

fn cell(v: Option<f64>) -> String {
    // `Display` for f64 prints the shortest string that parses back exactly.
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Streams [`RoundReport`] rows to a CSV file.
pub struct RoundsWriter {
    writer: csv::Writer<File>,
    path: PathBuf,
}

impl RoundsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        writer.write_record(ROUNDS_HEADER).map_err(|e| csv_error(&path, e))?;
        writer.flush()?;
        Ok(Self { writer, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&mut self, r: &RoundReport) -> Result<()> {
        self.writer
            .write_record([
                r.round.to_string(),
                cell(Some(r.federated_test_mae_m)),
                cell(r.centralized_test_mae_m),
                cell(Some(r.federated_train_mae_m)),
                cell(r.centralized_train_mae_m),
            ])
            .map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush()?;
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("{other:?}"),
        },
    }
}

/// Reads a file written by [`RoundsWriter`].
pub fn read_rounds(path: impl AsRef<Path>) -> Result<Vec<RoundReport>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(ROUNDS_HEADER) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let real = |i: usize| -> Result<Option<f64>> {
            let s = &record[i];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse()
                .map(Some)
                .map_err(|_| bad(format!("column {} is not a number: {s:?}", ROUNDS_HEADER[i])))
        };
        let required = |i: usize| -> Result<f64> {
            real(i)?.ok_or_else(|| bad(format!("column {} is empty", ROUNDS_HEADER[i])))
        };
        out.push(RoundReport {
            round: record[0].parse().map_err(|_| bad(format!("bad round {:?}", &record[0])))?,
            federated_test_mae_m: required(1)?,
            centralized_test_mae_m: real(2)?,
            federated_train_mae_m: required(3)?,
            centralized_train_mae_m: real(4)?,
        });
    }
    Ok(out)
}

/// Final numbers of one run (one scenario at one user count).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub scenario: String,
    pub n_users: usize,
    pub rounds_completed: u32,
    pub federated_test_mae_m: f64,
    pub centralized_test_mae_m: Option<f64>,
    pub federated_train_mae_m: f64,
    pub centralized_train_mae_m: Option<f64>,
    /// Mean absolute error per coordinate on the test set.
    pub federated_test_coord_mae_m: Option<f64>,
    pub centralized_test_coord_mae_m: Option<f64>,
    pub user_sample_counts: Vec<usize>,
    pub rounds_csv: String,
}

impl RunSummary {
    /// Summary of the last completed round.
    pub fn from_reports(
        scenario: &str,
        n_users: usize,
        reports: &[RoundReport],
        user_sample_counts: Vec<usize>,
        rounds_csv: impl Into<String>,
    ) -> Result<Self> {
        let last = reports
            .last()
            .ok_or_else(|| crate::error::invalid("no rounds completed"))?;
        Ok(Self {
            label: format!("{}, n={n_users}", scenario.to_uppercase()),
            scenario: scenario.to_string(),
            n_users,
            rounds_completed: last.round,
            federated_test_mae_m: last.federated_test_mae_m,
            centralized_test_mae_m: last.centralized_test_mae_m,
            federated_train_mae_m: last.federated_train_mae_m,
            centralized_train_mae_m: last.centralized_train_mae_m,
            federated_test_coord_mae_m: None,
            centralized_test_coord_mae_m: None,
            user_sample_counts,
            rounds_csv: rounds_csv.into(),
        })
    }

    pub fn from_run(run: &ScenarioRun, rounds_csv: impl Into<String>) -> Result<Self> {
        let mut s = Self::from_reports(
            &run.config.scenario.to_string(),
            run.config.n_users,
            &run.reports,
            run.partition.user_sizes(),
            rounds_csv,
        )?;
        s.federated_test_coord_mae_m = Some(run.federated_test_coord_mae_m);
        s.centralized_test_coord_mae_m = Some(run.centralized_test_coord_mae_m);
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub runs: Vec<RunSummary>,
}

/// Writes `summary` as pretty JSON, replacing any previous file atomically.
pub fn write_summary(path: impl AsRef<Path>, summary: &Summary) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("json.tmp");
    let json = serde_json::to_string_pretty(summary).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(&tmp, json + "\n")?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<Summary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}
