//! Result emission: pretty JSON and tabular CSV, both reloadable.
//!
//! CSV files open with `#`-prefixed metadata lines carrying the schema tag
//! and whatever scalars do not fit a rectangular table, followed by one
//! header row and data rows. Floats are written in shortest round-trip form,
//! so reloading a file reproduces the original values bit for bit. The
//! parsers in this module read exactly what the writers emit.

use std::io::Write as _;
use std::path::Path;

use mcmc_certify::samplers::Trajectory;
use mcmc_certify::{Error, Result};
use serde::{de::DeserializeOwned, Serialize};

use crate::experiments::{ConstantsRow, ConstantsTableReport, ExperimentResult, RepRecord};

/// Schema tag on trajectory CSV files.
pub const TRAJECTORY_SCHEMA: &str = "mcmc-certify.trajectory.v1";

/// Pretty JSON with a trailing newline.
pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    text
}

/// Write to the given path, or to standard output when there is none.
pub fn write_output(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_error(context: &str, e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(format!("{context}: {e}")))
}

/// Serialize records into CSV lines under `#` metadata lines.
fn table_csv<T: Serialize>(meta: &str, rows: &[T], context: &str) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| csv_error(context, e))?;
    }
    let body = writer.into_inner().map_err(|e| csv_error(context, e))?;
    let body = String::from_utf8(body).map_err(|e| csv_error(context, e))?;
    Ok(format!("# {meta}\n{body}"))
}

/// Parse CSV produced by [`table_csv`], tolerating the metadata lines.
fn table_from_csv<T: DeserializeOwned>(text: &str, context: &str) -> Result<Vec<T>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| csv_error(context, e))
}

/// Per-replication records as CSV; the summaries are derived data and are
/// recomputed on load.
pub fn records_csv(result: &ExperimentResult) -> Result<String> {
    let meta = format!(
        "{} kind={} seed={}",
        result.schema, result.config.experiment.kind, result.config.experiment.seed
    );
    table_csv(&meta, &result.records, "experiment records")
}

pub fn records_from_csv(text: &str) -> Result<Vec<RepRecord>> {
    table_from_csv(text, "experiment records")
}

/// Certificate sweep as CSV.
pub fn constants_csv(report: &ConstantsTableReport) -> Result<String> {
    let family = serde_json::to_value(report.family).expect("family serializes");
    let meta = format!(
        "{} family={}",
        report.schema,
        family.as_str().expect("family is a string")
    );
    table_csv(&meta, &report.rows, "constants table")
}

pub fn constants_rows_from_csv(text: &str) -> Result<Vec<ConstantsRow>> {
    table_from_csv(text, "constants table")
}

/// One recorded state per row; the run-level counters ride in the metadata
/// line. Regeneration start indices are JSON-only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TrajectoryRow {
    pub k: u64,
    pub x: f64,
    pub v: f64,
    pub v_sq: f64,
}

pub fn trajectory_csv(traj: &Trajectory<f64>) -> Result<String> {
    let rows: Vec<TrajectoryRow> = traj
        .states
        .iter()
        .zip(&traj.v_values)
        .zip(&traj.v_sq_values)
        .enumerate()
        .map(|(k, ((&x, &v), &v_sq))| TrajectoryRow { k: k as u64, x, v, v_sq })
        .collect();
    let meta = format!(
        "{TRAJECTORY_SCHEMA} kind={} total_inner_steps={} regeneration_count={} \
         nonfinite_rejections={}",
        traj.kind, traj.total_inner_steps, traj.regeneration_count, traj.nonfinite_rejections
    );
    table_csv(&meta, &rows, "trajectory")
}

pub fn trajectory_rows_from_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    table_from_csv(text, "trajectory")
}

/// Scalar reports (certificates, interval and bound checks) as a two-column
/// `field,value` table. Nested values are JSON-encoded in the cell.
pub fn kv_csv<T: Serialize>(value: &T) -> Result<String> {
    let doc = serde_json::to_value(value).expect("reports serialize");
    let serde_json::Value::Object(map) = doc else {
        return Err(Error::Precondition(
            "only object-shaped reports have a key-value CSV form".into(),
        ));
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["field", "value"])
        .map_err(|e| csv_error("report", e))?;
    for (field, value) in &map {
        let cell = match value {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        writer
            .write_record([field.as_str(), cell.as_str()])
            .map_err(|e| csv_error("report", e))?;
    }
    let body = writer.into_inner().map_err(|e| csv_error("report", e))?;
    String::from_utf8(body).map_err(|e| csv_error("report", e))
}
