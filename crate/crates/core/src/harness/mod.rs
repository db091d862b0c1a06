//! Metrics, presets, the comparison runner and file output.

mod compare;
mod metrics;
pub mod presets;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub use compare::{
    mean_stdev, run_comparison, run_matrix, run_one, Case, ComparisonError, ComparisonRow,
    ComparisonTable, MetricValues, RunError, RunRecord, TableError, METRIC_COLUMNS,
};
pub use metrics::{compute_metrics, rtt_summary, utilization, MetricsError, MetricsReport};
pub use presets::{preset, PRESETS};

use crate::sim::Timeline;

pub fn write_timeline_csv<W: Write>(timeline: &Timeline, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_us", "event", "value"])?;
    for e in &timeline.events {
        out.write_record([
            e.t.as_micros().to_string(),
            e.kind.to_string(),
            e.value.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, TableError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn csv_to_io(path: &Path, e: csv::Error) -> TableError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => TableError::Io {
            path: path.display().to_string(),
            source,
        },
        other => TableError::Parse(format!("{other:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Table,
}

pub fn emit_table(
    table: &ComparisonTable,
    format: OutputFormat,
    path: &Path,
) -> Result<(), TableError> {
    let mut f = create(path)?;
    let io = |source| TableError::Io {
        path: path.display().to_string(),
        source,
    };
    match format {
        OutputFormat::Csv => table.write_csv(&mut f).map_err(|e| csv_to_io(path, e))?,
        OutputFormat::Table => f.write_all(table.to_text().as_bytes()).map_err(io)?,
    }
    f.flush().map_err(io)
}

pub fn emit_timeline(timeline: &Timeline, path: &Path) -> Result<(), TableError> {
    let mut f = create(path)?;
    write_timeline_csv(timeline, &mut f).map_err(|e| csv_to_io(path, e))?;
    f.flush().map_err(|source| TableError::Io {
        path: path.display().to_string(),
        source,
    })
}
