//! Multi-run comparisons: every (case, controller, seed) triple, aggregated
//! into mean and sample standard deviation per (case, controller).

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::thread;

use thiserror::Error;

use super::metrics::{compute_metrics, MetricsError, MetricsReport};
use super::presets::preset;
use crate::cc::{ControllerConfig, ControllerKind};
use crate::error::ConfigError;
use crate::sim::{run_scenario, RunStats, Scenario};

/// A named base scenario; controller and seed are filled in per run.
#[derive(Clone, Debug)]
pub struct Case {
    pub name: String,
    pub scenario: Scenario,
}

impl Case {
    pub fn preset(name: &str) -> Option<Case> {
        preset(name, ControllerKind::Gcc, 0).map(|scenario| Case {
            name: name.to_string(),
            scenario,
        })
    }

    /// The scenario for one run. A controller section that already matches
    /// `kind` keeps its parameter overrides.
    pub fn scenario_for(&self, kind: ControllerKind, seed: u64) -> Scenario {
        let mut s = self.scenario.clone();
        if s.controller.kind != kind {
            s.controller = ControllerConfig::new(kind);
        }
        s.seed = seed;
        s
    }
}

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub case: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub stats: RunStats,
    pub report: MetricsReport,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Error)]
#[error("run case={case} controller={controller} seed={seed} failed: {source}")]
pub struct ComparisonError {
    pub case: String,
    pub controller: ControllerKind,
    pub seed: u64,
    #[source]
    pub source: RunError,
}

pub fn run_one(case: &Case, controller: ControllerKind, seed: u64) -> Result<RunRecord, RunError> {
    let scenario = case.scenario_for(controller, seed);
    let out = run_scenario(&scenario)?;
    let report = compute_metrics(&out.stats, &scenario)?;
    Ok(RunRecord {
        case: case.name.clone(),
        controller,
        seed,
        stats: out.stats,
        report,
    })
}

/// Runs every (case, controller, seed) triple. Runs are spread over the
/// available cores; results come back in input order.
pub fn run_matrix(
    cases: &[Case],
    controllers: &[ControllerKind],
    seeds: &[u64],
) -> Result<Vec<RunRecord>, ComparisonError> {
    let jobs: Vec<(&Case, ControllerKind, u64)> = cases
        .iter()
        .flat_map(|c| {
            controllers
                .iter()
                .flat_map(move |&k| seeds.iter().map(move |&s| (c, k, s)))
        })
        .collect();
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len().max(1));
    let run = |&(case, kind, seed): &(&Case, ControllerKind, u64)| {
        run_one(case, kind, seed).map_err(|source| ComparisonError {
            case: case.name.clone(),
            controller: kind,
            seed,
            source,
        })
    };
    let results: Vec<Result<RunRecord, ComparisonError>> = if workers <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let chunk = jobs.len().div_ceil(workers);
        thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(run).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("simulation thread panicked"))
                .collect()
        })
    };
    results.into_iter().collect()
}

pub fn run_comparison(
    cases: &[Case],
    controllers: &[ControllerKind],
    seeds: &[u64],
) -> Result<ComparisonTable, ComparisonError> {
    Ok(ComparisonTable::aggregate(&run_matrix(
        cases,
        controllers,
        seeds,
    )?))
}

/// The eight numeric metrics of a report, in output column order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricValues {
    pub rtt_max_ms: f64,
    pub rtt_min_ms: f64,
    pub rtt_avg_ms: f64,
    pub stall_rate: f64,
    pub quality_mbps: f64,
    pub utilization: f64,
    pub marks: f64,
    pub drops: f64,
}

pub const METRIC_COLUMNS: [&str; 8] = [
    "rtt_max_ms",
    "rtt_min_ms",
    "rtt_avg_ms",
    "stall_rate",
    "quality_mbps",
    "utilization",
    "marks",
    "drops",
];

impl MetricValues {
    pub fn to_array(self) -> [f64; 8] {
        [
            self.rtt_max_ms,
            self.rtt_min_ms,
            self.rtt_avg_ms,
            self.stall_rate,
            self.quality_mbps,
            self.utilization,
            self.marks,
            self.drops,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        MetricValues {
            rtt_max_ms: a[0],
            rtt_min_ms: a[1],
            rtt_avg_ms: a[2],
            stall_rate: a[3],
            quality_mbps: a[4],
            utilization: a[5],
            marks: a[6],
            drops: a[7],
        }
    }
}

impl From<&MetricsReport> for MetricValues {
    fn from(r: &MetricsReport) -> Self {
        MetricValues {
            rtt_max_ms: r.rtt_max_ms,
            rtt_min_ms: r.rtt_min_ms,
            rtt_avg_ms: r.rtt_avg_ms,
            stall_rate: r.stalling_rate,
            quality_mbps: r.quality_mbps,
            utilization: r.bandwidth_utilization,
            marks: r.mark_count as f64,
            drops: r.drop_count as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub case: String,
    pub controller: ControllerKind,
    pub seed_count: usize,
    pub mean: MetricValues,
    /// Sample standard deviation; zero for a single seed.
    pub stdev: MetricValues,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot write `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed table CSV: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ComparisonTable {
    /// Groups records by (case, controller) in first-appearance order.
    pub fn aggregate(records: &[RunRecord]) -> Self {
        let mut keys: Vec<(String, ControllerKind)> = Vec::new();
        for r in records {
            let k = (r.case.clone(), r.controller);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let rows = keys
            .into_iter()
            .map(|(case, controller)| {
                let group: Vec<[f64; 8]> = records
                    .iter()
                    .filter(|r| r.case == case && r.controller == controller)
                    .map(|r| MetricValues::from(&r.report).to_array())
                    .collect();
                let mut mean = [0.0; 8];
                let mut sd = [0.0; 8];
                for i in 0..8 {
                    let col: Vec<f64> = group.iter().map(|g| g[i]).collect();
                    (mean[i], sd[i]) = mean_stdev(&col);
                }
                ComparisonRow {
                    case,
                    controller,
                    seed_count: group.len(),
                    mean: MetricValues::from_array(mean),
                    stdev: MetricValues::from_array(sd),
                }
            })
            .collect();
        ComparisonTable { rows }
    }

    pub fn row(&self, case: &str, controller: ControllerKind) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.controller == controller)
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["case", "controller", "seed_count"]
            .map(String::from)
            .to_vec();
        h.extend(METRIC_COLUMNS.iter().map(|c| c.to_string()));
        h.extend(METRIC_COLUMNS.iter().map(|c| format!("{c}_sd")));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::csv_header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.case.clone(),
                r.controller.to_string(),
                r.seed_count.to_string(),
            ];
            rec.extend(r.mean.to_array().iter().map(|v| v.to_string()));
            rec.extend(r.stdev.to_array().iter().map(|v| v.to_string()));
            out.write_record(rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TableError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header != Self::csv_header() {
            return Err(TableError::Parse(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let num = |j: usize| -> Result<f64, TableError> {
                rec[j].parse().map_err(|_| {
                    TableError::Parse(format!("line {line}: bad number `{}`", &rec[j]))
                })
            };
            let mut mean = [0.0; 8];
            let mut sd = [0.0; 8];
            for k in 0..8 {
                mean[k] = num(3 + k)?;
                sd[k] = num(11 + k)?;
            }
            rows.push(ComparisonRow {
                case: rec[0].to_string(),
                controller: rec[1]
                    .parse()
                    .map_err(|e| TableError::Parse(format!("line {line}: {e}")))?,
                seed_count: rec[2]
                    .parse()
                    .map_err(|_| TableError::Parse(format!("line {line}: bad seed_count")))?,
                mean: MetricValues::from_array(mean),
                stdev: MetricValues::from_array(sd),
            });
        }
        Ok(ComparisonTable { rows })
    }

    /// Aligned plain-text rendering, one line per row, `mean±sd` cells.
    pub fn to_text(&self) -> String {
        let header = [
            "case",
            "controller",
            "seeds",
            "rtt max",
            "rtt min",
            "rtt avg",
            "stall %",
            "quality",
            "util %",
            "marks",
            "drops",
        ];
        let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let (m, s) = (r.mean, r.stdev);
            lines.push(vec![
                r.case.clone(),
                r.controller.to_string(),
                r.seed_count.to_string(),
                format!("{:.1}±{:.1}", m.rtt_max_ms, s.rtt_max_ms),
                format!("{:.1}±{:.1}", m.rtt_min_ms, s.rtt_min_ms),
                format!("{:.1}±{:.1}", m.rtt_avg_ms, s.rtt_avg_ms),
                format!("{:.2}±{:.2}", m.stall_rate * 100.0, s.stall_rate * 100.0),
                format!("{:.2}±{:.2}", m.quality_mbps, s.quality_mbps),
                format!("{:.1}±{:.1}", m.utilization * 100.0, s.utilization * 100.0),
                format!("{:.0}", m.marks),
                format!("{:.0}", m.drops),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                lines
                    .iter()
                    .map(|l| l[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, w))| {
                    let pad = w - cell.chars().count();
                    if i < 2 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
