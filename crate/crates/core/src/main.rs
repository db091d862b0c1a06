use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use l4s_sim::cc::ControllerKind;
use l4s_sim::harness::{self, Case, ComparisonTable, OutputFormat, RunRecord};
use l4s_sim::netem::{load_trace_csv, normalize_trace, write_trace_csv};
use l4s_sim::sim::{run_scenario, Scenario};

#[derive(Parser)]
#[command(
    name = "l4s-sim",
    version,
    about = "L4S dual-queue video congestion-control simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its metrics.
    Run {
        /// Scenario JSON file or preset name (case1, case2, case3, case4a, case4b, case4c).
        #[arg(long)]
        scenario: String,
        /// Overrides the scenario's controller.
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Session length in seconds, overriding the scenario.
        #[arg(long)]
        duration: Option<f64>,
        /// Write the per-event timeline to this CSV.
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Run every case × controller × seed and write the aggregated table.
    Compare {
        /// Comma-separated presets or scenario files.
        #[arg(long, value_delimiter = ',', default_value = "case1,case2,case3")]
        cases: Vec<String>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "gcc,sensitive-gcc,l4s-cc,l4s-gcc"
        )]
        controllers: Vec<ControllerKind>,
        /// Number of seeds; runs use seeds 1..=n.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Min-max scale a `t_s,mbps` trace onto [0, max] Mbps.
    NormalizeTrace {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        max_mbps: f64,
    },
}

fn load_case(name: &str) -> Result<Case> {
    if let Some(case) = Case::preset(name) {
        return Ok(case);
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!(
            "`{name}` is neither a preset ({}) nor an existing file",
            harness::PRESETS.join(", ")
        );
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario = Scenario::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(Case {
        name: scenario.name.clone(),
        scenario,
    })
}

fn format_of(f: Format) -> OutputFormat {
    match f {
        Format::Csv => OutputFormat::Csv,
        Format::Table => OutputFormat::Table,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            controller,
            seed,
            duration,
            timeline,
            out,
            format,
        } => {
            let case = load_case(&scenario)?;
            let mut sc = case.scenario_for(controller.unwrap_or(case.scenario.controller.kind), 0);
            sc.seed = seed.unwrap_or(case.scenario.seed);
            if let Some(d) = duration {
                sc.duration_s = d;
            }
            sc.timeline = timeline.is_some();
            let output = run_scenario(&sc)?;
            let report = harness::compute_metrics(&output.stats, &sc)?;
            if !output.stats.is_conserved() {
                bail!("packet conservation violated: {:?}", output.stats);
            }
            let table = ComparisonTable::aggregate(&[RunRecord {
                case: case.name,
                controller: sc.controller.kind,
                seed: sc.seed,
                stats: output.stats,
                report,
            }]);
            harness::emit_table(&table, format_of(format), &out)?;
            if let (Some(path), Some(tl)) = (timeline, output.timeline) {
                harness::emit_timeline(&tl, &path)?;
            }
        }
        Command::Compare {
            cases,
            controllers,
            seeds,
            duration,
            out,
            format,
        } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let mut loaded = cases
                .iter()
                .map(|c| load_case(c))
                .collect::<Result<Vec<_>>>()?;
            if let Some(d) = duration {
                for c in &mut loaded {
                    c.scenario.duration_s = d;
                }
            }
            let seed_list: Vec<u64> = (1..=seeds).collect();
            let table = harness::run_comparison(&loaded, &controllers, &seed_list)?;
            harness::emit_table(&table, format_of(format), &out)?;
        }
        Command::NormalizeTrace {
            input,
            out,
            max_mbps,
        } => {
            let raw = load_trace_csv(&input)?;
            let scaled = normalize_trace(&raw, max_mbps)?;
            let f = fs::File::create(&out)
                .with_context(|| format!("cannot write `{}`", out.display()))?;
            write_trace_csv(&scaled, f)
                .with_context(|| format!("cannot write `{}`", out.display()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
