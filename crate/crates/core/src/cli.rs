//! `twinline` command line.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 replay succeeded
//! but some minutes had no camera coverage.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};

use crate::error::{Error, Result};
use crate::ingest::{load_topology, read_detections, read_ledger, read_sensor_csv, IngestWarnings};
use crate::kpi::{evaluate, Report};
use crate::pipeline::{replay, ReplayInputs};
use crate::simulator::{simulate, Scenario};
use crate::tracker::{parse_track_dump, TrackSnapshot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DATA_GAPS: i32 = 3;

pub const LOG_ENV: &str = "TWINLINE_LOG";

pub const EVAL_CSV: &str = "evaluation.csv";
pub const EVAL_JSON: &str = "evaluation.json";

#[derive(Debug, Parser)]
#[command(name = "twinline", version, about = "Production-line analytics from detections and motor sensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session with an exact ground-truth ledger.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Track, count and compute KPIs for a recorded or simulated session.
    Replay {
        /// Detection files, or directories whose *.jsonl files are read.
        #[arg(long, required = true, num_args = 1..)]
        detections: Vec<PathBuf>,
        #[arg(long)]
        sensor: Option<PathBuf>,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Availability from the ledger's stop intervals when no sensor file
        /// is given; also supplies the session length if the topology lacks it.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// Score a report against a ground-truth ledger.
    Evaluate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Track dump for per-frame accuracy; defaults to the one named in
        /// the report, next to it.
        #[arg(long)]
        tracks: Option<PathBuf>,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    // a second init (tests, embedding) is harmless
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

pub fn execute(command: &Command) -> Result<i32> {
    match command {
        Command::Simulate { scenario, out, seed } => cmd_simulate(scenario, out, *seed),
        Command::Replay {
            detections,
            sensor,
            topology,
            out,
            ledger,
        } => cmd_replay(detections, sensor.as_deref(), topology, out, ledger.as_deref()),
        Command::Evaluate {
            report,
            ledger,
            out,
            tracks,
        } => cmd_evaluate(report, ledger, out, tracks.as_deref()),
    }
}

fn note_warnings(path: &Path, w: IngestWarnings) {
    if w.unknown_fields > 0 {
        warn!("{}: ignored {} unknown fields", path.display(), w.unknown_fields);
    }
    if w.resorted_rows > 0 {
        warn!("{}: {} rows were out of time order and re-sorted", path.display(), w.resorted_rows);
    }
}

pub fn cmd_simulate(scenario_path: &Path, out: &Path, seed: Option<u64>) -> Result<i32> {
    let mut scenario = Scenario::load(scenario_path)?;
    if let Some(seed) = seed {
        scenario.rng_seed = seed;
    }
    let sim = simulate(&scenario)?;
    sim.write_to(out)?;
    let path = out.join("scenario.toml");
    fs::write(&path, scenario.to_toml_string()).map_err(|e| Error::io(&path, e))?;
    println!("{}", sim.summary());
    Ok(EXIT_OK)
}

/// Expands directories into their `*.jsonl` files, sorted by name.
fn detection_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Error::Schema(format!("{}: no .jsonl detection files", p.display())));
            }
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn cmd_replay(
    detections: &[PathBuf],
    sensor: Option<&Path>,
    topology: &Path,
    out: &Path,
    ledger: Option<&Path>,
) -> Result<i32> {
    let topology = load_topology(topology)?;
    let mut dets = Vec::new();
    for f in detection_files(detections)? {
        let parsed = read_detections(&f)?;
        note_warnings(&f, parsed.warnings);
        dets.extend(parsed.records);
    }
    let sensor = match sensor {
        Some(p) => {
            let parsed = read_sensor_csv(p)?;
            note_warnings(p, parsed.warnings);
            Some(parsed.records)
        }
        None => None,
    };
    let ledger = ledger.map(read_ledger).transpose()?;
    info!("replaying {} detections", dets.len());

    let mut result = replay(&ReplayInputs {
        topology: &topology,
        detections: &dets,
        sensor: sensor.as_deref(),
        ledger: ledger.as_ref(),
    })?;
    result.write_to(out)?;
    println!("{}", result.report.summary());
    Ok(if result.report.has_data_gaps() {
        EXIT_DATA_GAPS
    } else {
        EXIT_OK
    })
}

fn read_tracks(path: &Path) -> Result<Vec<TrackSnapshot>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_track_dump(BufReader::new(f))
}

pub fn cmd_evaluate(report_path: &Path, ledger: &Path, out: &Path, tracks: Option<&Path>) -> Result<i32> {
    let report = Report::read(report_path)?;
    let ledger = read_ledger(ledger)?;
    let tracks_path = tracks.map(Path::to_path_buf).or_else(|| {
        let name = report.track_dump.as_ref()?;
        let p = report_path.parent().unwrap_or(Path::new(".")).join(name);
        p.exists().then_some(p)
    });
    let predictions = tracks_path.as_deref().map(read_tracks).transpose()?;
    let eval = evaluate(&report, &ledger, predictions.as_deref())?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(EVAL_CSV);
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    eval.write_csv(BufWriter::new(f)).map_err(|e| Error::io(&path, e.into()))?;
    let path = out.join(EVAL_JSON);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    serde_json::to_writer_pretty(&mut w, &eval).map_err(|e| Error::io(&path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
    println!("{}", eval.summary());
    Ok(EXIT_OK)
}
