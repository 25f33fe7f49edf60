//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, so the seeds stay meaningful on a stable toolchain.

use std::fs;
use std::path::{Path, PathBuf};

use twinline::counting::parse_crossings;
use twinline::ingest::detections::parse_detection_line;
use twinline::ingest::{parse_detections, parse_ledger, parse_sensor_csv, parse_topology};
use twinline::kpi::Report;
use twinline::simulator::Scenario;
use twinline::tracker::parse_track_dump;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn rejected(path: &Path) -> bool {
    path.file_name().unwrap().to_str().unwrap().starts_with("rejected_")
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn detection_line_seeds() {
    for (p, b) in seeds("detection_line") {
        assert_eq!(parse_detection_line(text(&b).trim_end()).is_err(), rejected(&p), "{}", p.display());
    }
}

#[test]
fn detection_file_seeds_parse_or_are_rejected() {
    for (p, b) in seeds("detections") {
        match parse_detections(b.as_slice()) {
            Ok(parsed) => assert!(!rejected(&p) && !parsed.records.is_empty(), "{}", p.display()),
            Err(e) => assert!(rejected(&p), "{}: {e}", p.display()),
        }
    }
}

#[test]
fn sensor_seeds_parse() {
    for (p, b) in seeds("sensor_csv") {
        parse_sensor_csv(b.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn topology_seeds_round_trip() {
    for (p, b) in seeds("topology") {
        let (topo, _) = parse_topology(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let (again, _) = parse_topology(&topo.to_toml_string()).unwrap();
        assert_eq!(again, topo);
    }
}

#[test]
fn ledger_seeds_parse() {
    for (p, b) in seeds("ledger") {
        parse_ledger(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn scenario_seeds_parse() {
    for (p, b) in seeds("scenario") {
        Scenario::from_toml(text(&b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn report_seeds_parse() {
    for (p, b) in seeds("report") {
        Report::from_json(b.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn track_and_crossing_seeds_parse() {
    for (p, b) in seeds("track_dump") {
        assert!(!parse_track_dump(b.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display())).is_empty());
    }
    for (p, b) in seeds("crossings") {
        assert!(!parse_crossings(b.as_slice()).unwrap_or_else(|e| panic!("{}: {e}", p.display())).is_empty());
    }
}
