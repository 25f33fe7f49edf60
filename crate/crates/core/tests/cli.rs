use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use twinline::kpi::Report;

const SCENARIO: &str = r#"
duration_s = 240.0
defect_probability = 0.1
rng_seed = 3

[stops]
scripted = [[70.0, 100.0]]

[noise]
miss_probability = 0.02
bbox_jitter_px = 1.0

[[cameras]]
id = 1
belt_range_m = [0.5, 3.9]
origin_px = [40.0, 360.0]
px_per_m = 300.0
box_px = [45.0, 45.0]
watch = [{ edge = 1, priority = 1 }, { edge = 2, priority = 1 }]
"#;

fn twinline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinline"))
        .args(args)
        .env("TWINLINE_LOG", "error")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, scenario: &Path, out: &str) -> PathBuf {
    let out = dir.join(out);
    let o = twinline(&["simulate", "--scenario", p(scenario), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn replay(sim: &Path, out: &Path, sensor: bool) -> Output {
    let det = sim.join("detections");
    let topo = sim.join("topology.toml");
    let sensor_path = sim.join("sensor.csv");
    let mut args = vec!["replay", "--detections", p(&det), "--topology", p(&topo), "--out", p(out)];
    if sensor {
        args.extend(["--sensor", p(&sensor_path)]);
    }
    twinline(&args)
}

#[test]
fn simulate_writes_all_outputs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.scenario", SCENARIO);
    let a = simulate(dir.path(), &sc, "a");
    let b = simulate(dir.path(), &sc, "b");
    for f in ["detections/cam1.jsonl", "sensor.csv", "ledger.json", "topology.toml", "true_kpis.json", "scenario.toml"] {
        let x = fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f}");
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.scenario", SCENARIO);
    let a = simulate(dir.path(), &sc, "a");
    let b = dir.path().join("b");
    let o = twinline(&["simulate", "--scenario", p(&sc), "--out", p(&b), "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0));
    let det = "detections/cam1.jsonl";
    assert_ne!(fs::read(a.join(det)).unwrap(), fs::read(b.join(det)).unwrap());
    assert!(fs::read_to_string(b.join("scenario.toml")).unwrap().contains("rng_seed = 99"));
}

#[test]
fn bundled_scenario_summary_reports_seventy_minutes() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/failover.scenario");
    let out = dir.path().join("sim");
    let o = twinline(&["simulate", "--scenario", p(&sc), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let summary = String::from_utf8(o.stdout).unwrap();
    assert!(summary.contains("70.0 min"), "{summary}");
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.scenario");
    let o = twinline(&["simulate", "--scenario", p(&missing), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));

    let overlapping = SCENARIO.replace("[[70.0, 100.0]]", "[[70.0, 100.0], [90.0, 120.0]]");
    let sc = write_scenario(dir.path(), "bad.scenario", &overlapping);
    let o = twinline(&["simulate", "--scenario", p(&sc), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stops.scripted"));

    let o = twinline(&["replay", "--topology", "x"]);
    assert_eq!(o.status.code(), Some(2));
    let o = twinline(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(twinline(&["--help"]).status.code(), Some(0));
}

#[test]
fn malformed_detection_line_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.scenario", SCENARIO);
    let sim = simulate(dir.path(), &sc, "sim");
    let det = sim.join("detections/cam1.jsonl");
    let mut text = fs::read_to_string(&det).unwrap();
    text.push_str("{\"t_ms\": 5, \"cam\": 1, \"bbox\": [1, 2, 3]}\n");
    fs::write(&det, text).unwrap();
    let o = replay(&sim, &dir.path().join("rep"), true);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line "));
}

#[test]
fn replay_then_self_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.scenario", SCENARIO);
    let sim = simulate(dir.path(), &sc, "sim");
    let rep = dir.path().join("rep");
    let o = replay(&sim, &rep, true);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "report.csv", "tracks.jsonl", "crossings.jsonl", "runstop.csv"] {
        assert!(rep.join(f).exists(), "{f}");
    }
    let eval = dir.path().join("eval");
    let o = twinline(&[
        "evaluate",
        "--report",
        p(&rep.join("report.json")),
        "--ledger",
        p(&sim.join("ledger.json")),
        "--out",
        p(&eval),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(eval.join("evaluation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    // the track dump named in the report is picked up for accuracy
    let json: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("evaluation.json")).unwrap()).unwrap();
    assert!(json["max_accuracy_pct"].as_f64().unwrap() > 90.0);

    // replay is idempotent
    let again = dir.path().join("rep2");
    assert_eq!(replay(&sim, &again, true).status.code(), Some(0));
    for f in ["report.json", "report.csv", "tracks.jsonl"] {
        assert_eq!(fs::read(rep.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn replay_without_sensor_uses_ledger_or_fails() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), "s.scenario", SCENARIO);
    let sim = simulate(dir.path(), &sc, "sim");
    let o = replay(&sim, &dir.path().join("r1"), false);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no availability source"));

    let out = dir.path().join("r2");
    let o = twinline(&[
        "replay",
        "--detections",
        p(&sim.join("detections/cam1.jsonl")),
        "--topology",
        p(&sim.join("topology.toml")),
        "--ledger",
        p(&sim.join("ledger.json")),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::read(&out.join("report.json")).unwrap();
    assert!((report.session.availability - 210.0 / 240.0).abs() < 1e-12);
}

#[test]
fn coverage_loss_exits_3_with_report_written() {
    let dir = tempfile::tempdir().unwrap();
    let text = SCENARIO.replace(
        "watch = [{ edge = 1, priority = 1 }, { edge = 2, priority = 1 }]",
        "watch = [{ edge = 1, priority = 1 }]\nactive_until_s = 150.0\n\n[[cameras]]\nid = 2\nbelt_range_m = [2.3, 3.9]\norigin_px = [40.0, 360.0]\npx_per_m = 300.0\nbox_px = [45.0, 45.0]\nwatch = [{ edge = 2, priority = 1 }]",
    );
    let sc = write_scenario(dir.path(), "gap.scenario", &text);
    let sim = simulate(dir.path(), &sc, "sim");
    let rep = dir.path().join("rep");
    let o = replay(&sim, &rep, true);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::read(&rep.join("report.json")).unwrap();
    assert_eq!(report.session.data_gap_minutes, vec![3]);
}

#[test]
fn dense_packing_replays_with_anomaly_flag() {
    let dir = tempfile::tempdir().unwrap();
    let sc = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/dense_packing.scenario");
    let out = dir.path().join("sim");
    assert_eq!(twinline(&["simulate", "--scenario", p(&sc), "--out", p(&out)]).status.code(), Some(0));
    let rep = dir.path().join("rep");
    let o = replay(&out, &rep, true);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = Report::read(&rep.join("report.json")).unwrap();
    assert!(report.session.performance_anomaly);
    assert!(String::from_utf8_lossy(&o.stdout).contains("performance above 1"));
}

#[test]
fn mismatched_sessions_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let long = write_scenario(dir.path(), "long.scenario", SCENARIO);
    let short = write_scenario(dir.path(), "short.scenario", &SCENARIO.replace("duration_s = 240.0", "duration_s = 120.0"));
    let a = simulate(dir.path(), &long, "long");
    let b = simulate(dir.path(), &short, "short");
    let rep = dir.path().join("rep");
    assert_eq!(replay(&a, &rep, true).status.code(), Some(0));
    let o = twinline(&[
        "evaluate",
        "--report",
        p(&rep.join("report.json")),
        "--ledger",
        p(&b.join("ledger.json")),
        "--out",
        p(&dir.path().join("eval")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
