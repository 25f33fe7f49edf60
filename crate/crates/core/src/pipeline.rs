//! Replay: detections + sensor (or ledger stops) + topology → report.
//!
//! tracker (one per camera, in parallel) → tripwire crossings → per-minute
//! camera failover → availability → KPI report.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use log::{info, warn};

use crate::availability::{classify_run_stop, downtime_events, RunStopSignal, Thresholds};
use crate::counting::{
    camera_wires, detect_crossings, estimate_speed, fuse_edge_counts, write_crossings, CameraActivity,
    CrossingEvent, EdgeCountSeries, SpeedEstimate,
};
use crate::error::{Error, Result};
use crate::ingest::{GroundTruthLedger, LineTopology, SensorSample};
use crate::kpi::{AvailabilitySource, KpiContext, Report, ReportInputs};
use crate::model::{CameraId, Detection, Timestamp};
use crate::tracker::{group_frames, track_camera, write_track_dump, TrackSnapshot};

/// Detections closer than this within one camera form one frame.
pub const FRAME_EPSILON_MS: u64 = 0;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const TRACKS_JSONL: &str = "tracks.jsonl";
pub const CROSSINGS_JSONL: &str = "crossings.jsonl";
pub const RUNSTOP_CSV: &str = "runstop.csv";

pub struct ReplayInputs<'a> {
    pub topology: &'a LineTopology,
    pub detections: &'a [Detection],
    pub sensor: Option<&'a [SensorSample]>,
    /// Stop intervals stand in for the sensor when it is absent; the
    /// ledger's session length is used if the topology has none.
    pub ledger: Option<&'a GroundTruthLedger>,
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub report: Report,
    /// Confirmed-track snapshots, grouped by camera.
    pub snapshots: Vec<TrackSnapshot>,
    pub crossings: Vec<CrossingEvent>,
    pub signal: RunStopSignal,
    pub total: EdgeCountSeries,
    pub good: EdgeCountSeries,
    pub speed: SpeedEstimate,
}

fn session_ms(inputs: &ReplayInputs) -> Result<u64> {
    if let Some(s) = inputs.topology.session_duration_s {
        return Ok((s * 1000.0).round() as u64);
    }
    if let Some(l) = inputs.ledger {
        return Ok(l.session_ms);
    }
    let last_det = inputs.detections.iter().map(|d| d.time).max();
    let last_sensor = inputs.sensor.and_then(|s| s.last().map(|s| s.time));
    last_det
        .max(last_sensor)
        .map(|t| t.ms() + 1)
        .ok_or_else(|| Error::Contract("cannot infer session length from empty inputs".into()))
}

fn by_camera(detections: &[Detection]) -> BTreeMap<CameraId, Vec<Detection>> {
    let mut out: BTreeMap<CameraId, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        out.entry(d.camera).or_default().push(d.clone());
    }
    for dets in out.values_mut() {
        // stable: equal timestamps keep file order
        dets.sort_by_key(|d| d.time);
    }
    out
}

pub fn replay(inputs: &ReplayInputs) -> Result<ReplayOutput> {
    let topo = inputs.topology;
    let session_ms = session_ms(inputs)?;
    let session_end = Timestamp(session_ms);

    let (signal, source, thresholds): (RunStopSignal, AvailabilitySource, Option<Thresholds>) =
        match (inputs.sensor, inputs.ledger) {
            (Some(samples), _) => {
                let c = classify_run_stop(samples, &topo.availability)?;
                (c.signal, AvailabilitySource::Sensor, Some(c.thresholds))
            }
            (None, Some(ledger)) => (
                RunStopSignal::from_stops(&ledger.stop_intervals),
                AvailabilitySource::Ledger,
                None,
            ),
            (None, None) => return Err(Error::Contract("no availability source".into())),
        };

    let cameras = by_camera(inputs.detections);
    let mut warnings = Vec::new();
    for cam in cameras.keys() {
        if !topo.cameras().contains(cam) {
            warnings.push(format!("{cam} has detections but watches no edge; ignored"));
        }
    }

    // one tracker per camera; results are joined in camera order
    let watched: Vec<(CameraId, &Vec<Detection>)> = cameras
        .iter()
        .filter(|(c, _)| topo.cameras().contains(c))
        .map(|(c, d)| (*c, d))
        .collect();
    let per_camera: Vec<Result<(Vec<TrackSnapshot>, Vec<CrossingEvent>)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = watched
            .iter()
            .map(|&(cam, dets)| {
                scope.spawn(move || {
                    let frames = group_frames(dets, FRAME_EPSILON_MS);
                    let snaps = track_camera(cam, &frames, &topo.tracker)?;
                    let events = detect_crossings(&snaps, &camera_wires(topo, cam), topo.refractory_s);
                    Ok((snaps, events))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Contract("camera worker panicked".into()))))
            .collect()
    });
    let mut snapshots = Vec::new();
    let mut crossings = Vec::new();
    for r in per_camera {
        let (s, e) = r?;
        snapshots.extend(s);
        crossings.extend(e);
    }
    crossings.sort();
    info!(
        "tracked {} cameras: {} snapshots, {} crossings",
        watched.len(),
        snapshots.len(),
        crossings.len()
    );

    let activity = CameraActivity::from_detections(inputs.detections, &signal);
    let edge = |id: u32| {
        topo.edge(id)
            .ok_or_else(|| Error::Contract(format!("topology has no edge {id}")))
    };
    let total_edge = edge(topo.total_count_edge)?;
    let good_edge = edge(topo.good_count_edge)?;
    let total = fuse_edge_counts(total_edge, &crossings, &activity, &signal, session_ms);
    let good = fuse_edge_counts(good_edge, &crossings, &activity, &signal, session_ms);
    let speed = estimate_speed(&crossings, total_edge, session_ms);
    let downtime = downtime_events(&signal, (Timestamp::ZERO, session_end));

    let mut report = Report::build(&ReportInputs {
        total: &total,
        good: &good,
        downtime: &downtime,
        ctx: KpiContext {
            session_ms,
            planned_s: topo.planned_production_time_s,
            tau_ideal_s: topo.ideal_cycle_time_s,
        },
        availability_source: source,
        thresholds,
        speed: Some(&speed),
        sensor: inputs.sensor.unwrap_or(&[]),
    })?;
    if report.has_data_gaps() {
        warnings.push(format!("data-gap minutes: {:?}", report.session.data_gap_minutes));
    }
    if report.session.performance_anomaly {
        warnings.push("performance exceeds 1 in at least one minute; counts may be inflated or the ideal cycle time too long".into());
    }
    if let Some(reason) = &speed.absent_reason {
        warnings.push(format!("speed: {reason}"));
    }
    for w in &warnings {
        warn!("{w}");
    }
    report.warnings = warnings;

    Ok(ReplayOutput {
        report,
        snapshots,
        crossings,
        signal,
        total,
        good,
        speed,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

impl ReplayOutput {
    /// Writes the report (JSON and CSV), track dump, crossings and run/stop
    /// signal into `dir`. Contents depend only on the inputs.
    pub fn write_to(&mut self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |e: std::io::Error| Error::io(&path, e)
        };

        let path = dir.join(TRACKS_JSONL);
        let mut w = create(&path)?;
        write_track_dump(&mut w, &self.snapshots).map_err(io(&path))?;
        w.flush().map_err(io(&path))?;
        self.report.track_dump = Some(TRACKS_JSONL.to_string());

        let path = dir.join(CROSSINGS_JSONL);
        let mut w = create(&path)?;
        write_crossings(&mut w, &self.crossings).map_err(io(&path))?;
        w.flush().map_err(io(&path))?;

        let path = dir.join(RUNSTOP_CSV);
        self.signal
            .write_csv(create(&path)?, Timestamp(self.report.session.session_ms))
            .map_err(|e| Error::io(&path, e.into()))?;

        let path = dir.join(REPORT_CSV);
        self.report
            .write_csv(create(&path)?)
            .map_err(|e| Error::io(&path, e.into()))?;

        let path = dir.join(REPORT_JSON);
        let mut w = create(&path)?;
        self.report.to_json(&mut w).map_err(|e| Error::io(&path, e.into()))?;
        w.write_all(b"\n").map_err(io(&path))?;
        w.flush().map_err(io(&path))?;
        Ok(())
    }
}
