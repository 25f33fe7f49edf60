//! Compare engine output with a ground-truth ledger.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::report::{AvailabilitySource, Report, ReportInputs};
use super::{compute_kpis, KpiContext, KpiSeries};
use crate::assignment::max_weight_matching;
use crate::availability::{DowntimeEvent, RunState, RunStopSignal};
use crate::counting::{minute_count, EdgeCountSeries, MINUTE_MS};
use crate::error::{Error, Result};
use crate::ingest::ledger::FrameTruth;
use crate::ingest::GroundTruthLedger;
use crate::model::{iou, BoundingBox, CameraId, Timestamp};
use crate::tracker::{TrackSnapshot, TrackStatus};

/// A prediction matches a truth box at this IoU or above.
pub const MATCH_IOU: f64 = 0.5;

/// Per-minute true counts of one edge from the ledger's reference passes.
pub fn ledger_count_series(ledger: &GroundTruthLedger, edge: u32) -> EdgeCountSeries {
    let n = minute_count(ledger.session_ms);
    let mut counts = vec![0u64; n];
    for p in &ledger.reference_passes {
        if p.edge == edge && p.t_ms.ms() < ledger.session_ms {
            counts[p.t_ms.minute_index()] += 1;
        }
    }
    let counts: Vec<Option<u64>> = counts.into_iter().map(Some).collect();
    EdgeCountSeries::from_counts(edge, &counts, ledger.session_ms)
}

/// Ledger stop intervals clipped to the session.
pub fn ledger_downtime(ledger: &GroundTruthLedger) -> Vec<DowntimeEvent> {
    ledger
        .stop_intervals
        .iter()
        .filter(|s| s.t_stop.ms() < ledger.session_ms)
        .map(|s| DowntimeEvent {
            t_stop: s.t_stop,
            t_start: s.t_start.min(ledger.session_end()),
        })
        .collect()
}

pub fn ledger_kpis(ledger: &GroundTruthLedger, total_edge: u32, good_edge: u32, ctx: &KpiContext) -> Result<KpiSeries> {
    compute_kpis(
        &ledger_count_series(ledger, total_edge),
        &ledger_count_series(ledger, good_edge),
        &ledger_downtime(ledger),
        ctx,
    )
}

/// A report built from the ledger alone, as if the engine were perfect.
pub fn report_from_ledger(ledger: &GroundTruthLedger, total_edge: u32, good_edge: u32, ctx: &KpiContext) -> Result<Report> {
    let total = ledger_count_series(ledger, total_edge);
    let good = ledger_count_series(ledger, good_edge);
    let downtime = ledger_downtime(ledger);
    Report::build(&ReportInputs {
        total: &total,
        good: &good,
        downtime: &downtime,
        ctx: *ctx,
        availability_source: AvailabilitySource::Ledger,
        thresholds: None,
        speed: None,
        sensor: &[],
    })
}

/// Truth frames recast as confirmed-track snapshots, so the ledger can be
/// scored against itself.
pub fn snapshots_from_truth(frames: &[FrameTruth]) -> Vec<TrackSnapshot> {
    frames
        .iter()
        .flat_map(|f| {
            f.boxes.iter().enumerate().map(move |(i, b)| TrackSnapshot {
                time: f.t_ms,
                camera: f.cam,
                track_id: f.pieces.get(i).copied().unwrap_or(i as u64),
                bbox: *b,
                confidence: 1.0,
                class_label: "box".into(),
                status: TrackStatus::Confirmed,
            })
        })
        .collect()
}

/// Percentage of truth boxes matched one-to-one at IoU ≥ 0.5. A frame
/// with no truth boxes scores 100 when nothing was predicted, else 0.
pub fn frame_accuracy(truth: &[BoundingBox], predicted: &[BoundingBox]) -> f64 {
    if truth.is_empty() {
        return if predicted.is_empty() { 100.0 } else { 0.0 };
    }
    let weights: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| predicted.iter().map(|p| iou(t, p)).collect())
        .collect();
    let matched = max_weight_matching(&weights, MATCH_IOU).len();
    100.0 * matched as f64 / truth.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMinute {
    pub minute: usize,
    pub pred_cum_total: u64,
    pub truth_cum_total: u64,
    pub count_error_pct: f64,
    pub pred_cum_good: u64,
    pub truth_cum_good: u64,
    pub good_count_error_pct: f64,
    /// Absent for minutes without running frames.
    pub accuracy_pct: Option<f64>,
    pub pred_oee: Option<f64>,
    pub truth_oee: Option<f64>,
    pub oee_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSeries {
    pub minutes: Vec<EvalMinute>,
    pub mean_count_error_pct: f64,
    pub mean_good_count_error_pct: f64,
    pub mean_oee_error_pct: Option<f64>,
    pub mean_accuracy_pct: Option<f64>,
    pub max_accuracy_pct: Option<f64>,
    pub accuracy_absent_reason: Option<String>,
    /// Mean per-frame accuracy of each camera over running frames.
    pub accuracy_by_camera: BTreeMap<u32, f64>,
    pub session_pred_oee: Option<f64>,
    pub session_truth_oee: Option<f64>,
    pub session_oee_error_pct: Option<f64>,
}

fn count_error_pct(pred: u64, truth: u64) -> f64 {
    100.0 * pred.abs_diff(truth) as f64 / truth.max(1) as f64
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Score `report` against `truth`. Per-frame accuracy needs both the
/// ledger's frame truth and `predictions`; otherwise it is absent with a
/// reason.
pub fn evaluate(report: &Report, truth: &GroundTruthLedger, predictions: Option<&[TrackSnapshot]>) -> Result<EvalSeries> {
    let session = &report.session;
    if session.session_ms.abs_diff(truth.session_ms) > MINUTE_MS {
        return Err(Error::Contract(format!(
            "session mismatch: report covers {} ms, ledger {} ms",
            session.session_ms, truth.session_ms
        )));
    }
    let ctx = KpiContext {
        session_ms: truth.session_ms,
        planned_s: Some(session.t_planned_s),
        tau_ideal_s: session.tau_ideal_s,
    };
    let truth_total = ledger_count_series(truth, session.total_count_edge);
    let truth_good = ledger_count_series(truth, session.good_count_edge);
    let truth_kpis = compute_kpis(&truth_total, &truth_good, &ledger_downtime(truth), &ctx)?;

    let signal = RunStopSignal::from_stops(&truth.stop_intervals);
    let (accuracy, by_camera, absent_reason) = match (&truth.per_frame_truth, predictions) {
        (None, _) => (None, BTreeMap::new(), Some("ledger has no per-frame truth".to_string())),
        (Some(_), None) => (None, BTreeMap::new(), Some("no track predictions supplied".to_string())),
        (Some(frames), Some(preds)) => {
            let (per_minute, by_camera) = accuracy_by_minute(report, frames, preds, &signal);
            (Some(per_minute), by_camera, None)
        }
    };

    let n = report.minutes.len().min(truth_kpis.minutes.len());
    let minutes: Vec<EvalMinute> = (0..n)
        .map(|m| {
            let row = &report.minutes[m];
            let pred_oee = row.oee;
            let truth_oee = truth_kpis.minutes[m].oee;
            EvalMinute {
                minute: m,
                pred_cum_total: row.cum_total,
                truth_cum_total: truth_total.minutes[m].cumulative,
                count_error_pct: count_error_pct(row.cum_total, truth_total.minutes[m].cumulative),
                pred_cum_good: row.cum_good,
                truth_cum_good: truth_good.minutes[m].cumulative,
                good_count_error_pct: count_error_pct(row.cum_good, truth_good.minutes[m].cumulative),
                accuracy_pct: accuracy.as_ref().and_then(|a| a.get(m).copied().flatten()),
                pred_oee,
                truth_oee,
                oee_error_pct: pred_oee.zip(truth_oee).map(|(p, t)| 100.0 * (p - t).abs()),
            }
        })
        .collect();

    let session_pred_oee = session.oee;
    let session_truth_oee = truth_kpis.session.oee;
    Ok(EvalSeries {
        mean_count_error_pct: mean(minutes.iter().map(|m| m.count_error_pct)).unwrap_or(0.0),
        mean_good_count_error_pct: mean(minutes.iter().map(|m| m.good_count_error_pct)).unwrap_or(0.0),
        mean_oee_error_pct: mean(minutes.iter().filter_map(|m| m.oee_error_pct)),
        mean_accuracy_pct: mean(minutes.iter().filter_map(|m| m.accuracy_pct)),
        max_accuracy_pct: minutes.iter().filter_map(|m| m.accuracy_pct).reduce(f64::max),
        accuracy_absent_reason: absent_reason,
        accuracy_by_camera: by_camera,
        session_pred_oee,
        session_truth_oee,
        session_oee_error_pct: session_pred_oee
            .zip(session_truth_oee)
            .map(|(p, t)| 100.0 * (p - t).abs()),
        minutes,
    })
}

type FrameKey = (CameraId, Timestamp);

/// Per-minute mean accuracy over running frames of the minute's active
/// cameras (all cameras when the report names none), plus per-camera means.
fn accuracy_by_minute(
    report: &Report,
    frames: &[FrameTruth],
    predictions: &[TrackSnapshot],
    signal: &RunStopSignal,
) -> (Vec<Option<f64>>, BTreeMap<u32, f64>) {
    let mut predicted: HashMap<FrameKey, Vec<BoundingBox>> = HashMap::new();
    for p in predictions {
        predicted.entry((p.camera, p.time)).or_default().push(p.bbox);
    }
    let mut per_minute: Vec<(f64, usize)> = vec![(0.0, 0); report.minutes.len()];
    let mut per_camera: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for f in frames {
        if signal.state_at(f.t_ms) != RunState::Running {
            continue;
        }
        let preds = predicted.get(&(f.cam, f.t_ms)).map_or(&[][..], Vec::as_slice);
        let acc = frame_accuracy(&f.boxes, preds);
        let cam = per_camera.entry(f.cam.get()).or_default();
        cam.0 += acc;
        cam.1 += 1;
        let m = f.t_ms.minute_index();
        let Some(row) = report.minutes.get(m) else { continue };
        let active: Vec<u32> = [row.camera_total, row.camera_good].into_iter().flatten().collect();
        if active.is_empty() || active.contains(&f.cam.get()) {
            per_minute[m].0 += acc;
            per_minute[m].1 += 1;
        }
    }
    (
        per_minute
            .into_iter()
            .map(|(s, n)| (n > 0).then(|| s / n as f64))
            .collect(),
        per_camera
            .into_iter()
            .map(|(c, (s, n))| (c, s / n as f64))
            .collect(),
    )
}

impl EvalSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for m in &self.minutes {
            wtr.serialize(m)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
        format!(
            "mean count error {:.2}%, mean OEE error {}, session OEE error {}, max accuracy {}",
            self.mean_count_error_pct,
            opt(self.mean_oee_error_pct),
            opt(self.session_oee_error_pct),
            opt(self.max_accuracy_pct)
        )
    }

    /// True when every error column is exactly zero.
    pub fn is_exact(&self) -> bool {
        self.minutes.iter().all(|m| {
            m.count_error_pct == 0.0
                && m.good_count_error_pct == 0.0
                && m.oee_error_pct.unwrap_or(0.0) == 0.0
                && m.pred_oee.is_some() == m.truth_oee.is_some()
        })
    }
}
