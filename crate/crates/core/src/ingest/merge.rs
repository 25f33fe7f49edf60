//! Timestamp-ordered merge of the input streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::ingest::ledger::{GroundTruthLedger, PieceEvent, ReferencePass};
use crate::ingest::sensor::SensorSample;
use crate::model::{Detection, Timestamp};

#[derive(Debug, Clone, PartialEq)]
pub enum LedgerEvent {
    Injection(PieceEvent),
    Removal(PieceEvent),
    Exit(PieceEvent),
    LineStopped(Timestamp),
    LineStarted(Timestamp),
    ReferencePass(ReferencePass),
}

impl LedgerEvent {
    pub fn time(&self) -> Timestamp {
        match self {
            LedgerEvent::Injection(e) | LedgerEvent::Removal(e) | LedgerEvent::Exit(e) => e.t_ms,
            LedgerEvent::LineStopped(t) | LedgerEvent::LineStarted(t) => *t,
            LedgerEvent::ReferencePass(p) => p.t_ms,
        }
    }
}

/// Flatten a ledger into a time-sorted event list.
pub fn ledger_events(ledger: &GroundTruthLedger) -> Vec<LedgerEvent> {
    let mut out: Vec<LedgerEvent> = ledger
        .injections
        .iter()
        .copied()
        .map(LedgerEvent::Injection)
        .chain(ledger.removals_at_qa.iter().copied().map(LedgerEvent::Removal))
        .chain(ledger.exits.iter().copied().map(LedgerEvent::Exit))
        .chain(ledger.stop_intervals.iter().flat_map(|s| {
            [LedgerEvent::LineStopped(s.t_stop), LedgerEvent::LineStarted(s.t_start)]
        }))
        .chain(ledger.reference_passes.iter().copied().map(LedgerEvent::ReferencePass))
        .collect();
    out.sort_by_key(|e| e.time());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum MergedEvent {
    Sensor(SensorSample),
    Detection(Detection),
    Ledger(LedgerEvent),
}

impl MergedEvent {
    pub fn time(&self) -> Timestamp {
        match self {
            MergedEvent::Sensor(s) => s.time,
            MergedEvent::Detection(d) => d.time,
            MergedEvent::Ledger(l) => l.time(),
        }
    }

    /// Tie-break key at equal timestamps: sensors, then detections by
    /// camera, then ledger events.
    fn rank(&self) -> (u8, u32) {
        match self {
            MergedEvent::Sensor(_) => (0, 0),
            MergedEvent::Detection(d) => (1, d.camera.get()),
            MergedEvent::Ledger(_) => (2, 0),
        }
    }
}

struct Head {
    key: (Timestamp, (u8, u32)),
    stream: usize,
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Head {}
impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Head {
    // min-heap on (key, stream index) so equal keys keep input order
    fn cmp(&self, other: &Self) -> Ordering {
        (other.key, other.stream).cmp(&(self.key, self.stream))
    }
}

/// Stable k-way merge of individually time-sorted streams.
pub fn merge_sorted(streams: Vec<Vec<MergedEvent>>) -> Vec<MergedEvent> {
    let total = streams.iter().map(Vec::len).sum();
    let mut iters: Vec<_> = streams.into_iter().map(|s| s.into_iter().peekable()).collect();
    let mut heap = BinaryHeap::with_capacity(iters.len());
    for (i, it) in iters.iter_mut().enumerate() {
        if let Some(e) = it.peek() {
            heap.push(Head {
                key: (e.time(), e.rank()),
                stream: i,
            });
        }
    }
    let mut out = Vec::with_capacity(total);
    while let Some(Head { stream, .. }) = heap.pop() {
        let it = &mut iters[stream];
        out.push(it.next().expect("peeked"));
        if let Some(e) = it.peek() {
            heap.push(Head {
                key: (e.time(), e.rank()),
                stream,
            });
        }
    }
    out
}

/// Merge detections (grouped per camera, time-sorted within camera) with
/// time-sorted sensor samples.
pub fn merge_streams(dets: &[Detection], sensors: &[SensorSample]) -> Vec<MergedEvent> {
    let mut streams: Vec<Vec<MergedEvent>> = Vec::new();
    streams.push(sensors.iter().cloned().map(MergedEvent::Sensor).collect());
    let mut per_cam: Vec<Vec<MergedEvent>> = Vec::new();
    let mut last_cam = None;
    for d in dets {
        if last_cam != Some(d.camera) {
            per_cam.push(Vec::new());
            last_cam = Some(d.camera);
        }
        per_cam.last_mut().unwrap().push(MergedEvent::Detection(d.clone()));
    }
    streams.extend(per_cam);
    merge_sorted(streams)
}
