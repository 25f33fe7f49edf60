//! Ground-truth ledger (JSON document).

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::ingest::{read_to_string, IngestWarnings};
use crate::model::{BoundingBox, CameraId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceEvent {
    pub t_ms: Timestamp,
    pub piece_id: u64,
}

/// A piece's centroid passing an edge's counting reference point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferencePass {
    pub t_ms: Timestamp,
    pub piece_id: u64,
    pub edge: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopInterval {
    pub t_stop: Timestamp,
    pub t_start: Timestamp,
}

impl StopInterval {
    pub fn duration_s(&self) -> f64 {
        self.t_start.secs_since(self.t_stop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub t_ms: Timestamp,
    pub cam: CameraId,
    pub boxes: Vec<BoundingBox>,
    /// Identity of each box, parallel to `boxes`, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pieces: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub session_ms: u64,
    pub injections: Vec<PieceEvent>,
    pub removals_at_qa: Vec<PieceEvent>,
    pub exits: Vec<PieceEvent>,
    pub stop_intervals: Vec<StopInterval>,
    #[serde(default)]
    pub reference_passes: Vec<ReferencePass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_frame_truth: Option<Vec<FrameTruth>>,
}

impl GroundTruthLedger {
    pub fn session_end(&self) -> Timestamp {
        Timestamp(self.session_ms)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (i, s) in self.stop_intervals.iter().enumerate() {
            if s.t_stop >= s.t_start {
                return Err(ValidationError::new(
                    "stop_intervals",
                    format!("interval {i}: t_stop must precede t_start"),
                ));
            }
            if i > 0 && self.stop_intervals[i - 1].t_start > s.t_stop {
                return Err(ValidationError::new(
                    "stop_intervals",
                    format!("interval {i} overlaps or is out of order"),
                ));
            }
        }
        let mut injected: HashMap<u64, Timestamp> = HashMap::with_capacity(self.injections.len());
        for ev in &self.injections {
            if injected.insert(ev.piece_id, ev.t_ms).is_some() {
                return Err(ValidationError::new(
                    "injections",
                    format!("piece {} injected twice", ev.piece_id),
                ));
            }
        }
        for (field, list) in [("removals_at_qa", &self.removals_at_qa), ("exits", &self.exits)] {
            for ev in list {
                match injected.get(&ev.piece_id) {
                    Some(t) if *t <= ev.t_ms => {}
                    _ => {
                        return Err(ValidationError::new(
                            field,
                            format!("piece {} was not injected before {}", ev.piece_id, ev.t_ms),
                        ))
                    }
                }
            }
        }
        for p in &self.reference_passes {
            if !injected.contains_key(&p.piece_id) {
                return Err(ValidationError::new(
                    "reference_passes",
                    format!("piece {} was never injected", p.piece_id),
                ));
            }
        }
        if let Some(frames) = &self.per_frame_truth {
            for f in frames {
                if !f.pieces.is_empty() && f.pieces.len() != f.boxes.len() {
                    return Err(ValidationError::new(
                        "per_frame_truth",
                        format!("frame at {}: pieces and boxes differ in length", f.t_ms),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Reference passes per edge, time-ordered.
    pub fn passes_by_edge(&self) -> BTreeMap<u32, Vec<Timestamp>> {
        let mut out: BTreeMap<u32, Vec<Timestamp>> = BTreeMap::new();
        for p in &self.reference_passes {
            out.entry(p.edge).or_default().push(p.t_ms);
        }
        for v in out.values_mut() {
            v.sort();
        }
        out
    }

    pub fn to_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer(w, self)
    }
}

pub fn parse_ledger(text: &str) -> Result<(GroundTruthLedger, IngestWarnings)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let known = [
        "session_ms",
        "injections",
        "removals_at_qa",
        "exits",
        "stop_intervals",
        "reference_passes",
        "per_frame_truth",
    ];
    let unknown = value
        .as_object()
        .map(|m| m.keys().filter(|k| !known.contains(&k.as_str())).count())
        .unwrap_or(0);
    let ledger: GroundTruthLedger = serde_json::from_value(value).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    ledger.validate()?;
    Ok((
        ledger,
        IngestWarnings {
            unknown_fields: unknown,
            ..Default::default()
        },
    ))
}

pub fn read_ledger(path: &Path) -> Result<GroundTruthLedger> {
    Ok(parse_ledger(&read_to_string(path)?)?.0)
}
