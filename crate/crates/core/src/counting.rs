//! Tripwire crossings, per-edge count fusion across cameras, belt speed
//! and throughput.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::availability::RunStopSignal;
use crate::error::{Error, Result};
use crate::ingest::topology::{Edge, LineTopology};
use crate::kpi::rolling_mean;
use crate::model::{crossing_fraction, segments_intersect, CameraId, CrossingSign, Detection, LineSegment2D, Point, Timestamp};
use crate::tracker::TrackSnapshot;

pub const MINUTE_MS: u64 = 60_000;

/// Index of a wire within its edge's pair.
pub const WIRE_A: u8 = 0;
pub const WIRE_B: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossingEvent {
    #[serde(rename = "t_ms")]
    pub time: Timestamp,
    #[serde(rename = "edge")]
    pub edge_id: u32,
    #[serde(rename = "cam")]
    pub camera: CameraId,
    pub track_id: u64,
    pub direction: CrossingSign,
    #[serde(rename = "wire")]
    pub wire_index: u8,
}

impl CrossingEvent {
    pub fn is_flow(&self) -> bool {
        self.direction == CrossingSign::Positive
    }
}

/// A wire as seen by one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWire {
    pub edge_id: u32,
    pub wire_index: u8,
    pub segment: LineSegment2D,
}

/// All wires a camera watches, A before B, in edge order.
pub fn camera_wires(topology: &LineTopology, camera: CameraId) -> Vec<EdgeWire> {
    let mut out = Vec::new();
    for edge in &topology.edges {
        if let Some(tw) = edge.tripwire_for(camera) {
            out.push(EdgeWire {
                edge_id: edge.id,
                wire_index: WIRE_A,
                segment: tw.wire,
            });
            if let Some(b) = tw.wire_b {
                out.push(EdgeWire {
                    edge_id: edge.id,
                    wire_index: WIRE_B,
                    segment: b,
                });
            }
        }
    }
    out
}

fn side(p: Point, wire: &LineSegment2D) -> f64 {
    let (a, b) = (wire.a(), wire.b());
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Strictly between the wire's endpoints, for a point on its line.
fn within_wire(p: Point, wire: &LineSegment2D) -> bool {
    let (a, b) = (wire.a(), wire.b());
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let u = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    u > 0.0 && u < 1.0
}

/// Crossing events for one camera's snapshots, sorted by time.
///
/// A path that reaches a wire's line at a centroid and leaves on the other
/// side crosses once, at the first on-line centroid; one that returns to
/// its own side does not cross. Same-direction repeats for one
/// (track, wire) closer than `refractory_s` are suppressed.
pub fn detect_crossings(snapshots: &[TrackSnapshot], wires: &[EdgeWire], refractory_s: f64) -> Vec<CrossingEvent> {
    let refractory_ms = (refractory_s * 1000.0).round() as u64;
    let mut by_track: BTreeMap<(CameraId, u64), Vec<(Timestamp, Point)>> = BTreeMap::new();
    for s in snapshots {
        by_track
            .entry((s.camera, s.track_id))
            .or_default()
            .push((s.time, s.bbox.centroid()));
    }

    let mut out = Vec::new();
    for ((camera, track_id), path) in by_track {
        for wire in wires {
            let mut last_emitted: [Option<Timestamp>; 2] = [None, None];
            // last off-line centroid, and the first on-line one after it
            let mut anchor: Option<(Timestamp, Point)> = None;
            let mut touch: Option<(Timestamp, Point)> = None;
            for &(t, p) in &path {
                let s = side(p, &wire.segment);
                if s == 0.0 {
                    if anchor.is_some() && touch.is_none() {
                        touch = Some((t, p));
                    }
                    continue;
                }
                let sign = if s > 0.0 {
                    CrossingSign::Positive
                } else {
                    CrossingSign::Negative
                };
                let hit = match (anchor, touch.take()) {
                    (Some((_, p0)), Some((tt, pt))) => {
                        (side(p0, &wire.segment) * s < 0.0 && within_wire(pt, &wire.segment)).then_some((tt, sign))
                    }
                    (Some((t0, p0)), None) => segments_intersect(p0, p, &wire.segment).map(|direction| {
                        let u = crossing_fraction(p0, p, &wire.segment);
                        (Timestamp(t0.ms() + (u * (t.ms() - t0.ms()) as f64).round() as u64), direction)
                    }),
                    (None, _) => None,
                };
                if let Some((time, direction)) = hit {
                    let slot = &mut last_emitted[(direction == CrossingSign::Negative) as usize];
                    let suppressed = slot.is_some_and(|prev| time.ms() < prev.ms() + refractory_ms);
                    if !suppressed {
                        *slot = Some(time);
                        out.push(CrossingEvent {
                            time,
                            edge_id: wire.edge_id,
                            camera,
                            track_id,
                            direction,
                            wire_index: wire.wire_index,
                        });
                    }
                }
                anchor = Some((t, p));
            }
        }
    }
    out.sort();
    out
}

pub fn write_crossings<W: Write>(mut w: W, events: &[CrossingEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_crossings<R: BufRead>(reader: R) -> Result<Vec<CrossingEvent>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

/// Minutes in which each camera produced a detection while the line ran.
#[derive(Debug, Clone, Default)]
pub struct CameraActivity {
    live: BTreeSet<(CameraId, usize)>,
}

impl CameraActivity {
    pub fn from_detections(detections: &[Detection], signal: &RunStopSignal) -> Self {
        let mut live = BTreeSet::new();
        for d in detections {
            if signal.state_at(d.time) == crate::availability::RunState::Running {
                live.insert((d.camera, d.time.minute_index()));
            }
        }
        CameraActivity { live }
    }

    pub fn is_live(&self, camera: CameraId, minute: usize) -> bool {
        self.live.contains(&(camera, minute))
    }
}

/// Number of minute bins covering a session; the last may be partial.
pub fn minute_count(session_ms: u64) -> usize {
    session_ms.div_ceil(MINUTE_MS) as usize
}

/// `[start, end)` of a minute bin, clipped to the session.
pub fn minute_bounds(minute: usize, session_ms: u64) -> (Timestamp, Timestamp) {
    let start = minute as u64 * MINUTE_MS;
    (Timestamp(start), Timestamp((start + MINUTE_MS).min(session_ms)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteCount {
    pub minute: usize,
    /// `None` marks a data gap: the line ran but no camera watching the
    /// edge was live.
    pub count: Option<u64>,
    pub cumulative: u64,
    pub active_camera: Option<CameraId>,
    pub duration_s: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCountSeries {
    pub edge_id: u32,
    pub minutes: Vec<MinuteCount>,
}

impl EdgeCountSeries {
    pub fn gap_minutes(&self) -> Vec<usize> {
        self.minutes
            .iter()
            .filter(|m| m.count.is_none())
            .map(|m| m.minute)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.minutes.last().map_or(0, |m| m.cumulative)
    }

    /// Flow-direction count within minutes `[from, to)`, gaps as zero.
    pub fn count_between(&self, from: usize, to: usize) -> u64 {
        self.minutes
            .iter()
            .filter(|m| m.minute >= from && m.minute < to)
            .filter_map(|m| m.count)
            .sum()
    }

    /// Series from known per-minute counts, e.g. a laser counter or a ledger.
    pub fn from_counts(edge_id: u32, counts: &[Option<u64>], session_ms: u64) -> Self {
        let mut cumulative = 0;
        let minutes = counts
            .iter()
            .enumerate()
            .map(|(minute, &count)| {
                cumulative += count.unwrap_or(0);
                let (start, end) = minute_bounds(minute, session_ms);
                MinuteCount {
                    minute,
                    count,
                    cumulative,
                    active_camera: None,
                    duration_s: end.secs_since(start),
                    partial: end.ms() - start.ms() < MINUTE_MS,
                }
            })
            .collect();
        EdgeCountSeries { edge_id, minutes }
    }
}

/// Per minute, count the flow crossings of the edge's A wire seen by the
/// highest-priority live camera. A minute with no running time takes the
/// preferred camera. Data-gap minutes carry the cumulative forward.
pub fn fuse_edge_counts(
    edge: &Edge,
    events: &[CrossingEvent],
    activity: &CameraActivity,
    signal: &RunStopSignal,
    session_ms: u64,
) -> EdgeCountSeries {
    let mut per_camera: HashMap<(CameraId, usize), u64> = HashMap::new();
    for e in events {
        if e.edge_id == edge.id && e.wire_index == WIRE_A && e.is_flow() && e.time.ms() < session_ms {
            *per_camera.entry((e.camera, e.time.minute_index())).or_default() += 1;
        }
    }
    let mut cumulative = 0;
    let minutes = (0..minute_count(session_ms))
        .map(|minute| {
            let (start, end) = minute_bounds(minute, session_ms);
            let stopped = signal.running_ms(start, end) == 0;
            let camera = if stopped {
                edge.tripwires.first().map(|t| t.camera)
            } else {
                edge.tripwires
                    .iter()
                    .map(|t| t.camera)
                    .find(|&c| activity.is_live(c, minute))
            };
            let count = camera.map(|c| per_camera.get(&(c, minute)).copied().unwrap_or(0));
            cumulative += count.unwrap_or(0);
            MinuteCount {
                minute,
                count,
                cumulative,
                active_camera: camera,
                duration_s: end.secs_since(start),
                partial: end.ms() - start.ms() < MINUTE_MS,
            }
        })
        .collect();
    EdgeCountSeries {
        edge_id: edge.id,
        minutes,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub edge_id: u32,
    /// Median belt speed per minute, m/s.
    pub median_mps: Vec<Option<f64>>,
    pub samples: Vec<usize>,
    pub absent_reason: Option<String>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Belt speed from A-then-B flow crossings of the same track. A transit
/// counts towards the minute in which it completes.
pub fn estimate_speed(events: &[CrossingEvent], edge: &Edge, session_ms: u64) -> SpeedEstimate {
    let n = minute_count(session_ms);
    let absent = |reason: &str| SpeedEstimate {
        edge_id: edge.id,
        median_mps: vec![None; n],
        samples: vec![0; n],
        absent_reason: Some(reason.to_string()),
    };
    let paired: BTreeMap<CameraId, f64> = edge
        .tripwires
        .iter()
        .filter_map(|t| match (t.wire_b, t.gap_m) {
            (Some(_), Some(gap)) if gap > 0.0 => Some((t.camera, gap)),
            _ => None,
        })
        .collect();
    if paired.is_empty() {
        return absent("edge has no second wire with a positive gap");
    }

    let mut pending: HashMap<(CameraId, u64), Timestamp> = HashMap::new();
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n];
    for e in events {
        if e.edge_id != edge.id || !e.is_flow() {
            continue;
        }
        let Some(&gap) = paired.get(&e.camera) else { continue };
        let key = (e.camera, e.track_id);
        if e.wire_index == WIRE_A {
            pending.insert(key, e.time);
        } else if let Some(start) = pending.remove(&key) {
            let dt = e.time.secs_since(start);
            let minute = e.time.minute_index();
            if dt > 0.0 && minute < n {
                buckets[minute].push(gap / dt);
            }
        }
    }
    SpeedEstimate {
        edge_id: edge.id,
        samples: buckets.iter().map(Vec::len).collect(),
        median_mps: buckets.iter_mut().map(|b| median(b)).collect(),
        absent_reason: None,
    }
}

/// Pieces per minute, scaled for a partial final minute, optionally
/// smoothed by a centred `window`-point mean. Gap minutes are absent.
pub fn throughput(series: &EdgeCountSeries, window: usize) -> Vec<Option<f64>> {
    let raw: Vec<Option<f64>> = series
        .minutes
        .iter()
        .map(|m| m.count.map(|c| c as f64 * 60.0 / m.duration_s))
        .collect();
    if window <= 1 {
        return raw;
    }
    let smoothed = rolling_mean(&raw, window);
    // smoothing must not invent values for gap minutes
    smoothed
        .into_iter()
        .zip(&raw)
        .map(|(s, r)| r.and(s))
        .collect()
}
