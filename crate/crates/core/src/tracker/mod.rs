//! Per-camera two-stage (confidence-split) tracking-by-detection.
//!
//! Each frame: predict every live track to the frame time, match
//! confirmed tracks to high-confidence detections, then match the
//! leftovers to low-confidence detections with a stricter IoU gate, then
//! give tentative tracks a chance at the remaining high-confidence
//! detections. Unmatched confident detections seed new tentative tracks.

pub mod kalman;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_matching;
use crate::error::{Error, Result, ValidationError};
use crate::model::{iou, BoundingBox, CameraId, Detection, Timestamp};

use kalman::{NoiseModel, StateCov, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub high_conf_threshold: f64,
    pub low_conf_threshold: f64,
    pub iou_gate_stage1: f64,
    pub iou_gate_stage2: f64,
    pub new_track_conf: f64,
    pub min_hits: u32,
    pub max_age_s: f64,
    /// px²/s on centre and size.
    pub process_noise_pos: f64,
    /// (px/s)²/s on velocity.
    pub process_noise_vel: f64,
    /// px
    pub measurement_noise_std: f64,
    /// px/s
    pub initial_velocity_std: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            high_conf_threshold: 0.5,
            low_conf_threshold: 0.1,
            iou_gate_stage1: 0.3,
            iou_gate_stage2: 0.5,
            new_track_conf: 0.6,
            min_hits: 3,
            max_age_s: 1.0,
            process_noise_pos: 25.0,
            process_noise_vel: 400.0,
            measurement_noise_std: 1.0,
            initial_velocity_std: 100.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let field = |name: &str, msg: &str| Err(ValidationError::new(format!("tracker.{name}"), msg));
        if !(0.0 <= self.low_conf_threshold
            && self.low_conf_threshold < self.high_conf_threshold
            && self.high_conf_threshold <= 1.0)
        {
            return field("low_conf_threshold", "need 0 <= low < high <= 1");
        }
        for (name, g) in [
            ("iou_gate_stage1", self.iou_gate_stage1),
            ("iou_gate_stage2", self.iou_gate_stage2),
        ] {
            if !(g > 0.0 && g <= 1.0) {
                return field(name, "gate must lie in (0, 1]");
            }
        }
        if !(0.0..=1.0).contains(&self.new_track_conf) {
            return field("new_track_conf", "must lie in [0, 1]");
        }
        if self.min_hits == 0 {
            return field("min_hits", "must be >= 1");
        }
        for (name, v) in [
            ("max_age_s", self.max_age_s),
            ("process_noise_pos", self.process_noise_pos),
            ("process_noise_vel", self.process_noise_vel),
            ("measurement_noise_std", self.measurement_noise_std),
            ("initial_velocity_std", self.initial_velocity_std),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return field(name, "must be > 0");
            }
        }
        Ok(())
    }

    fn noise(&self) -> NoiseModel {
        NoiseModel {
            process_pos: self.process_noise_pos,
            process_vel: self.process_noise_vel,
            measurement_std: self.measurement_noise_std,
            initial_velocity_std: self.initial_velocity_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub mean: StateVec,
    pub covariance: StateCov,
    pub last_update: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub camera: CameraId,
    pub state: TrackState,
    pub status: TrackStatus,
    pub hits: u32,
    pub age_since_update: u32,
}

impl Track {
    pub fn bbox(&self) -> BoundingBox {
        kalman::to_bbox(&self.state.mean)
    }
}

/// Advance a track to `to_time` under constant velocity.
pub fn predict(track: &Track, to_time: Timestamp, cfg: &TrackerConfig) -> Result<Track> {
    if to_time < track.state.last_update {
        return Err(Error::Contract(format!(
            "cannot predict track {} back from {} to {}",
            track.track_id, track.state.last_update, to_time
        )));
    }
    let dt = to_time.secs_since(track.state.last_update);
    let (mean, covariance) =
        kalman::predict(&track.state.mean, &track.state.covariance, dt, &cfg.noise());
    Ok(Track {
        state: TrackState {
            mean,
            covariance,
            last_update: track.state.last_update,
        },
        ..track.clone()
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// (track index, detection index)
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_dets: Vec<usize>,
}

fn match_subset(
    tracks: &[Track],
    dets: &[Detection],
    track_idx: &[usize],
    det_idx: &[usize],
    gate: f64,
) -> Vec<(usize, usize)> {
    if track_idx.is_empty() || det_idx.is_empty() {
        return Vec::new();
    }
    let boxes: Vec<BoundingBox> = track_idx.iter().map(|&t| tracks[t].bbox()).collect();
    let weights: Vec<Vec<f64>> = boxes
        .iter()
        .map(|tb| det_idx.iter().map(|&d| iou(tb, &dets[d].bbox)).collect())
        .collect();
    max_weight_matching(&weights, gate)
        .into_iter()
        .map(|(r, c)| (track_idx[r], det_idx[c]))
        .collect()
}

/// Associate already-predicted `tracks` with one frame's detections.
pub fn associate_frame(tracks: &[Track], dets: &[Detection], cfg: &TrackerConfig) -> Association {
    debug_assert!(dets.windows(2).all(|w| w[0].camera == w[1].camera && w[0].time == w[1].time));
    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; dets.len()];
    let mut matches = Vec::new();

    let high: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].confidence >= cfg.high_conf_threshold)
        .collect();
    let low: Vec<usize> = (0..dets.len())
        .filter(|&i| {
            dets[i].confidence >= cfg.low_conf_threshold
                && dets[i].confidence < cfg.high_conf_threshold
        })
        .collect();
    let confirmed: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].status == TrackStatus::Confirmed)
        .collect();
    let tentative: Vec<usize> = (0..tracks.len())
        .filter(|&i| tracks[i].status == TrackStatus::Tentative)
        .collect();

    let mut record = |pairs: Vec<(usize, usize)>, tu: &mut Vec<bool>, du: &mut Vec<bool>| {
        for (t, d) in pairs {
            tu[t] = true;
            du[d] = true;
            matches.push((t, d));
        }
    };

    let stage1 = match_subset(tracks, dets, &confirmed, &high, cfg.iou_gate_stage1);
    record(stage1, &mut track_used, &mut det_used);

    let left_confirmed: Vec<usize> = confirmed.iter().copied().filter(|&t| !track_used[t]).collect();
    let stage2 = match_subset(tracks, dets, &left_confirmed, &low, cfg.iou_gate_stage2);
    record(stage2, &mut track_used, &mut det_used);

    let left_high: Vec<usize> = high.iter().copied().filter(|&d| !det_used[d]).collect();
    let stage3 = match_subset(tracks, dets, &tentative, &left_high, cfg.iou_gate_stage1);
    record(stage3, &mut track_used, &mut det_used);

    matches.sort_unstable();
    Association {
        matches,
        unmatched_tracks: (0..tracks.len()).filter(|&t| !track_used[t]).collect(),
        unmatched_dets: (0..dets.len()).filter(|&d| !det_used[d]).collect(),
    }
}

/// One camera's detections at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub time: Timestamp,
    pub camera: CameraId,
    pub detections: Vec<Detection>,
}

/// Group a camera-sorted, time-sorted detection list into frames. A frame
/// absorbs detections within `epsilon_ms` of its first detection.
pub fn group_frames(dets: &[Detection], epsilon_ms: u64) -> Vec<Frame> {
    let mut frames: Vec<Frame> = Vec::new();
    for d in dets {
        match frames.last_mut() {
            Some(f) if f.camera == d.camera && d.time.ms() <= f.time.ms() + epsilon_ms => {
                f.detections.push(d.clone())
            }
            _ => frames.push(Frame {
                time: d.time,
                camera: d.camera,
                detections: vec![d.clone()],
            }),
        }
    }
    frames
}

/// Output record for a confirmed track updated in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSnapshot {
    pub time: Timestamp,
    pub camera: CameraId,
    pub track_id: u64,
    /// The detection box that updated the track this frame. The filter
    /// state only drives association, so crossing times are not biased by
    /// filter lag.
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_label: String,
    pub status: TrackStatus,
}

/// Single-camera tracker. Not reentrant; drive it with frames in time order.
#[derive(Debug, Clone)]
pub struct Tracker {
    camera: CameraId,
    cfg: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_frame: Option<Timestamp>,
}

impl Tracker {
    pub fn new(camera: CameraId, cfg: TrackerConfig) -> Self {
        Tracker {
            camera,
            cfg,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn camera(&self) -> CameraId {
        self.camera
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Total identities ever created.
    pub fn ids_issued(&self) -> u64 {
        self.next_id - 1
    }

    pub fn step(&mut self, frame: &Frame) -> Result<Vec<TrackSnapshot>> {
        if frame.camera != self.camera {
            return Err(Error::Contract(format!(
                "frame from {} fed to tracker for {}",
                frame.camera, self.camera
            )));
        }
        if let Some(prev) = self.last_frame {
            if frame.time < prev {
                return Err(Error::Contract(format!(
                    "{}: frame at {} after frame at {}",
                    self.camera, frame.time, prev
                )));
            }
        }
        self.last_frame = Some(frame.time);
        let cfg = &self.cfg;
        let noise = cfg.noise();

        let predicted: Vec<Track> = self
            .tracks
            .iter()
            .map(|t| predict(t, frame.time, cfg))
            .collect::<Result<_>>()?;
        let assoc = associate_frame(&predicted, &frame.detections, cfg);

        let mut next: Vec<Track> = Vec::with_capacity(predicted.len() + assoc.unmatched_dets.len());
        let mut matched_det: Vec<Option<usize>> = vec![None; predicted.len()];
        for &(t, d) in &assoc.matches {
            matched_det[t] = Some(d);
        }
        for (idx, (mut track, last)) in predicted.into_iter().zip(&self.tracks).enumerate() {
            match matched_det[idx] {
                Some(d) => {
                    let (mean, cov) = kalman::update(
                        &track.state.mean,
                        &track.state.covariance,
                        &frame.detections[d].bbox,
                        &noise,
                    );
                    track.state = TrackState {
                        mean,
                        covariance: cov,
                        last_update: frame.time,
                    };
                    track.hits += 1;
                    track.age_since_update = 0;
                    if track.status == TrackStatus::Tentative && track.hits >= cfg.min_hits {
                        track.status = TrackStatus::Confirmed;
                    }
                    next.push(track);
                }
                None => {
                    if track.status == TrackStatus::Tentative {
                        continue;
                    }
                    if frame.time.secs_since(last.state.last_update) > cfg.max_age_s {
                        // lost for good; ids are never reused
                        continue;
                    }
                    // keep the state at its last update: the next frame
                    // predicts over the whole gap from there
                    let mut coasting = last.clone();
                    coasting.age_since_update += 1;
                    next.push(coasting);
                }
            }
        }

        let mut spawned = Vec::new();
        for &d in &assoc.unmatched_dets {
            let det = &frame.detections[d];
            if det.confidence < cfg.new_track_conf {
                continue;
            }
            let (mean, covariance) = kalman::initiate(&det.bbox, &noise);
            let status = if cfg.min_hits <= 1 {
                TrackStatus::Confirmed
            } else {
                TrackStatus::Tentative
            };
            spawned.push((d, self.next_id));
            next.push(Track {
                track_id: self.next_id,
                camera: self.camera,
                state: TrackState {
                    mean,
                    covariance,
                    last_update: frame.time,
                },
                status,
                hits: 1,
                age_since_update: 0,
            });
            self.next_id += 1;
        }

        let det_for_track = |id: u64| -> Option<&Detection> {
            assoc
                .matches
                .iter()
                .find(|&&(t, _)| self.tracks[t].track_id == id)
                .map(|&(_, d)| &frame.detections[d])
                .or_else(|| {
                    spawned
                        .iter()
                        .find(|&&(_, sid)| sid == id)
                        .map(|&(d, _)| &frame.detections[d])
                })
        };
        let snapshots = next
            .iter()
            .filter(|t| t.status == TrackStatus::Confirmed && t.age_since_update == 0)
            .map(|t| {
                let det = det_for_track(t.track_id).expect("updated track has a detection");
                TrackSnapshot {
                    time: frame.time,
                    camera: self.camera,
                    track_id: t.track_id,
                    bbox: det.bbox,
                    confidence: det.confidence,
                    class_label: det.class_label.clone(),
                    status: t.status,
                }
            })
            .collect();
        self.tracks = next;
        Ok(snapshots)
    }
}

/// Run one tracker over a camera's frames.
pub fn track_camera(
    camera: CameraId,
    frames: &[Frame],
    cfg: &TrackerConfig,
) -> Result<Vec<TrackSnapshot>> {
    let mut tracker = Tracker::new(camera, cfg.clone());
    let mut out = Vec::new();
    for f in frames {
        out.extend(tracker.step(f)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct DumpRecord {
    t_ms: u64,
    cam: u32,
    bbox: [f64; 4],
    conf: f64,
    class: String,
    track_id: u64,
    status: TrackStatus,
}

/// Track dump: the detection line format plus `track_id` and `status`.
pub fn write_track_dump<W: Write>(mut w: W, snaps: &[TrackSnapshot]) -> std::io::Result<()> {
    for s in snaps {
        let rec = DumpRecord {
            t_ms: s.time.ms(),
            cam: s.camera.get(),
            bbox: s.bbox.as_array(),
            conf: s.confidence,
            class: s.class_label.clone(),
            track_id: s.track_id,
            status: s.status,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn parse_track_dump<R: BufRead>(reader: R) -> Result<Vec<TrackSnapshot>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DumpRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let invalid = |source| Error::InvalidRecord {
            line: line_no,
            source,
        };
        if !(0.0..=1.0).contains(&rec.conf) {
            return Err(invalid(ValidationError::new("conf", "outside [0, 1]")));
        }
        out.push(TrackSnapshot {
            time: Timestamp(rec.t_ms),
            camera: CameraId::new(rec.cam).map_err(invalid)?,
            track_id: rec.track_id,
            bbox: BoundingBox::try_from(rec.bbox).map_err(invalid)?,
            confidence: rec.conf,
            class_label: rec.class,
            status: rec.status,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
