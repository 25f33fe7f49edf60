use super::*;
use proptest::prelude::*;

fn cam() -> CameraId {
    CameraId::new(1).unwrap()
}

fn det(t: u64, b: [f64; 4], conf: f64) -> Detection {
    Detection::new(
        Timestamp(t),
        cam(),
        BoundingBox::try_from(b).unwrap(),
        conf,
        "box",
    )
    .unwrap()
}

fn track_with(mean: [f64; 6], status: TrackStatus, id: u64) -> Track {
    let cfg = TrackerConfig::default();
    let b = BoundingBox::from_center(mean[0], mean[1], mean[2], mean[3]).unwrap();
    let (_, covariance) = kalman::initiate(&b, &cfg.noise());
    Track {
        track_id: id,
        camera: cam(),
        state: TrackState {
            mean: StateVec::from_column_slice(&mean),
            covariance,
            last_update: Timestamp(0),
        },
        status,
        hits: 3,
        age_since_update: 0,
    }
}

#[test]
fn predict_zero_dt_is_identity() {
    let t = track_with([10.0, 10.0, 4.0, 4.0, 5.0, 0.0], TrackStatus::Confirmed, 1);
    let p = predict(&t, Timestamp(0), &TrackerConfig::default()).unwrap();
    assert_eq!(p, t);
}

#[test]
fn predict_linear_motion() {
    let t = track_with([10.0, 10.0, 4.0, 4.0, 5.0, 0.0], TrackStatus::Confirmed, 1);
    let p = predict(&t, Timestamp(2000), &TrackerConfig::default()).unwrap();
    assert!((p.state.mean[0] - 20.0).abs() < 1e-12);
    assert_eq!(p.state.mean[1], 10.0);
}

#[test]
fn predict_inflates_covariance() {
    let t = track_with([10.0, 10.0, 4.0, 4.0, 5.0, 0.0], TrackStatus::Confirmed, 1);
    let p = predict(&t, Timestamp(100), &TrackerConfig::default()).unwrap();
    assert!(p.state.covariance.trace() > t.state.covariance.trace());
}

#[test]
fn predict_backwards_is_contract_error() {
    let mut t = track_with([10.0, 10.0, 4.0, 4.0, 0.0, 0.0], TrackStatus::Confirmed, 1);
    t.state.last_update = Timestamp(500);
    assert!(matches!(
        predict(&t, Timestamp(100), &TrackerConfig::default()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn associate_exact_overlap() {
    let t = track_with([5.0, 5.0, 10.0, 10.0, 0.0, 0.0], TrackStatus::Confirmed, 1);
    let a = associate_frame(&[t], &[det(0, [0.0, 0.0, 10.0, 10.0], 0.9)], &TrackerConfig::default());
    assert_eq!(a.matches, vec![(0, 0)]);
    assert!(a.unmatched_tracks.is_empty() && a.unmatched_dets.is_empty());
}

#[test]
fn associate_no_tracks() {
    let dets = vec![det(0, [0.0, 0.0, 10.0, 10.0], 0.9), det(0, [50.0, 0.0, 60.0, 10.0], 0.2)];
    let a = associate_frame(&[], &dets, &TrackerConfig::default());
    assert!(a.matches.is_empty());
    assert_eq!(a.unmatched_dets, vec![0, 1]);
}

/// Track boxes and detection boxes sized so the IoU matrix is
/// {(0.9, 0.2), (0.3, 0.8)}.
#[test]
fn associate_crossed_ious_by_brute_force() {
    // Two 1-D overlaps of unit-height boxes of width 10 at offset s give
    // IoU (10 - s) / (10 + s); solve for s.
    let offset = |target: f64| 10.0 * (1.0 - target) / (1.0 + target);
    let t0 = track_with([5.0, 0.5, 10.0, 1.0, 0.0, 0.0], TrackStatus::Confirmed, 1);
    let t1 = track_with([105.0, 0.5, 10.0, 1.0, 0.0, 0.0], TrackStatus::Confirmed, 2);
    // det0 near track0 (0.9), det1 near track1 (0.8); cross terms need
    // a second dimension, so build weights directly and check the matcher
    // used by associate_frame against exhaustive enumeration.
    let w: [[f64; 2]; 2] = [[0.9, 0.2], [0.3, 0.8]];
    let straight = w[0][0] + w[1][1];
    let swapped = w[0][1] + w[1][0];
    assert!((straight - 1.7).abs() < 1e-12 && (swapped - 0.5).abs() < 1e-12);
    let weights: Vec<Vec<f64>> = w.iter().map(|r| r.to_vec()).collect();
    assert_eq!(max_weight_matching(&weights, 0.0), vec![(0, 0), (1, 1)]);

    let d0 = det(0, [offset(0.9), 0.0, offset(0.9) + 10.0, 1.0], 0.9);
    let d1 = det(0, [100.0 + offset(0.8), 0.0, 110.0 + offset(0.8), 1.0], 0.9);
    assert!((iou(&t0.bbox(), &d0.bbox) - 0.9).abs() < 1e-9);
    assert!((iou(&t1.bbox(), &d1.bbox) - 0.8).abs() < 1e-9);
    let a = associate_frame(&[t0, t1], &[d1, d0], &TrackerConfig::default());
    assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
}

#[test]
fn low_confidence_recovers_confirmed_track_only() {
    let cfg = TrackerConfig::default();
    let confirmed = track_with([5.0, 5.0, 10.0, 10.0, 0.0, 0.0], TrackStatus::Confirmed, 1);
    let tentative = track_with([105.0, 5.0, 10.0, 10.0, 0.0, 0.0], TrackStatus::Tentative, 2);
    let dets = vec![det(0, [0.0, 0.0, 10.0, 10.0], 0.3), det(0, [100.0, 0.0, 110.0, 10.0], 0.3)];
    let a = associate_frame(&[confirmed, tentative], &dets, &cfg);
    assert_eq!(a.matches, vec![(0, 0)]);
    assert_eq!(a.unmatched_tracks, vec![1]);
    assert_eq!(a.unmatched_dets, vec![1]);
}

/// Ground-truth generator: objects moving at constant pixel velocity,
/// sampled at 30 fps, with optional dropped frames.
struct Scripted {
    starts: Vec<(f64, f64)>,
    velocity: (f64, f64),
    size: f64,
}

impl Scripted {
    fn frames(&self, n: usize, drop: &[usize]) -> Vec<(Frame, Vec<usize>)> {
        (0..n)
            .filter(|k| !drop.contains(k))
            .map(|k| {
                let t = (k as f64 * 1000.0 / 30.0).round() as u64;
                let secs = t as f64 / 1000.0;
                let dets: Vec<Detection> = self
                    .starts
                    .iter()
                    .map(|&(x, y)| {
                        let cx = x + self.velocity.0 * secs;
                        let cy = y + self.velocity.1 * secs;
                        let h = self.size / 2.0;
                        det(t, [cx - h, cy - h, cx + h, cy + h], 0.9)
                    })
                    .collect();
                let ids = (0..self.starts.len()).collect();
                (
                    Frame {
                        time: Timestamp(t),
                        camera: cam(),
                        detections: dets,
                    },
                    ids,
                )
            })
            .collect()
    }
}

/// Identity switches: per true object, number of changes in the track id
/// that matched its detection.
fn run_and_count(frames: &[(Frame, Vec<usize>)], objects: usize) -> (usize, usize) {
    let mut tracker = Tracker::new(cam(), TrackerConfig::default());
    let mut last_id: Vec<Option<u64>> = vec![None; objects];
    let mut switches = 0;
    let mut ids = std::collections::BTreeSet::new();
    for (frame, truth) in frames {
        let snaps = tracker.step(frame).unwrap();
        for s in snaps {
            // snapshot box is the filtered state; match it to the nearest truth
            let (best, _) = frame
                .detections
                .iter()
                .enumerate()
                .map(|(i, d)| (i, iou(&d.bbox, &s.bbox)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let obj = truth[best];
            ids.insert(s.track_id);
            if let Some(prev) = last_id[obj] {
                if prev != s.track_id {
                    switches += 1;
                }
            }
            last_id[obj] = Some(s.track_id);
        }
    }
    (switches, ids.len())
}

#[test]
fn single_box_constant_motion() {
    // 5 px per frame at 30 fps
    let sim = Scripted {
        starts: vec![(50.0, 50.0)],
        velocity: (150.0, 0.0),
        size: 40.0,
    };
    let frames = sim.frames(10, &[]);
    let (switches, tracks) = run_and_count(&frames, 1);
    assert_eq!(switches, 0);
    assert_eq!(tracks, 1);
}

#[test]
fn short_gap_resumes_same_id() {
    let sim = Scripted {
        starts: vec![(50.0, 50.0)],
        velocity: (150.0, 0.0),
        size: 40.0,
    };
    let frames = sim.frames(20, &[8, 9]);
    let (switches, tracks) = run_and_count(&frames, 1);
    assert_eq!(switches, 0);
    assert_eq!(tracks, 1);
}

#[test]
fn well_separated_pair() {
    let sim = Scripted {
        starts: vec![(50.0, 50.0), (50.0 + 5.0 * 40.0, 50.0)],
        velocity: (120.0, 30.0),
        size: 40.0,
    };
    let frames = sim.frames(60, &[]);
    let (switches, tracks) = run_and_count(&frames, 2);
    assert_eq!(switches, 0);
    assert_eq!(tracks, 2);
}

#[test]
fn stale_track_is_dropped_and_not_revived() {
    let mut tracker = Tracker::new(cam(), TrackerConfig::default());
    for k in 0..5u64 {
        let b = [k as f64, 0.0, k as f64 + 20.0, 20.0];
        tracker
            .step(&Frame {
                time: Timestamp(k * 33),
                camera: cam(),
                detections: vec![det(k * 33, b, 0.9)],
            })
            .unwrap();
    }
    assert_eq!(tracker.tracks().len(), 1);
    let first_id = tracker.tracks()[0].track_id;
    // reappears after more than max_age
    let snaps = tracker
        .step(&Frame {
            time: Timestamp(3000),
            camera: cam(),
            detections: vec![det(3000, [5.0, 0.0, 25.0, 20.0], 0.9)],
        })
        .unwrap();
    assert!(snaps.is_empty());
    assert_eq!(tracker.tracks().len(), 1);
    assert_ne!(tracker.tracks()[0].track_id, first_id);
}

#[test]
fn coasting_track_extrapolates_linearly() {
    // A moves 3 px per frame then vanishes; B, far away, keeps frames coming
    let mut tr = Tracker::new(cam(), TrackerConfig::default());
    let b = [900.0, 0.0, 940.0, 40.0];
    for k in 0..30u64 {
        let x = 3.0 * k as f64;
        let mut dets = vec![det(k * 33, b, 0.9)];
        if k < 10 {
            dets.insert(0, det(k * 33, [x, 0.0, x + 40.0, 40.0], 0.9));
        }
        tr.step(&Frame {
            time: Timestamp(k * 33),
            camera: cam(),
            detections: dets,
        })
        .unwrap();
    }
    let a = tr.tracks().iter().find(|t| t.age_since_update > 0).expect("A still coasting");
    let at = predict(a, Timestamp(29 * 33), &TrackerConfig::default()).unwrap();
    // 3 px per 33 ms, straight through the gap
    let want = 3.0 * 29.0 + 20.0;
    assert!((at.bbox().centroid().x - want).abs() < 2.0, "{}", at.bbox().centroid().x);
}

#[test]
fn out_of_order_frame_rejected() {
    let mut tracker = Tracker::new(cam(), TrackerConfig::default());
    let f = |t| Frame {
        time: Timestamp(t),
        camera: cam(),
        detections: vec![],
    };
    tracker.step(&f(100)).unwrap();
    assert!(matches!(tracker.step(&f(50)), Err(Error::Contract(_))));
}

#[test]
fn group_frames_by_epsilon() {
    let dets = vec![
        det(0, [0.0, 0.0, 1.0, 1.0], 0.9),
        det(1, [2.0, 0.0, 3.0, 1.0], 0.9),
        det(33, [0.0, 0.0, 1.0, 1.0], 0.9),
    ];
    let frames = group_frames(&dets, 1);
    assert_eq!(frames.len(), 2);
    assert_eq!(frames[0].detections.len(), 2);
}

#[test]
fn config_validation() {
    let mut cfg = TrackerConfig::default();
    assert!(cfg.validate().is_ok());
    cfg.low_conf_threshold = 0.7;
    assert!(cfg.validate().is_err());
    let cfg = TrackerConfig {
        iou_gate_stage2: 0.0,
        ..TrackerConfig::default()
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn track_dump_round_trip() {
    let sim = Scripted {
        starts: vec![(50.0, 50.0)],
        velocity: (150.0, 0.0),
        size: 40.0,
    };
    let frames: Vec<Frame> = sim.frames(10, &[]).into_iter().map(|(f, _)| f).collect();
    let snaps = track_camera(cam(), &frames, &TrackerConfig::default()).unwrap();
    assert!(!snaps.is_empty());
    let mut buf = Vec::new();
    write_track_dump(&mut buf, &snaps).unwrap();
    assert_eq!(parse_track_dump(&buf[..]).unwrap(), snaps);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn determinism_and_one_to_one(
        jitter in proptest::collection::vec(-3.0..3.0f64, 240),
        drops in proptest::collection::vec(0.0..1.0f64, 40),
    ) {
        let mut frames = Vec::new();
        for k in 0..40usize {
            let t = (k as f64 * 1000.0 / 30.0).round() as u64;
            let mut dets = Vec::new();
            for o in 0..3usize {
                if drops[k] < 0.1 * (o as f64 + 1.0) {
                    continue;
                }
                let j = &jitter[(k * 6 + o * 2)..];
                let cx = 50.0 + o as f64 * 200.0 + 4.0 * k as f64 + j[0];
                let cy = 100.0 + j[1];
                dets.push(det(t, [cx - 20.0, cy - 20.0, cx + 20.0, cy + 20.0], 0.55 + 0.1 * o as f64));
            }
            frames.push(Frame { time: Timestamp(t), camera: cam(), detections: dets });
        }
        let cfg = TrackerConfig::default();
        let a = track_camera(cam(), &frames, &cfg).unwrap();
        let b = track_camera(cam(), &frames, &cfg).unwrap();
        prop_assert_eq!(&a, &b);

        let mut tracker = Tracker::new(cam(), cfg);
        for f in &frames {
            let snaps = tracker.step(f).unwrap();
            let mut ids: Vec<u64> = snaps.iter().map(|s| s.track_id).collect();
            ids.dedup();
            prop_assert_eq!(ids.len(), snaps.len());
            prop_assert!(snaps.len() <= f.detections.len());
            for t in tracker.tracks() {
                let c = &t.state.covariance;
                let asym = (c - c.transpose()).abs().max();
                prop_assert!(asym <= 1e-9);
                let eig = c.symmetric_eigen();
                prop_assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-9));
                prop_assert!(t.state.mean[2] > 0.0 && t.state.mean[3] > 0.0);
            }
        }
    }
}
