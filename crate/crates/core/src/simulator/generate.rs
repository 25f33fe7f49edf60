//! Scenario → detections, sensor stream and ledger.
//!
//! Random draws come from one ChaCha8 stream seeded with `rng_seed`, in
//! this order: stochastic stops; one defect draw per piece in injection
//! order; per camera (ascending id), per frame, per emitted box (leading
//! piece first) a miss draw then, if kept, four jitter draws and a
//! confidence draw, followed by the frame's false-positive count and, per
//! false positive, two position draws and a confidence draw; finally per
//! sensor sample one acceleration, three gyro and three magnetometer draws.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use serde::Serialize;

use super::{CameraSpec, Scenario};
use crate::error::{Error, Result};
use crate::ingest::ledger::{FrameTruth, PieceEvent, ReferencePass, StopInterval};
use crate::ingest::topology::{Edge, LineTopology, Node, Tripwire};
use crate::ingest::{write_detections, write_sensor_csv, GroundTruthLedger, SensorSample};
use crate::kpi::evaluate::ledger_kpis;
use crate::kpi::{KpiContext, KpiSeries};
use crate::model::{BoundingBox, CameraId, Detection, LineSegment2D, Point, Timestamp};

const GRAVITY: f64 = 9.81;
const SIGMA_RUN: f64 = 0.5;
const SIGMA_STOP: f64 = 0.02;
const CLASS_LABEL: &str = "box";

/// Wall clock ↔ running time (time the belt has been moving), in ms.
struct Clock {
    stops: Vec<(f64, f64)>,
}

impl Clock {
    fn running(&self, t: f64) -> f64 {
        let stopped: f64 = self
            .stops
            .iter()
            .map(|&(a, b)| (t.min(b) - a).max(0.0))
            .sum();
        t - stopped
    }

    /// Earliest wall time at which the running time reaches `r`.
    fn wall(&self, r: f64) -> f64 {
        let mut t = r;
        for &(a, b) in &self.stops {
            if a < t {
                t += b - a;
            } else {
                break;
            }
        }
        t
    }

    fn is_stopped(&self, t: f64) -> bool {
        self.stops.iter().any(|&(a, b)| a <= t && t < b)
    }
}

#[derive(Debug, Clone)]
struct Piece {
    id: u64,
    /// Running time of injection, ms.
    inject_r: f64,
    defective: bool,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub scenario: Scenario,
    /// All cameras, grouped by camera then time-ordered.
    pub detections: Vec<Detection>,
    pub sensor: Vec<SensorSample>,
    pub ledger: GroundTruthLedger,
    pub topology: LineTopology,
    pub true_kpis: KpiSeries,
}

#[derive(Serialize)]
struct TrueKpiFile<'a> {
    ideal_cycle_time_s: f64,
    kpis: &'a KpiSeries,
}

impl SimOutput {
    pub fn detections_for(&self, camera: CameraId) -> &[Detection] {
        let lo = self.detections.partition_point(|d| d.camera < camera);
        let hi = self.detections.partition_point(|d| d.camera <= camera);
        &self.detections[lo..hi]
    }

    /// Writes `detections/cam<N>.jsonl`, `sensor.csv`, `ledger.json`,
    /// `topology.toml` and `true_kpis.json` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let det_dir = dir.join("detections");
        fs::create_dir_all(&det_dir).map_err(|e| Error::io(&det_dir, e))?;
        for cam in &self.scenario.cameras {
            let id = CameraId::new(cam.id)?;
            let path = det_dir.join(format!("cam{}.jsonl", cam.id));
            let mut w = create(&path)?;
            write_detections(&mut w, self.detections_for(id)).map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("sensor.csv");
        write_sensor_csv(create(&path)?, &self.sensor).map_err(|e| Error::io(&path, e.into()))?;
        let path = dir.join("ledger.json");
        let mut w = create(&path)?;
        self.ledger.to_json(&mut w).map_err(|e| Error::io(&path, e.into()))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = dir.join("topology.toml");
        fs::write(&path, self.topology.to_toml_string()).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("true_kpis.json");
        let mut w = create(&path)?;
        let file = TrueKpiFile {
            ideal_cycle_time_s: self.scenario.ideal_cycle_time_s,
            kpis: &self.true_kpis,
        };
        serde_json::to_writer_pretty(&mut w, &file).map_err(|e| Error::io(&path, e.into()))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let l = &self.ledger;
        let in_transit = l.injections.len() - l.exits.len() - l.removals_at_qa.len();
        let downtime: f64 = l.stop_intervals.iter().map(StopInterval::duration_s).sum();
        format!(
            "simulated {:.1} min: {} injected, {} exited, {} removed at QA, {} in transit; {} stops ({:.1} s down); {} cameras, {} detections, {} sensor samples",
            l.session_ms as f64 / 60_000.0,
            l.injections.len(),
            l.exits.len(),
            l.removals_at_qa.len(),
            in_transit,
            l.stop_intervals.len(),
            downtime,
            self.scenario.cameras.len(),
            self.detections.len(),
            self.sensor.len()
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// KPIs of the true events, through the same code path the engine uses.
pub fn true_kpis(ledger: &GroundTruthLedger, scenario: &Scenario) -> Result<KpiSeries> {
    ledger_kpis(
        ledger,
        1,
        2,
        &KpiContext {
            session_ms: ledger.session_ms,
            planned_s: None,
            tau_ideal_s: scenario.ideal_cycle_time_s,
        },
    )
}

fn effective_stops(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Vec<(u64, u64)> {
    let end = scenario.duration_ms();
    let to_ms = |s: f64| ((s * 1000.0).round() as u64).min(end);
    let mut stops: Vec<(u64, u64)> = scenario
        .stops
        .scripted
        .iter()
        .map(|&[a, b]| (to_ms(a), to_ms(b)))
        .collect();
    if let Some(st) = &scenario.stops.stochastic {
        let gap = Exp::new(1.0 / st.mean_interval_s).expect("validated rate");
        let len = Exp::new(1.0 / st.mean_duration_s).expect("validated rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(rng);
            let d: f64 = len.sample(rng);
            if t >= scenario.duration_s {
                break;
            }
            stops.push((to_ms(t), to_ms(t + d)));
            t += d;
        }
    }
    stops.retain(|&(a, b)| a < b);
    stops.sort_unstable();
    // union of scripted and stochastic stops
    let mut merged: Vec<(u64, u64)> = Vec::with_capacity(stops.len());
    for (a, b) in stops {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Running-time injection schedule, ms.
fn injection_times(scenario: &Scenario, clock: &Clock) -> Vec<f64> {
    let end_wall = scenario
        .injection_stop_s
        .unwrap_or(scenario.duration_s)
        .min(scenario.duration_s)
        * 1000.0;
    let end_r = clock.running(end_wall);
    let dense: Vec<(f64, f64, &super::DenseWindow)> = scenario
        .dense_windows
        .iter()
        .map(|w| (clock.running(w.start_s * 1000.0), clock.running(w.end_s * 1000.0), w))
        .collect();
    let v = scenario.belt_speed_mps;
    let mut out = Vec::new();
    let mut r = 0.0;
    while r < end_r {
        if let Some(&(_, _, w)) = dense.iter().find(|(lo, hi, _)| *lo <= r && r < *hi) {
            let step = w.intra_spacing_m / v * 1000.0;
            for k in 0..w.burst_size {
                let t = r + k as f64 * step;
                if t < end_r {
                    out.push(t);
                }
            }
            r += w.period_s * 1000.0;
        } else {
            out.push(r);
            r += scenario.injection_period_s * 1000.0;
        }
    }
    out
}

fn round_ms(t: f64) -> Timestamp {
    Timestamp(t.round().max(0.0) as u64)
}

struct Line<'a> {
    scenario: &'a Scenario,
    clock: Clock,
    pieces: Vec<Piece>,
}

impl Line<'_> {
    /// ms of running time to travel `m` metres.
    fn travel_ms(&self, m: f64) -> f64 {
        m / self.scenario.belt_speed_mps * 1000.0
    }

    fn limit_m(&self, p: &Piece) -> f64 {
        if p.defective {
            self.scenario.qa_position_m
        } else {
            self.scenario.exit_position_m
        }
    }

    fn pass_wall(&self, p: &Piece, position_m: f64) -> f64 {
        self.clock.wall(p.inject_r + self.travel_ms(position_m))
    }

    /// Pieces on the belt inside `[lo_m, hi_m]` at wall time `t`, leading
    /// piece first, with their positions.
    fn visible(&self, t: f64, lo_m: f64, hi_m: f64) -> Vec<(&Piece, f64)> {
        let r = self.clock.running(t);
        let v = self.scenario.belt_speed_mps / 1000.0;
        // positions are v·(r − inject_r); pieces are sorted by inject_r
        let first = self.pieces.partition_point(|p| v * (r - p.inject_r) > hi_m);
        let mut out = Vec::new();
        for p in &self.pieces[first..] {
            let s = v * (r - p.inject_r);
            if s < lo_m || s < 0.0 {
                break;
            }
            if s < self.limit_m(p) {
                out.push((p, s));
            }
        }
        out
    }
}

fn camera_box(cam: &CameraSpec, s: f64) -> BoundingBox {
    BoundingBox::from_center(cam.x_px(s), cam.origin_px[1], cam.box_px[0], cam.box_px[1])
        .expect("camera projection is finite")
}

fn wire_segment(cam: &CameraSpec, s: f64) -> LineSegment2D {
    // a→b points against the image y axis so that belt motion (+x) is +1
    let x = cam.x_px(s);
    let y = cam.origin_px[1];
    let h = cam.box_px[1];
    LineSegment2D::new(Point::new(x, y + h), Point::new(x, y - h)).expect("wire endpoints differ")
}

/// Greedy left-to-right pairing of boxes whose gap is under the threshold.
fn merge_boxes(boxes: Vec<BoundingBox>, gap_fraction: Option<f64>) -> Vec<BoundingBox> {
    let Some(frac) = gap_fraction else { return boxes };
    let mut out = Vec::with_capacity(boxes.len());
    let mut i = 0;
    while i < boxes.len() {
        if i + 1 < boxes.len() {
            let (lead, follow) = (&boxes[i], &boxes[i + 1]);
            let gap = lead.x_min() - follow.x_max();
            if gap < frac * lead.width() {
                out.push(lead.union(follow));
                i += 2;
                continue;
            }
        }
        out.push(boxes[i]);
        i += 1;
    }
    out
}

fn topology_of(scenario: &Scenario) -> Result<LineTopology> {
    let mut edges = Vec::new();
    for (edge_id, [wa, wb]) in [(1u32, scenario.edge1_wires_m), (2, scenario.edge2_wires_m)] {
        let mut tripwires: Vec<Tripwire> = scenario
            .cameras
            .iter()
            .flat_map(|cam| {
                cam.watch.iter().filter(|w| w.edge == edge_id).map(move |w| {
                    Ok(Tripwire {
                        camera: CameraId::new(cam.id)?,
                        priority: w.priority,
                        wire: wire_segment(cam, wa),
                        wire_b: Some(wire_segment(cam, wb)),
                        gap_m: Some(wb - wa),
                    })
                })
            })
            .collect::<Result<_>>()?;
        tripwires.sort_by_key(|t| t.priority);
        edges.push(Edge {
            id: edge_id,
            from: edge_id,
            to: edge_id + 1,
            tripwires,
        });
    }
    let node = |id, name: &str| Node {
        id,
        name: name.to_string(),
    };
    Ok(LineTopology {
        nodes: vec![node(1, "Start"), node(2, "QA"), node(3, "Exit")],
        edges,
        ideal_cycle_time_s: scenario.ideal_cycle_time_s,
        planned_production_time_s: None,
        session_duration_s: Some(scenario.duration_s),
        refractory_s: scenario.refractory_s,
        total_count_edge: 1,
        good_count_edge: 2,
        tracker: scenario.tracker.clone(),
        availability: scenario.availability.clone(),
    })
}

pub fn simulate(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
    let end_ms = scenario.duration_ms();
    let end = end_ms as f64;

    let stops = effective_stops(scenario, &mut rng);
    let clock = Clock {
        stops: stops.iter().map(|&(a, b)| (a as f64, b as f64)).collect(),
    };
    let pieces: Vec<Piece> = injection_times(scenario, &clock)
        .into_iter()
        .enumerate()
        .map(|(i, inject_r)| Piece {
            id: i as u64 + 1,
            inject_r,
            defective: rng.random::<f64>() < scenario.defect_probability,
        })
        .collect();
    let line = Line {
        scenario,
        clock,
        pieces,
    };

    // ledger
    let mut ledger = GroundTruthLedger {
        session_ms: end_ms,
        stop_intervals: stops
            .iter()
            .map(|&(a, b)| StopInterval {
                t_stop: Timestamp(a),
                t_start: Timestamp(b),
            })
            .collect(),
        ..Default::default()
    };
    let wires = [(1u32, scenario.edge1_wires_m[0]), (2, scenario.edge2_wires_m[0])];
    for p in &line.pieces {
        ledger.injections.push(PieceEvent {
            t_ms: round_ms(line.clock.wall(p.inject_r)),
            piece_id: p.id,
        });
        for &(edge, at) in &wires {
            if at < line.limit_m(p) {
                let t = line.pass_wall(p, at);
                if t < end {
                    ledger.reference_passes.push(ReferencePass {
                        t_ms: round_ms(t),
                        piece_id: p.id,
                        edge,
                    });
                }
            }
        }
        let leave = line.pass_wall(p, line.limit_m(p));
        if leave < end {
            let ev = PieceEvent {
                t_ms: round_ms(leave),
                piece_id: p.id,
            };
            if p.defective {
                ledger.removals_at_qa.push(ev);
            } else {
                ledger.exits.push(ev);
            }
        }
    }
    ledger.removals_at_qa.sort_by_key(|e| (e.t_ms, e.piece_id));
    ledger.exits.sort_by_key(|e| (e.t_ms, e.piece_id));
    ledger.reference_passes.sort_by_key(|e| (e.t_ms, e.edge, e.piece_id));

    // cameras
    let noise = &scenario.noise;
    let jitter = Normal::new(0.0, noise.bbox_jitter_px).expect("validated jitter");
    let confidence = Normal::new(noise.confidence_mean, noise.confidence_std).expect("validated confidence");
    let false_positives = (noise.false_positive_rate_per_frame > 0.0)
        .then(|| Poisson::new(noise.false_positive_rate_per_frame).expect("validated rate"));
    let mut cameras: Vec<&CameraSpec> = scenario.cameras.iter().collect();
    cameras.sort_by_key(|c| c.id);
    let mut detections = Vec::new();
    let mut frame_truth = Vec::new();
    for cam in cameras {
        let id = CameraId::new(cam.id)?;
        let fps = cam.fps.unwrap_or(scenario.tick_hz);
        let until = cam.active_until_s.map_or(end, |s| (s * 1000.0).min(end));
        let [lo_m, hi_m] = cam.belt_range_m;
        for k in 0u64.. {
            let t_ms = (k as f64 * 1000.0 / fps).round();
            if t_ms >= until {
                break;
            }
            let time = Timestamp(t_ms as u64);
            let visible = line.visible(t_ms, lo_m, hi_m);
            if k % scenario.frame_truth_stride as u64 == 0 {
                frame_truth.push(FrameTruth {
                    t_ms: time,
                    cam: id,
                    boxes: visible.iter().map(|&(_, s)| camera_box(cam, s)).collect(),
                    pieces: visible.iter().map(|(p, _)| p.id).collect(),
                });
            }
            let boxes = merge_boxes(
                visible.iter().map(|&(_, s)| camera_box(cam, s)).collect(),
                noise.merge_gap_fraction,
            );
            for b in boxes {
                if rng.random::<f64>() < noise.miss_probability {
                    continue;
                }
                let mut c = b.as_array();
                for v in &mut c {
                    *v += jitter.sample(&mut rng);
                }
                let conf = confidence.sample(&mut rng).clamp(0.0, 1.0);
                let bbox = BoundingBox::try_from(c).unwrap_or(b);
                detections.push(Detection::new(time, id, bbox, conf, CLASS_LABEL)?);
            }
            if let Some(fp) = &false_positives {
                let n = fp.sample(&mut rng) as u64;
                for _ in 0..n {
                    let cx = rng.random::<f64>() * cam.image_px[0];
                    let cy = rng.random::<f64>() * cam.image_px[1];
                    let conf = confidence.sample(&mut rng).clamp(0.0, 1.0);
                    let bbox = BoundingBox::from_center(cx, cy, cam.box_px[0], cam.box_px[1])?;
                    detections.push(Detection::new(time, id, bbox, conf, CLASS_LABEL)?);
                }
            }
        }
    }
    ledger.per_frame_truth = Some(frame_truth);

    // motor sensor
    let run = Normal::new(0.0, SIGMA_RUN).expect("constant");
    let stop = Normal::new(0.0, SIGMA_STOP).expect("constant");
    let gyro_run = Normal::new(0.0, 2.0).expect("constant");
    let gyro_stop = Normal::new(0.0, 0.05).expect("constant");
    let mag_noise = Normal::new(0.0, 0.3).expect("constant");
    // fixed mounting tilt; only the magnitude matters downstream
    let tilt = {
        let g = [0.05, -0.03, 1.0];
        let n: f64 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        let n = n.sqrt();
        [g[0] / n, g[1] / n, g[2] / n]
    };
    let mut sensor = Vec::new();
    for k in 0u64.. {
        let t_ms = (k as f64 * 1000.0 / scenario.sensor_hz).round();
        if t_ms >= end {
            break;
        }
        let stopped = line.clock.is_stopped(t_ms);
        let (vib, gyro) = if stopped { (&stop, &gyro_stop) } else { (&run, &gyro_run) };
        let m = GRAVITY + vib.sample(&mut rng);
        let g = [gyro.sample(&mut rng), gyro.sample(&mut rng), gyro.sample(&mut rng)];
        let mag = [
            22.0 + mag_noise.sample(&mut rng),
            -5.0 + mag_noise.sample(&mut rng),
            41.0 + mag_noise.sample(&mut rng),
        ];
        let hours = t_ms / 3_600_000.0;
        let phase = std::f64::consts::TAU * hours;
        sensor.push(SensorSample {
            time: Timestamp(t_ms as u64),
            accel: [tilt[0] * m, tilt[1] * m, tilt[2] * m],
            gyro: Some(g),
            mag: Some(mag),
            pressure_hpa: Some(1013.25 - 0.2 * hours),
            temperature_c: Some(24.0 + 0.5 * phase.sin()),
            humidity_rh: Some(45.0 + 2.0 * (phase / 1.5).sin()),
            co2_ppm: Some(600.0 + 50.0 * (phase / 2.0).sin()),
        });
    }

    ledger.validate()?;
    let topology = topology_of(scenario)?;
    let true_kpis = true_kpis(&ledger, scenario)?;
    Ok(SimOutput {
        scenario: scenario.clone(),
        detections,
        sensor,
        ledger,
        topology,
        true_kpis,
    })
}
