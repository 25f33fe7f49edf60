//! Synthetic three-node conveyor line: pieces are injected at the start
//! node, checked at the QA node (defective ones are removed there) and
//! leave at the exit node. Produces camera detections, motor sensor data
//! and an exact ground-truth ledger.
//!
//! The belt is a 1-D coordinate in metres from the start node; each camera
//! maps a belt interval linearly onto a horizontal pixel row.

mod generate;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::availability::AvailabilityConfig;
use crate::error::{Error, Result, ValidationError};
use crate::ingest::read_to_string;
use crate::tracker::TrackerConfig;

pub use generate::{simulate, true_kpis, SimOutput};

fn default_tick_hz() -> f64 {
    30.0
}
fn default_belt_speed() -> f64 {
    0.25
}
fn default_loop_length() -> f64 {
    6.0
}
fn default_qa_position() -> f64 {
    2.0
}
fn default_exit_position() -> f64 {
    4.0
}
fn default_cycle() -> f64 {
    1.1
}
fn default_sensor_hz() -> f64 {
    100.0
}
fn default_stride() -> u32 {
    30
}
fn default_edge1_wires() -> [f64; 2] {
    [1.0, 1.5]
}
fn default_edge2_wires() -> [f64; 2] {
    [3.0, 3.5]
}
fn default_refractory() -> f64 {
    2.0
}
fn default_conf_mean() -> f64 {
    0.85
}
fn default_conf_std() -> f64 {
    0.05
}
fn default_image() -> [f64; 2] {
    [1280.0, 720.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticStops {
    pub mean_interval_s: f64,
    pub mean_duration_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSchedule {
    /// `[t_stop, t_start]` pairs in seconds.
    #[serde(default)]
    pub scripted: Vec<[f64; 2]>,
    #[serde(default)]
    pub stochastic: Option<StochasticStops>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub miss_probability: f64,
    #[serde(default)]
    pub bbox_jitter_px: f64,
    #[serde(default)]
    pub false_positive_rate_per_frame: f64,
    #[serde(default = "default_conf_mean")]
    pub confidence_mean: f64,
    #[serde(default = "default_conf_std")]
    pub confidence_std: f64,
    /// Adjacent boxes closer than this fraction of a box width are
    /// reported as one union box. Off when absent.
    #[serde(default)]
    pub merge_gap_fraction: Option<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            miss_probability: 0.0,
            bbox_jitter_px: 0.0,
            false_positive_rate_per_frame: 0.0,
            confidence_mean: default_conf_mean(),
            confidence_std: default_conf_std(),
            merge_gap_fraction: None,
        }
    }
}

impl NoiseSpec {
    pub fn nominal() -> Self {
        NoiseSpec {
            miss_probability: 0.02,
            bbox_jitter_px: 2.0,
            false_positive_rate_per_frame: 0.01,
            ..NoiseSpec::default()
        }
    }

    pub fn none() -> Self {
        NoiseSpec {
            confidence_std: 0.0,
            ..NoiseSpec::default()
        }
    }
}

/// Wall-clock window in which pieces are injected in tight bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub burst_size: u32,
    /// Centre-to-centre spacing of pieces within a burst.
    pub intra_spacing_m: f64,
    /// Running time between burst starts.
    pub period_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Watch {
    pub edge: u32,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub id: u32,
    /// Defaults to the scenario tick rate.
    #[serde(default)]
    pub fps: Option<f64>,
    /// Belt interval in view, metres.
    pub belt_range_m: [f64; 2],
    /// Pixel position of the first visible belt point.
    pub origin_px: [f64; 2],
    pub px_per_m: f64,
    pub box_px: [f64; 2],
    #[serde(default = "default_image")]
    pub image_px: [f64; 2],
    /// The feed ends here (seconds); runs for the whole session when absent.
    #[serde(default)]
    pub active_until_s: Option<f64>,
    pub watch: Vec<Watch>,
}

impl CameraSpec {
    pub fn x_px(&self, s_m: f64) -> f64 {
        self.origin_px[0] + (s_m - self.belt_range_m[0]) * self.px_per_m
    }

    pub fn sees(&self, s_m: f64) -> bool {
        s_m >= self.belt_range_m[0] && s_m <= self.belt_range_m[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration_s: f64,
    #[serde(default = "default_tick_hz")]
    pub tick_hz: f64,
    #[serde(default = "default_belt_speed")]
    pub belt_speed_mps: f64,
    #[serde(default = "default_loop_length")]
    pub loop_length_m: f64,
    #[serde(default = "default_qa_position")]
    pub qa_position_m: f64,
    #[serde(default = "default_exit_position")]
    pub exit_position_m: f64,
    /// Running-time spacing of injections.
    #[serde(default = "default_cycle")]
    pub injection_period_s: f64,
    /// No injections after this wall time, letting the line drain.
    #[serde(default)]
    pub injection_stop_s: Option<f64>,
    #[serde(default = "default_cycle")]
    pub ideal_cycle_time_s: f64,
    #[serde(default)]
    pub defect_probability: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_sensor_hz")]
    pub sensor_hz: f64,
    /// Record frame truth every this many frames per camera.
    #[serde(default = "default_stride")]
    pub frame_truth_stride: u32,
    /// Counting wire and speed wire of edge 1 (start → QA), metres.
    #[serde(default = "default_edge1_wires")]
    pub edge1_wires_m: [f64; 2],
    /// Counting wire and speed wire of edge 2 (QA → exit), metres.
    #[serde(default = "default_edge2_wires")]
    pub edge2_wires_m: [f64; 2],
    #[serde(default = "default_refractory")]
    pub refractory_s: f64,
    #[serde(default)]
    pub stops: StopSchedule,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub dense_windows: Vec<DenseWindow>,
    pub cameras: Vec<CameraSpec>,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub availability: AvailabilityConfig,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation(ValidationError::new(field, message))
}

fn probability(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(field, "must be in [0, 1]"))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, "must be > 0"))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        Scenario::from_toml(&read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn duration_ms(&self) -> u64 {
        (self.duration_s * 1000.0).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        positive("duration_s", self.duration_s)?;
        positive("tick_hz", self.tick_hz)?;
        positive("belt_speed_mps", self.belt_speed_mps)?;
        positive("injection_period_s", self.injection_period_s)?;
        positive("ideal_cycle_time_s", self.ideal_cycle_time_s)?;
        positive("sensor_hz", self.sensor_hz)?;
        positive("refractory_s", self.refractory_s)?;
        probability("defect_probability", self.defect_probability)?;
        if self.frame_truth_stride == 0 {
            return Err(invalid("frame_truth_stride", "must be >= 1"));
        }
        let [e1a, e1b] = self.edge1_wires_m;
        let [e2a, e2b] = self.edge2_wires_m;
        let ordered = [0.0, e1a, e1b, self.qa_position_m, e2a, e2b, self.exit_position_m];
        if ordered.iter().any(|v| !v.is_finite()) || ordered.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "edge1_wires_m",
                "need 0 < edge 1 wires < qa_position_m < edge 2 wires < exit_position_m",
            ));
        }
        if !(self.exit_position_m <= self.loop_length_m) {
            return Err(invalid("exit_position_m", "must not exceed loop_length_m"));
        }

        let noise = &self.noise;
        probability("noise.miss_probability", noise.miss_probability)?;
        if !(noise.bbox_jitter_px.is_finite() && noise.bbox_jitter_px >= 0.0) {
            return Err(invalid("noise.bbox_jitter_px", "must be >= 0"));
        }
        if !(noise.false_positive_rate_per_frame.is_finite() && noise.false_positive_rate_per_frame >= 0.0) {
            return Err(invalid("noise.false_positive_rate_per_frame", "must be >= 0"));
        }
        probability("noise.confidence_mean", noise.confidence_mean)?;
        if !(noise.confidence_std.is_finite() && noise.confidence_std >= 0.0) {
            return Err(invalid("noise.confidence_std", "must be >= 0"));
        }
        if let Some(f) = noise.merge_gap_fraction {
            if !(f.is_finite() && f >= 0.0) {
                return Err(invalid("noise.merge_gap_fraction", "must be >= 0"));
            }
        }

        let mut prev_end = 0.0;
        for (i, [a, b]) in self.stops.scripted.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(invalid("stops.scripted", format!("stop {i}: t_stop must precede t_start")));
            }
            if *a < prev_end || *a < 0.0 || *b > self.duration_s {
                return Err(invalid(
                    "stops.scripted",
                    format!("stop {i}: stops must be sorted, non-overlapping and inside the session"),
                ));
            }
            prev_end = *b;
        }
        if let Some(s) = &self.stops.stochastic {
            positive("stops.stochastic.mean_interval_s", s.mean_interval_s)?;
            positive("stops.stochastic.mean_duration_s", s.mean_duration_s)?;
        }

        for (i, w) in self.dense_windows.iter().enumerate() {
            let field = format!("dense_windows[{i}]");
            if !(w.start_s.is_finite() && w.end_s.is_finite() && 0.0 <= w.start_s && w.start_s < w.end_s) {
                return Err(invalid(&field, "need 0 <= start_s < end_s"));
            }
            if w.burst_size == 0 {
                return Err(invalid(&field, "burst_size must be >= 1"));
            }
            positive(&field, w.intra_spacing_m)?;
            positive(&field, w.period_s)?;
        }

        if self.cameras.is_empty() {
            return Err(invalid("cameras", "at least one camera is required"));
        }
        let mut ids = std::collections::BTreeSet::new();
        let mut priorities = std::collections::BTreeSet::new();
        for cam in &self.cameras {
            let field = format!("cameras[id={}]", cam.id);
            if cam.id == 0 || !ids.insert(cam.id) {
                return Err(invalid(&field, "camera ids must be unique and >= 1"));
            }
            positive(&field, cam.fps.unwrap_or(self.tick_hz))?;
            positive(&field, cam.px_per_m)?;
            positive(&field, cam.box_px[0])?;
            positive(&field, cam.box_px[1])?;
            let [lo, hi] = cam.belt_range_m;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(&field, "belt_range_m must be increasing"));
            }
            if cam.origin_px.iter().any(|v| !v.is_finite()) {
                return Err(invalid(&field, "origin_px must be finite"));
            }
            for w in &cam.watch {
                let wires = match w.edge {
                    1 => self.edge1_wires_m,
                    2 => self.edge2_wires_m,
                    other => return Err(invalid(&field, format!("watches unknown edge {other}"))),
                };
                if !wires.iter().all(|&m| lo < m && m < hi) {
                    return Err(invalid(&field, format!("edge {} wires are outside the camera's view", w.edge)));
                }
                if !priorities.insert((w.edge, w.priority)) {
                    return Err(invalid(&field, format!("duplicate priority {} on edge {}", w.priority, w.edge)));
                }
            }
        }
        for edge in [1, 2] {
            if !priorities.iter().any(|&(e, _)| e == edge) {
                return Err(invalid("cameras", format!("no camera watches edge {edge}")));
            }
        }
        self.tracker.validate()?;
        self.availability.validate()?;
        Ok(())
    }
}

/// Bundled scenarios.
pub mod canned {
    use super::Scenario;

    /// 70-minute run mirroring the four-camera field setup.
    pub const FOUR_CAMERA: &str = include_str!("../../data/four_camera.scenario");
    /// Ten minutes with four minutes of tightly packed bursts.
    pub const DENSE_PACKING: &str = include_str!("../../data/dense_packing.scenario");
    /// Preferred edge camera dies near the end of minute 52.
    pub const FAILOVER: &str = include_str!("../../data/failover.scenario");

    pub fn four_camera() -> Scenario {
        Scenario::from_toml(FOUR_CAMERA).expect("bundled scenario is valid")
    }

    pub fn failover() -> Scenario {
        Scenario::from_toml(FAILOVER).expect("bundled scenario is valid")
    }
}

/// Pieces injected in bursts closer than a box length, with a detector
/// that merges near-touching boxes.
pub fn dense_packing_scenario() -> Scenario {
    Scenario::from_toml(canned::DENSE_PACKING).expect("bundled scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
duration_s = 60.0

[[cameras]]
id = 1
belt_range_m = [0.5, 3.9]
origin_px = [40.0, 360.0]
px_per_m = 300.0
box_px = [45.0, 45.0]
watch = [{ edge = 1, priority = 1 }, { edge = 2, priority = 1 }]
"#;

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.tick_hz, 30.0);
        assert_eq!(s.injection_period_s, 1.1);
        assert_eq!(s.belt_speed_mps, 0.25);
        assert_eq!(s.noise.miss_probability, 0.0);
    }

    #[test]
    fn bundled_scenarios_are_valid() {
        let p = canned::four_camera();
        assert_eq!(p.duration_s, 4200.0);
        assert_eq!(p.cameras.len(), 4);
        let d = dense_packing_scenario();
        assert!(!d.dense_windows.is_empty());
        assert!(d.noise.merge_gap_fraction.is_some());
        canned::failover();
    }

    #[test]
    fn toml_round_trip() {
        let p = canned::four_camera();
        assert_eq!(Scenario::from_toml(&p.to_toml_string()).unwrap(), p);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let overlapping = format!("{MINIMAL}\n[stops]\nscripted = [[10.0, 20.0], [15.0, 25.0]]\n");
        let err = Scenario::from_toml(&overlapping).unwrap_err();
        assert!(err.to_string().contains("stops.scripted"), "{err}");

        let bad_prob = MINIMAL.replace("duration_s = 60.0", "duration_s = 60.0\ndefect_probability = 1.5");
        assert!(Scenario::from_toml(&bad_prob).is_err());

        let unknown = MINIMAL.replace("duration_s = 60.0", "duration_s = 60.0\nspeed = 3");
        assert!(matches!(Scenario::from_toml(&unknown), Err(Error::Parse { .. })));

        let blind = MINIMAL.replace("belt_range_m = [0.5, 3.9]", "belt_range_m = [0.5, 2.0]");
        assert!(Scenario::from_toml(&blind).unwrap_err().to_string().contains("outside"));
    }
}
