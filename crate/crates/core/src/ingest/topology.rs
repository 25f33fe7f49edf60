//! Line topology configuration (TOML).
//!
//! ```toml
//! ideal_cycle_time_s = 1.1
//! planned_production_time_s = 4200.0   # optional, defaults to the session length
//! session_duration_s = 4200.0          # optional
//! refractory_s = 2.0                   # optional
//! total_count_edge = 1                 # optional, defaults to the first edge
//! good_count_edge = 2                  # optional, defaults to the last edge
//!
//! [[nodes]]
//! id = 1
//! name = "Start"
//!
//! [[edges]]
//! id = 1
//! from = 1
//! to = 2
//!
//! [[edges.tripwires]]
//! camera = 1
//! priority = 1
//! wire = [[400.0, 470.0], [400.0, 610.0]]
//! wire_b = [[600.0, 470.0], [600.0, 610.0]]   # optional second wire for speed
//! gap_m = 0.5                                   # metres between wire and wire_b
//!
//! [tracker]        # optional, see TrackerConfig
//! [availability]   # optional, see AvailabilityConfig
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::availability::AvailabilityConfig;
use crate::error::{Error, Result, ValidationError};
use crate::ingest::{read_to_string, IngestWarnings};
use crate::model::{CameraId, LineSegment2D, Point};
use crate::tracker::TrackerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tripwire {
    pub camera: CameraId,
    pub priority: u32,
    pub wire: LineSegment2D,
    pub wire_b: Option<LineSegment2D>,
    pub gap_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    /// Sorted by ascending priority value (1 = preferred).
    pub tripwires: Vec<Tripwire>,
}

impl Edge {
    pub fn tripwire_for(&self, camera: CameraId) -> Option<&Tripwire> {
        self.tripwires.iter().find(|t| t.camera == camera)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineTopology {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub ideal_cycle_time_s: f64,
    pub planned_production_time_s: Option<f64>,
    pub session_duration_s: Option<f64>,
    pub refractory_s: f64,
    pub total_count_edge: u32,
    pub good_count_edge: u32,
    pub tracker: TrackerConfig,
    pub availability: AvailabilityConfig,
}

impl LineTopology {
    pub fn edge(&self, id: u32) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn cameras(&self) -> BTreeSet<CameraId> {
        self.edges
            .iter()
            .flat_map(|e| e.tripwires.iter().map(|t| t.camera))
            .collect()
    }

    pub fn to_toml_string(&self) -> String {
        let file = TopologyFile::from(self);
        toml::to_string_pretty(&file).expect("topology serializes")
    }
}

type Extra = BTreeMap<String, toml::Value>;

#[derive(Debug, Serialize, Deserialize)]
struct TripwireFile {
    camera: u32,
    priority: u32,
    wire: [[f64; 2]; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wire_b: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gap_m: Option<f64>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeFile {
    id: u32,
    from: u32,
    to: u32,
    #[serde(default)]
    tripwires: Vec<TripwireFile>,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct TopologyFile {
    ideal_cycle_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    planned_production_time_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    session_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    refractory_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    total_count_edge: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    good_count_edge: Option<u32>,
    #[serde(default)]
    nodes: Vec<Node>,
    #[serde(default)]
    edges: Vec<EdgeFile>,
    #[serde(default)]
    tracker: TrackerConfig,
    #[serde(default)]
    availability: AvailabilityConfig,
    #[serde(flatten, skip_serializing)]
    extra: Extra,
}

fn seg_to_raw(s: &LineSegment2D) -> [[f64; 2]; 2] {
    [[s.a().x, s.a().y], [s.b().x, s.b().y]]
}

fn raw_to_seg(raw: [[f64; 2]; 2], field: &str) -> Result<LineSegment2D, ValidationError> {
    LineSegment2D::new(Point::new(raw[0][0], raw[0][1]), Point::new(raw[1][0], raw[1][1]))
        .map_err(|e| ValidationError::new(field, e.message))
}

impl From<&LineTopology> for TopologyFile {
    fn from(t: &LineTopology) -> Self {
        TopologyFile {
            ideal_cycle_time_s: t.ideal_cycle_time_s,
            planned_production_time_s: t.planned_production_time_s,
            session_duration_s: t.session_duration_s,
            refractory_s: Some(t.refractory_s),
            total_count_edge: Some(t.total_count_edge),
            good_count_edge: Some(t.good_count_edge),
            nodes: t.nodes.clone(),
            edges: t
                .edges
                .iter()
                .map(|e| EdgeFile {
                    id: e.id,
                    from: e.from,
                    to: e.to,
                    tripwires: e
                        .tripwires
                        .iter()
                        .map(|w| TripwireFile {
                            camera: w.camera.get(),
                            priority: w.priority,
                            wire: seg_to_raw(&w.wire),
                            wire_b: w.wire_b.as_ref().map(seg_to_raw),
                            gap_m: w.gap_m,
                            extra: Extra::new(),
                        })
                        .collect(),
                    extra: Extra::new(),
                })
                .collect(),
            tracker: t.tracker.clone(),
            availability: t.availability.clone(),
            extra: Extra::new(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ValidationError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ValidationError::new(name, format!("must be > 0, got {v}")))
    }
}

fn validate(file: TopologyFile) -> Result<(LineTopology, IngestWarnings), ValidationError> {
    let mut warnings = IngestWarnings {
        unknown_fields: file.extra.len(),
        ..Default::default()
    };
    positive("ideal_cycle_time_s", file.ideal_cycle_time_s)?;
    if let Some(p) = file.planned_production_time_s {
        positive("planned_production_time_s", p)?;
    }
    if let Some(d) = file.session_duration_s {
        positive("session_duration_s", d)?;
    }
    let refractory_s = file.refractory_s.unwrap_or(2.0);
    if !(refractory_s.is_finite() && refractory_s >= 0.0) {
        return Err(ValidationError::new("refractory_s", "must be >= 0"));
    }
    file.tracker.validate()?;
    file.availability.validate()?;

    let mut node_ids = BTreeSet::new();
    for n in &file.nodes {
        if !node_ids.insert(n.id) {
            return Err(ValidationError::new("nodes", format!("duplicate node {}", n.id)));
        }
    }
    if file.edges.is_empty() {
        return Err(ValidationError::new("edges", "at least one edge required"));
    }
    let mut edges = Vec::with_capacity(file.edges.len());
    let mut edge_ids = BTreeSet::new();
    for e in file.edges {
        warnings.unknown_fields += e.extra.len();
        if !edge_ids.insert(e.id) {
            return Err(ValidationError::new("edges", format!("duplicate edge {}", e.id)));
        }
        for node in [e.from, e.to] {
            if !node_ids.contains(&node) {
                return Err(ValidationError::new(
                    "edges",
                    format!("edge {}: unknown node {node}", e.id),
                ));
            }
        }
        if e.tripwires.is_empty() {
            return Err(ValidationError::new(
                "tripwires",
                format!("edge {} has no tripwire", e.id),
            ));
        }
        let mut priorities = BTreeSet::new();
        let mut cameras = BTreeSet::new();
        let mut wires = Vec::with_capacity(e.tripwires.len());
        for t in e.tripwires {
            warnings.unknown_fields += t.extra.len();
            if !priorities.insert(t.priority) {
                return Err(ValidationError::new(
                    "tripwires",
                    format!("edge {}: duplicate priority {}", e.id, t.priority),
                ));
            }
            let camera = CameraId::new(t.camera)?;
            if !cameras.insert(camera) {
                return Err(ValidationError::new(
                    "tripwires",
                    format!("edge {}: camera {} listed twice", e.id, t.camera),
                ));
            }
            if let Some(g) = t.gap_m {
                positive("gap_m", g)?;
            }
            wires.push(Tripwire {
                camera,
                priority: t.priority,
                wire: raw_to_seg(t.wire, "wire")?,
                wire_b: t.wire_b.map(|w| raw_to_seg(w, "wire_b")).transpose()?,
                gap_m: t.gap_m,
            });
        }
        wires.sort_by_key(|w| w.priority);
        edges.push(Edge {
            id: e.id,
            from: e.from,
            to: e.to,
            tripwires: wires,
        });
    }
    let total_count_edge = file.total_count_edge.unwrap_or(edges[0].id);
    let good_count_edge = file.good_count_edge.unwrap_or(edges[edges.len() - 1].id);
    for (name, id) in [
        ("total_count_edge", total_count_edge),
        ("good_count_edge", good_count_edge),
    ] {
        if !edge_ids.contains(&id) {
            return Err(ValidationError::new(name, format!("unknown edge {id}")));
        }
    }
    Ok((
        LineTopology {
            nodes: file.nodes,
            edges,
            ideal_cycle_time_s: file.ideal_cycle_time_s,
            planned_production_time_s: file.planned_production_time_s,
            session_duration_s: file.session_duration_s,
            refractory_s,
            total_count_edge,
            good_count_edge,
            tracker: file.tracker,
            availability: file.availability,
        },
        warnings,
    ))
}

pub fn parse_topology(text: &str) -> Result<(LineTopology, IngestWarnings)> {
    let file: TopologyFile = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(0);
        Error::Parse {
            line,
            message: e.message().to_string(),
        }
    })?;
    let (topo, warnings) = validate(file)?;
    if warnings.unknown_fields > 0 {
        log::warn!("ignored {} unknown topology keys", warnings.unknown_fields);
    }
    Ok((topo, warnings))
}

pub fn load_topology(path: &Path) -> Result<LineTopology> {
    Ok(parse_topology(&read_to_string(path)?)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = include_str!("../../data/example.topology.toml");

    #[test]
    fn bundled_example_loads() {
        let (t, w) = parse_topology(EXAMPLE).unwrap();
        assert_eq!(t.ideal_cycle_time_s, 1.1);
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.edges.len(), 2);
        assert_eq!(t.edges[0].from, 1);
        assert_eq!(t.edges[0].to, 2);
        assert_eq!(w.unknown_fields, 0);
        assert_eq!(t.total_count_edge, 1);
        assert_eq!(t.good_count_edge, 2);
    }

    #[test]
    fn round_trip() {
        let (t, _) = parse_topology(EXAMPLE).unwrap();
        let (again, _) = parse_topology(&t.to_toml_string()).unwrap();
        assert_eq!(t, again);
    }

    fn minimal(edge_extra: &str, wires: &str) -> String {
        format!(
            "ideal_cycle_time_s = 1.1\n\
             [[nodes]]\nid = 1\n[[nodes]]\nid = 2\n\
             [[edges]]\nid = 1\nfrom = 1\nto = {edge_extra}\n{wires}"
        )
    }

    const WIRE1: &str = "[[edges.tripwires]]\ncamera = 1\npriority = 1\nwire = [[0.0, 0.0], [0.0, 10.0]]\n";
    const WIRE2: &str = "[[edges.tripwires]]\ncamera = 2\npriority = 1\nwire = [[0.0, 0.0], [0.0, 10.0]]\n";

    #[test]
    fn unknown_node() {
        let err = parse_topology(&minimal("9", WIRE1)).unwrap_err();
        assert!(err.to_string().contains("unknown node"), "{err}");
    }

    #[test]
    fn duplicate_priority() {
        let err = parse_topology(&minimal("2", &format!("{WIRE1}{WIRE2}"))).unwrap_err();
        assert!(err.to_string().contains("duplicate priority"), "{err}");
    }

    #[test]
    fn non_positive_cycle_time() {
        let text = minimal("2", WIRE1).replace("ideal_cycle_time_s = 1.1", "ideal_cycle_time_s = 0.0");
        let err = parse_topology(&text).unwrap_err();
        assert!(err.to_string().contains("ideal_cycle_time_s"), "{err}");
    }

    #[test]
    fn edge_without_tripwire() {
        let err = parse_topology(&minimal("2", "")).unwrap_err();
        assert!(err.to_string().contains("no tripwire"), "{err}");
    }

    #[test]
    fn unknown_keys_counted() {
        let text = format!("operator = \"ana\"\n{}", minimal("2", WIRE1));
        let (_, w) = parse_topology(&text).unwrap();
        assert_eq!(w.unknown_fields, 1);
    }
}
