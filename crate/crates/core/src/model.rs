//! Shared domain types and 2-D geometry.
//!
//! Image coordinates follow the usual raster convention: origin at the
//! top-left pixel, x to the right, y downward. Each camera has its own
//! independent pixel frame.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;

/// Milliseconds since session start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_ms(ms: u64) -> Self {
        Timestamp(ms)
    }

    pub fn ms(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    /// Signed difference `self - earlier` in seconds.
    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        (self.0 as f64 - earlier.0 as f64) / 1000.0
    }

    /// Zero-based minute bin aligned to session start.
    pub fn minute_index(self) -> usize {
        (self.0 / 60_000) as usize
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// 1-based camera number.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(try_from = "u32", into = "u32")]
pub struct CameraId(u32);

impl CameraId {
    pub fn new(id: u32) -> Result<Self, ValidationError> {
        if id == 0 {
            return Err(ValidationError::new("cam", "camera id must be >= 1"));
        }
        Ok(CameraId(id))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for CameraId {
    type Error = ValidationError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        CameraId::new(value)
    }
}

impl From<CameraId> for u32 {
    fn from(value: CameraId) -> Self {
        value.0
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cam{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Largest accepted pixel coordinate magnitude.
pub const MAX_COORD: f64 = 1e9;

/// Axis-aligned box in pixels. Always satisfies `x_min < x_max`,
/// `y_min < y_max` with finite coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ValidationError> {
        if ![x_min, y_min, x_max, y_max]
            .iter()
            .all(|v| v.is_finite() && v.abs() <= MAX_COORD)
        {
            return Err(ValidationError::new(
                "bbox",
                "coordinates must be finite and within ±1e9 px",
            ));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(ValidationError::new(
                "bbox",
                format!("degenerate box [{x_min}, {y_min}, {x_max}, {y_max}]"),
            ));
        }
        Ok(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, ValidationError> {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn centroid(&self) -> Point {
        centroid(self)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.as_array()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = ValidationError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <[f64; 4]>::deserialize(deserializer)?;
        BoundingBox::try_from(raw).map_err(serde::de::Error::custom)
    }
}

/// One box observed by one camera at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub time: Timestamp,
    pub camera: CameraId,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_label: String,
}

impl Detection {
    pub fn new(
        time: Timestamp,
        camera: CameraId,
        bbox: BoundingBox,
        confidence: f64,
        class_label: impl Into<String>,
    ) -> Result<Self, ValidationError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ValidationError::new(
                "conf",
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        Ok(Detection {
            time,
            camera,
            bbox,
            confidence,
            class_label: class_label.into(),
        })
    }
}

/// Oriented segment `a -> b`; used as a tripwire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineSegment2D {
    a: Point,
    b: Point,
}

impl LineSegment2D {
    pub fn new(a: Point, b: Point) -> Result<Self, ValidationError> {
        let in_range = |p: Point| p.is_finite() && p.x.abs() <= MAX_COORD && p.y.abs() <= MAX_COORD;
        if !in_range(a) || !in_range(b) {
            return Err(ValidationError::new(
                "wire",
                "endpoints must be finite and within ±1e9 px",
            ));
        }
        if a == b {
            return Err(ValidationError::new("wire", "endpoints must differ"));
        }
        Ok(LineSegment2D { a, b })
    }

    pub fn a(&self) -> Point {
        self.a
    }

    pub fn b(&self) -> Point {
        self.b
    }
}

impl<'de> Deserialize<'de> for LineSegment2D {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = <[[f64; 2]; 2]>::deserialize(deserializer)?;
        LineSegment2D::new(
            Point::new(raw[0][0], raw[0][1]),
            Point::new(raw[1][0], raw[1][1]),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Direction of a proper crossing relative to the wire's `a -> b` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum CrossingSign {
    /// Endpoint lands on the positive-cross side of `a -> b`.
    Positive,
    Negative,
}

impl CrossingSign {
    pub fn as_i8(self) -> i8 {
        match self {
            CrossingSign::Positive => 1,
            CrossingSign::Negative => -1,
        }
    }

    pub fn flipped(self) -> CrossingSign {
        match self {
            CrossingSign::Positive => CrossingSign::Negative,
            CrossingSign::Negative => CrossingSign::Positive,
        }
    }
}

impl From<CrossingSign> for i8 {
    fn from(s: CrossingSign) -> i8 {
        s.as_i8()
    }
}

impl TryFrom<i8> for CrossingSign {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(CrossingSign::Positive),
            -1 => Ok(CrossingSign::Negative),
            other => Err(format!("direction must be +1 or -1, got {other}")),
        }
    }
}

/// Intersection over union. Zero for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let ih = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn centroid(b: &BoundingBox) -> Point {
    Point::new((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}

fn cross(o: Point, p: Point, q: Point) -> f64 {
    (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x)
}

/// Signed side change when segment `p1 -> p2` properly crosses `wire`.
///
/// Touching an endpoint, grazing the wire, or collinear overlap yields
/// `None`. The sign is the side of `p2` relative to `a -> b`.
pub fn segments_intersect(p1: Point, p2: Point, wire: &LineSegment2D) -> Option<CrossingSign> {
    if p1 == p2 || !p1.is_finite() || !p2.is_finite() {
        return None;
    }
    let (a, b) = (wire.a, wire.b);
    let d1 = cross(a, b, p1);
    let d2 = cross(a, b, p2);
    let d3 = cross(p1, p2, a);
    let d4 = cross(p1, p2, b);
    let straddles_wire = (d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0);
    let straddles_path = (d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0);
    if !(straddles_wire && straddles_path) {
        return None;
    }
    Some(if d2 > 0.0 {
        CrossingSign::Positive
    } else {
        CrossingSign::Negative
    })
}

/// Fraction along `p1 -> p2` where the path meets the wire's supporting line.
/// Only meaningful after [`segments_intersect`] reported a crossing.
pub fn crossing_fraction(p1: Point, p2: Point, wire: &LineSegment2D) -> f64 {
    let d1 = cross(wire.a, wire.b, p1);
    let d2 = cross(wire.a, wire.b, p2);
    (d1 / (d1 - d2)).clamp(0.0, 1.0)
}
