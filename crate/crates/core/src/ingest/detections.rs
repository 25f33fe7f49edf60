//! Line-delimited detection records.
//!
//! One JSON object per line:
//! `{"t_ms": 1200, "cam": 1, "bbox": [x_min, y_min, x_max, y_max], "conf": 0.91, "class": "box"}`

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::ingest::{open, Parsed};
use crate::model::{BoundingBox, CameraId, Detection, Timestamp};

#[derive(Debug, Deserialize)]
struct RawDetection {
    t_ms: u64,
    cam: u32,
    bbox: [f64; 4],
    conf: f64,
    class: String,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct OutDetection<'a> {
    t_ms: u64,
    cam: u32,
    bbox: [f64; 4],
    conf: f64,
    class: &'a str,
}

fn to_detection(raw: RawDetection) -> Result<Detection, ValidationError> {
    let camera = CameraId::new(raw.cam)?;
    let bbox = BoundingBox::try_from(raw.bbox)?;
    Detection::new(Timestamp(raw.t_ms), camera, bbox, raw.conf, raw.class)
}

/// Parse one record. Returns the detection and the number of unknown fields.
pub fn parse_detection_line(line: &str) -> Result<(Detection, usize), DetectionLineError> {
    let raw: RawDetection =
        serde_json::from_str(line).map_err(|e| DetectionLineError::Syntax(e.to_string()))?;
    let extra = raw.extra.len();
    let det = to_detection(raw).map_err(DetectionLineError::Invalid)?;
    Ok((det, extra))
}

#[derive(Debug)]
pub enum DetectionLineError {
    Syntax(String),
    Invalid(ValidationError),
}

/// Parse a whole detection stream. Blank lines are skipped. Output is
/// grouped by camera, time-ordered within each camera.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<Parsed<Detection>> {
    let mut out = Parsed::default();
    let mut last_per_cam: BTreeMap<CameraId, Timestamp> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (det, extra) = parse_detection_line(&line).map_err(|e| match e {
            DetectionLineError::Syntax(message) => Error::Parse {
                line: line_no,
                message,
            },
            DetectionLineError::Invalid(source) => Error::InvalidRecord {
                line: line_no,
                source,
            },
        })?;
        out.warnings.unknown_fields += extra;
        if let Some(prev) = last_per_cam.get(&det.camera) {
            if det.time < *prev {
                return Err(Error::InvalidRecord {
                    line: line_no,
                    source: ValidationError::new(
                        "t_ms",
                        format!(
                            "timestamp {} precedes {} on {}",
                            det.time, prev, det.camera
                        ),
                    ),
                });
            }
        }
        last_per_cam.insert(det.camera, det.time);
        out.records.push(det);
    }
    // Stable: per-camera time order is already guaranteed.
    out.records.sort_by_key(|d| d.camera);
    if out.warnings.unknown_fields > 0 {
        log::warn!("ignored {} unknown detection fields", out.warnings.unknown_fields);
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Parsed<Detection>> {
    parse_detections(open(path)?)
}

pub fn write_detections<W: Write>(mut w: W, dets: &[Detection]) -> std::io::Result<()> {
    for d in dets {
        let rec = OutDetection {
            t_ms: d.time.ms(),
            cam: d.camera.get(),
            bbox: d.bbox.as_array(),
            conf: d.confidence,
            class: &d.class_label,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_lines() {
        let text = r#"{"t_ms": 0, "cam": 1, "bbox": [0, 0, 10, 10], "conf": 0.9, "class": "box"}
{"t_ms": 33, "cam": 1, "bbox": [1, 0, 11, 10], "conf": 0.8, "class": "box"}

{"t_ms": 20, "cam": 2, "bbox": [5, 5, 9, 9], "conf": 0.4, "class": "box", "track_hint": 3}
"#;
        let parsed = parse_detections(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.warnings.unknown_fields, 1);
        assert_eq!(parsed.records[2].camera.get(), 2);
    }

    #[test]
    fn empty_file() {
        let parsed = parse_detections("".as_bytes()).unwrap();
        assert!(parsed.records.is_empty());
    }

    #[test]
    fn confidence_out_of_range_names_field() {
        let text = r#"{"t_ms": 0, "cam": 1, "bbox": [0, 0, 10, 10], "conf": 1.2, "class": "box"}"#;
        match parse_detections(text.as_bytes()) {
            Err(Error::InvalidRecord { line, source }) => {
                assert_eq!(line, 1);
                assert_eq!(source.field, "conf");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"t_ms\": 0, \"cam\": 1, \"bbox\": [0,0,1,1], \"conf\": 0.5, \"class\": \"b\"}\nnot json\n";
        match parse_detections(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_camera_rejected() {
        let text = r#"{"t_ms": 50, "cam": 1, "bbox": [0, 0, 10, 10], "conf": 0.9, "class": "box"}
{"t_ms": 10, "cam": 2, "bbox": [0, 0, 10, 10], "conf": 0.9, "class": "box"}
{"t_ms": 40, "cam": 1, "bbox": [0, 0, 10, 10], "conf": 0.9, "class": "box"}"#;
        match parse_detections(text.as_bytes()) {
            Err(Error::InvalidRecord { line, source }) => {
                assert_eq!(line, 3);
                assert_eq!(source.field, "t_ms");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn degenerate_bbox_rejected() {
        let text = r#"{"t_ms": 0, "cam": 1, "bbox": [10, 0, 10, 10], "conf": 0.9, "class": "box"}"#;
        assert!(matches!(
            parse_detections(text.as_bytes()),
            Err(Error::InvalidRecord { .. })
        ));
    }
}
