//! Motor sensor CSV.
//!
//! Columns: `time_ms, ax, ay, az, gx, gy, gz, mx, my, mz, pressure_hpa,
//! temp_c, humidity_rh, co2_ppm`. Only the first four are required; the
//! rest may be missing from the header or left empty per row.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{open, Parsed};
use crate::model::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSample {
    pub time: Timestamp,
    /// m/s²
    pub accel: [f64; 3],
    /// °/s
    pub gyro: Option<[f64; 3]>,
    /// µT
    pub mag: Option<[f64; 3]>,
    pub pressure_hpa: Option<f64>,
    pub temperature_c: Option<f64>,
    pub humidity_rh: Option<f64>,
    pub co2_ppm: Option<f64>,
}

impl SensorSample {
    pub fn accel_only(time: Timestamp, accel: [f64; 3]) -> Self {
        SensorSample {
            time,
            accel,
            gyro: None,
            mag: None,
            pressure_hpa: None,
            temperature_c: None,
            humidity_rh: None,
            co2_ppm: None,
        }
    }

    pub fn accel_magnitude(&self) -> f64 {
        let [x, y, z] = self.accel;
        (x * x + y * y + z * z).sqrt()
    }
}

pub const SENSOR_COLUMNS: [&str; 14] = [
    "time_ms",
    "ax",
    "ay",
    "az",
    "gx",
    "gy",
    "gz",
    "mx",
    "my",
    "mz",
    "pressure_hpa",
    "temp_c",
    "humidity_rh",
    "co2_ppm",
];

const REQUIRED: usize = 4;

pub fn parse_sensor_csv<R: Read>(reader: R) -> Result<Parsed<SensorSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let mut index: [Option<usize>; 14] = [None; 14];
    let mut unknown = 0usize;
    for (pos, name) in headers.iter().enumerate() {
        match SENSOR_COLUMNS.iter().position(|c| *c == name) {
            Some(col) if index[col].is_none() => index[col] = Some(pos),
            Some(_) => return Err(Error::Schema(format!("duplicate column {name}"))),
            None => unknown += 1,
        }
    }
    for (col, name) in SENSOR_COLUMNS.iter().enumerate().take(REQUIRED) {
        if index[col].is_none() {
            return Err(Error::Schema(format!("missing required column {name}")));
        }
    }

    let mut out = Parsed::default();
    out.warnings.unknown_fields = unknown;
    for (row_idx, rec) in rdr.records().enumerate() {
        // header is row 1
        let row = row_idx + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line: row,
            message: e.to_string(),
        })?;
        let cell = |col: usize| -> Result<Option<f64>> {
            let Some(pos) = index[col] else {
                return Ok(None);
            };
            let text = rec.get(pos).unwrap_or("");
            if text.is_empty() {
                return Ok(None);
            }
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                line: row,
                message: format!("column {}: cannot parse {text:?}", SENSOR_COLUMNS[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: row,
                    message: format!("column {}: non-finite value", SENSOR_COLUMNS[col]),
                });
            }
            Ok(Some(v))
        };
        let required = |col: usize| -> Result<f64> {
            cell(col)?.ok_or_else(|| Error::Parse {
                line: row,
                message: format!("column {} is empty", SENSOR_COLUMNS[col]),
            })
        };
        let time_text = rec.get(index[0].unwrap()).unwrap_or("");
        let time: u64 = time_text.parse().map_err(|_| Error::Parse {
            line: row,
            message: format!("column time_ms: cannot parse {time_text:?}"),
        })?;
        let triple = |c: usize| -> Result<Option<[f64; 3]>> {
            match (cell(c)?, cell(c + 1)?, cell(c + 2)?) {
                (Some(x), Some(y), Some(z)) => Ok(Some([x, y, z])),
                (None, None, None) => Ok(None),
                _ => Err(Error::Parse {
                    line: row,
                    message: format!("partial vector starting at {}", SENSOR_COLUMNS[c]),
                }),
            }
        };
        out.records.push(SensorSample {
            time: Timestamp(time),
            accel: [required(1)?, required(2)?, required(3)?],
            gyro: triple(4)?,
            mag: triple(7)?,
            pressure_hpa: cell(10)?,
            temperature_c: cell(11)?,
            humidity_rh: cell(12)?,
            co2_ppm: cell(13)?,
        });
    }
    out.warnings.resorted_rows = out
        .records
        .windows(2)
        .filter(|w| w[1].time < w[0].time)
        .count();
    if out.warnings.resorted_rows > 0 {
        log::warn!("{} sensor rows out of time order, re-sorted", out.warnings.resorted_rows);
        out.records.sort_by_key(|s| s.time);
    }
    Ok(out)
}

pub fn read_sensor_csv(path: &Path) -> Result<Parsed<SensorSample>> {
    parse_sensor_csv(open(path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sensor_csv<W: Write>(w: W, samples: &[SensorSample]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SENSOR_COLUMNS)?;
    for s in samples {
        let g = s.gyro.map(|v| v.map(Some)).unwrap_or([None; 3]);
        let m = s.mag.map(|v| v.map(Some)).unwrap_or([None; 3]);
        wtr.write_record([
            s.time.ms().to_string(),
            s.accel[0].to_string(),
            s.accel[1].to_string(),
            s.accel[2].to_string(),
            fmt_opt(g[0]),
            fmt_opt(g[1]),
            fmt_opt(g[2]),
            fmt_opt(m[0]),
            fmt_opt(m[1]),
            fmt_opt(m[2]),
            fmt_opt(s.pressure_hpa),
            fmt_opt(s.temperature_c),
            fmt_opt(s.humidity_rh),
            fmt_opt(s.co2_ppm),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accel_only_rows() {
        let text = "time_ms,ax,ay,az\n0,0,0,9.81\n10,0,0,9.8\n20,0.1,0,9.7\n30,0,0.1,9.9\n";
        let parsed = parse_sensor_csv(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 4);
        assert!(parsed.records.iter().all(|s| s.gyro.is_none()
            && s.mag.is_none()
            && s.pressure_hpa.is_none()
            && s.co2_ppm.is_none()));
    }

    #[test]
    fn all_channels() {
        let text = "time_ms,ax,ay,az,gx,gy,gz,mx,my,mz,pressure_hpa,temp_c,humidity_rh,co2_ppm\n\
                    0,0,0,9.81,0.1,0.2,0.3,20,-5,40,1013.2,24.5,40,600\n";
        let parsed = parse_sensor_csv(text.as_bytes()).unwrap();
        let s = &parsed.records[0];
        assert_eq!(s.gyro, Some([0.1, 0.2, 0.3]));
        assert_eq!(s.mag, Some([20.0, -5.0, 40.0]));
        assert_eq!(s.pressure_hpa, Some(1013.2));
        assert_eq!(s.temperature_c, Some(24.5));
        assert_eq!(s.humidity_rh, Some(40.0));
        assert_eq!(s.co2_ppm, Some(600.0));
    }

    #[test]
    fn shuffled_rows_resorted_like_presorted() {
        let sorted = "time_ms,ax,ay,az\n0,0,0,1\n10,0,0,2\n20,0,0,3\n30,0,0,4\n";
        let shuffled = "time_ms,ax,ay,az\n20,0,0,3\n0,0,0,1\n30,0,0,4\n10,0,0,2\n";
        let a = parse_sensor_csv(sorted.as_bytes()).unwrap();
        let b = parse_sensor_csv(shuffled.as_bytes()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.warnings.resorted_rows, 0);
        assert_eq!(b.warnings.resorted_rows, 2);
    }

    #[test]
    fn missing_required_column() {
        let text = "time_ms,ax,ay\n0,0,0\n";
        assert!(matches!(
            parse_sensor_csv(text.as_bytes()),
            Err(Error::Schema(m)) if m.contains("az")
        ));
    }

    #[test]
    fn bad_cell_reports_row() {
        let text = "time_ms,ax,ay,az\n0,0,0,1\n10,0,zz,1\n";
        match parse_sensor_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_columns_counted() {
        let text = "time_ms,ax,ay,az,lux\n0,0,0,1,300\n";
        let parsed = parse_sensor_csv(text.as_bytes()).unwrap();
        assert_eq!(parsed.warnings.unknown_fields, 1);
    }
}
