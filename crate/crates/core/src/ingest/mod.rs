//! Readers and writers for the input streams, plus the time-ordered merge.

pub mod detections;
pub mod ledger;
pub mod merge;
pub mod sensor;
pub mod topology;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::error::{Error, Result};

pub use detections::{parse_detections, read_detections, write_detections};
pub use ledger::{parse_ledger, read_ledger, GroundTruthLedger};
pub use merge::{merge_streams, MergedEvent};
pub use sensor::{parse_sensor_csv, read_sensor_csv, write_sensor_csv, SensorSample};
pub use topology::{load_topology, parse_topology, LineTopology};

/// Non-fatal findings while reading an input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestWarnings {
    pub unknown_fields: usize,
    pub resorted_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub warnings: IngestWarnings,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            warnings: IngestWarnings::default(),
        }
    }
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
