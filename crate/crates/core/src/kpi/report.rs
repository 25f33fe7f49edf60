//! The KPI report: a session block plus one row per minute, as JSON and
//! as a flat CSV for plotting.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_kpis, rolling_mean, KpiContext, KpiSeries, PieceCounts};
use crate::availability::{DowntimeEvent, Thresholds};
use crate::counting::{minute_count, throughput, EdgeCountSeries, SpeedEstimate};
use crate::error::{Error, Result};
use crate::ingest::{read_to_string, SensorSample};

pub const ROLLING_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilitySource {
    /// Classified from motor vibration.
    Sensor,
    /// Taken from recorded stop intervals.
    Ledger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionBlock {
    pub session_ms: u64,
    pub minutes: usize,
    pub total_count_edge: u32,
    pub good_count_edge: u32,
    pub availability_source: AvailabilitySource,
    pub thresholds: Option<Thresholds>,
    pub availability: f64,
    pub performance: Option<f64>,
    pub performance_clamped: Option<f64>,
    pub quality: f64,
    pub oee: Option<f64>,
    pub oee_clamped: Option<f64>,
    pub t_planned_s: f64,
    pub t_operating_s: f64,
    pub t_downtime_s: f64,
    pub tau_ideal_s: f64,
    pub counts: PieceCounts,
    pub n_stops: usize,
    pub count_imbalance: bool,
    /// Some minute had performance above 1.
    pub performance_anomaly: bool,
    pub data_gap_minutes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteRow {
    pub minute: usize,
    pub start_ms: u64,
    pub duration_s: f64,
    pub partial: bool,
    pub data_gap: bool,
    pub q_total: Option<u64>,
    pub q_good: Option<u64>,
    pub q_bad: Option<u64>,
    pub cum_total: u64,
    pub cum_good: u64,
    pub camera_total: Option<u32>,
    pub camera_good: Option<u32>,
    pub t_downtime_s: f64,
    pub availability: f64,
    pub performance: Option<f64>,
    pub performance_clamped: Option<f64>,
    pub quality: Option<f64>,
    pub oee: Option<f64>,
    pub oee_clamped: Option<f64>,
    pub oee_rolling: Option<f64>,
    pub throughput_ppm: Option<f64>,
    pub speed_mps: Option<f64>,
    pub count_imbalance: bool,
    pub quality_vacuous: bool,
    pub temperature_c: Option<f64>,
    pub humidity_rh: Option<f64>,
    pub pressure_hpa: Option<f64>,
    pub co2_ppm: Option<f64>,
    pub gyro_rms: Option<f64>,
    pub mag_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub session: SessionBlock,
    pub minutes: Vec<MinuteRow>,
    pub downtime_events: Vec<DowntimeEvent>,
    /// Track dump file next to the report, if one was written.
    #[serde(default)]
    pub track_dump: Option<String>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

pub struct ReportInputs<'a> {
    pub total: &'a EdgeCountSeries,
    pub good: &'a EdgeCountSeries,
    pub downtime: &'a [DowntimeEvent],
    pub ctx: KpiContext,
    pub availability_source: AvailabilitySource,
    pub thresholds: Option<Thresholds>,
    pub speed: Option<&'a SpeedEstimate>,
    pub sensor: &'a [SensorSample],
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }
    fn get(self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default, Clone, Copy)]
struct Environment {
    temperature: Mean,
    humidity: Mean,
    pressure: Mean,
    co2: Mean,
    gyro_sq: Mean,
    mag: Mean,
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn environment_by_minute(samples: &[SensorSample], n: usize) -> Vec<Environment> {
    let mut env = vec![Environment::default(); n];
    for s in samples {
        let Some(e) = env.get_mut(s.time.minute_index()) else { continue };
        let add = |m: &mut Mean, v: Option<f64>| {
            if let Some(v) = v {
                m.add(v)
            }
        };
        add(&mut e.temperature, s.temperature_c);
        add(&mut e.humidity, s.humidity_rh);
        add(&mut e.pressure, s.pressure_hpa);
        add(&mut e.co2, s.co2_ppm);
        add(&mut e.gyro_sq, s.gyro.map(|g| norm(g).powi(2)));
        add(&mut e.mag, s.mag.map(norm));
    }
    env
}

impl Report {
    pub fn build(inputs: &ReportInputs) -> Result<Report> {
        let ctx = &inputs.ctx;
        let kpis: KpiSeries = compute_kpis(inputs.total, inputs.good, inputs.downtime, ctx)?;
        let n = minute_count(ctx.session_ms);
        let env = environment_by_minute(inputs.sensor, n);

        let mut rows = Vec::with_capacity(n);
        for (m, k) in kpis.minutes.iter().enumerate() {
            let total = &inputs.total.minutes[m];
            let good = &inputs.good.minutes[m];
            let gap = total.count.is_none() || good.count.is_none();
            let known = |v: Option<f64>| if gap { None } else { v };
            let e = env[m];
            rows.push(MinuteRow {
                minute: m,
                start_ms: m as u64 * crate::counting::MINUTE_MS,
                duration_s: total.duration_s,
                partial: total.partial,
                data_gap: gap,
                q_total: total.count,
                q_good: if gap { None } else { Some(k.counts.q_good) },
                q_bad: if gap { None } else { Some(k.counts.q_bad) },
                cum_total: total.cumulative,
                cum_good: good.cumulative,
                camera_total: total.active_camera.map(|c| c.get()),
                camera_good: good.active_camera.map(|c| c.get()),
                t_downtime_s: k.t_downtime_s,
                availability: k.availability,
                performance: known(k.performance),
                performance_clamped: known(k.performance_clamped),
                quality: known(Some(k.quality)),
                oee: known(k.oee),
                oee_clamped: known(k.oee_clamped),
                oee_rolling: None,
                throughput_ppm: None,
                speed_mps: inputs.speed.and_then(|s| s.median_mps.get(m).copied().flatten()),
                count_imbalance: k.count_imbalance,
                quality_vacuous: k.quality_vacuous,
                temperature_c: e.temperature.get(),
                humidity_rh: e.humidity.get(),
                pressure_hpa: e.pressure.get(),
                co2_ppm: e.co2.get(),
                gyro_rms: e.gyro_sq.get().map(f64::sqrt),
                mag_mean: e.mag.get(),
            });
        }
        let oee: Vec<Option<f64>> = rows.iter().map(|r| r.oee).collect();
        for (row, smooth) in rows.iter_mut().zip(rolling_mean(&oee, ROLLING_WINDOW)) {
            row.oee_rolling = smooth;
        }
        for (row, rate) in rows.iter_mut().zip(throughput(inputs.total, 1)) {
            row.throughput_ppm = rate;
        }

        let s = &kpis.session;
        let mut data_gap_minutes: Vec<usize> = rows.iter().filter(|r| r.data_gap).map(|r| r.minute).collect();
        data_gap_minutes.dedup();
        let performance_anomaly = rows.iter().any(|r| r.performance.is_some_and(|p| p > 1.0));
        Ok(Report {
            session: SessionBlock {
                session_ms: ctx.session_ms,
                minutes: n,
                total_count_edge: inputs.total.edge_id,
                good_count_edge: inputs.good.edge_id,
                availability_source: inputs.availability_source,
                thresholds: inputs.thresholds,
                availability: s.availability,
                performance: s.performance,
                performance_clamped: s.performance_clamped,
                quality: s.quality,
                oee: s.oee,
                oee_clamped: s.oee_clamped,
                t_planned_s: s.t_planned_s,
                t_operating_s: s.t_operating_s,
                t_downtime_s: s.t_downtime_s,
                tau_ideal_s: s.tau_ideal_s,
                counts: s.counts,
                n_stops: inputs.downtime.len(),
                count_imbalance: s.count_imbalance,
                performance_anomaly,
                data_gap_minutes,
            },
            minutes: rows,
            downtime_events: inputs.downtime.to_vec(),
            track_dump: None,
            warnings: Vec::new(),
        })
    }

    pub fn has_data_gaps(&self) -> bool {
        !self.session.data_gap_minutes.is_empty()
    }

    pub fn to_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    pub fn from_json<R: Read>(r: R) -> Result<Report> {
        serde_json::from_reader(r).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Report> {
        let text = read_to_string(path)?;
        Report::from_json(text.as_bytes())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.minutes {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Short human-readable summary; percentages only here.
    pub fn summary(&self) -> String {
        let s = &self.session;
        let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{:.1}%", v * 100.0));
        let mut text = format!(
            "minutes={} A={} P={} Q={} OEE={} pieces={} good={} downtime={:.1}s stops={}",
            s.minutes,
            pct(Some(s.availability)),
            pct(s.performance),
            pct(Some(s.quality)),
            pct(s.oee),
            s.counts.q_total,
            s.counts.q_good,
            s.t_downtime_s,
            s.n_stops
        );
        if s.performance_anomaly {
            text.push_str(" [performance above 1 in some minutes]");
        }
        if !s.data_gap_minutes.is_empty() {
            text.push_str(&format!(" [data gaps in {} minutes]", s.data_gap_minutes.len()));
        }
        text
    }
}
