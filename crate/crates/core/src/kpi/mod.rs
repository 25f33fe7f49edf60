//! OEE and its components over minute bins and the whole session.

pub mod evaluate;
pub mod report;

use serde::{Deserialize, Serialize};

use crate::availability::{downtime_ms_within, DowntimeEvent};
use crate::counting::{minute_bounds, minute_count, EdgeCountSeries};
use crate::error::{Error, Result};
use crate::model::Timestamp;

pub use evaluate::{evaluate, EvalMinute, EvalSeries};
pub use report::{AvailabilitySource, MinuteRow, Report, ReportInputs, SessionBlock};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceCounts {
    pub q_good: u64,
    pub q_bad: u64,
    pub q_total: u64,
}

impl PieceCounts {
    pub fn new(q_good: u64, q_bad: u64) -> Self {
        PieceCounts {
            q_good,
            q_bad,
            q_total: q_good + q_bad,
        }
    }
}

/// Counts from pre-QA (`total`) and post-QA (`good`) crossings. Pieces in
/// transit between the two can make `good` exceed `total` in a window;
/// then `good` is clamped and the second value is `true`.
pub fn piece_counts(total: u64, good: u64) -> (PieceCounts, bool) {
    if good > total {
        (PieceCounts::new(total, 0), true)
    } else {
        (PieceCounts::new(good, total - good), false)
    }
}

/// Counts of two series over minutes `[from, to)`.
pub fn piece_counts_between(
    total: &EdgeCountSeries,
    good: &EdgeCountSeries,
    from: usize,
    to: usize,
) -> (PieceCounts, bool) {
    piece_counts(total.count_between(from, to), good.count_between(from, to))
}

pub fn availability_ratio(t_planned_s: f64, t_downtime_s: f64) -> Result<f64> {
    if !(t_planned_s > 0.0) || !(0.0..=t_planned_s).contains(&t_downtime_s) {
        return Err(Error::Contract(format!(
            "availability needs 0 <= downtime ({t_downtime_s} s) <= planned ({t_planned_s} s) and planned > 0"
        )));
    }
    Ok((t_planned_s - t_downtime_s) / t_planned_s)
}

/// Ideal cycle time × pieces / operating time. May exceed 1. `None` when
/// there was no operating time.
pub fn performance_ratio(tau_ideal_s: f64, q_total: u64, t_operating_s: f64) -> Option<f64> {
    (t_operating_s > 0.0).then(|| tau_ideal_s * q_total as f64 / t_operating_s)
}

/// Good over total; 1.0 for an empty window.
pub fn quality_ratio(counts: &PieceCounts) -> f64 {
    if counts.q_total == 0 {
        1.0
    } else {
        counts.q_good as f64 / counts.q_total as f64
    }
}

/// `(a·p·q, a·min(p,1)·q)`.
pub fn oee(a: f64, p: f64, q: f64) -> (f64, f64) {
    (a * p * q, a * p.min(1.0) * q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OeeBreakdown {
    pub availability: f64,
    /// Absent when there was no operating time.
    pub performance: Option<f64>,
    pub performance_clamped: Option<f64>,
    pub quality: f64,
    pub oee: Option<f64>,
    pub oee_clamped: Option<f64>,
    pub t_planned_s: f64,
    pub t_operating_s: f64,
    pub t_downtime_s: f64,
    pub tau_ideal_s: f64,
    /// Minute bins `[start, end)` this breakdown covers.
    pub window: (usize, usize),
    pub counts: PieceCounts,
    /// Post-QA count exceeded pre-QA count and was clamped.
    pub count_imbalance: bool,
    /// Quality defaulted to 1.0 because no pieces were counted.
    pub quality_vacuous: bool,
}

impl OeeBreakdown {
    pub fn performance_anomaly(&self) -> bool {
        self.performance.is_some_and(|p| p > 1.0)
    }
}

pub fn breakdown(
    t_planned_s: f64,
    t_downtime_s: f64,
    tau_ideal_s: f64,
    counts: PieceCounts,
    count_imbalance: bool,
    window: (usize, usize),
) -> Result<OeeBreakdown> {
    let availability = availability_ratio(t_planned_s, t_downtime_s)?;
    let t_operating_s = t_planned_s - t_downtime_s;
    let performance = performance_ratio(tau_ideal_s, counts.q_total, t_operating_s);
    let quality = quality_ratio(&counts);
    let products = performance.map(|p| oee(availability, p, quality));
    Ok(OeeBreakdown {
        availability,
        performance,
        performance_clamped: performance.map(|p| p.min(1.0)),
        quality,
        oee: products.map(|o| o.0),
        oee_clamped: products.map(|o| o.1),
        t_planned_s,
        t_operating_s,
        t_downtime_s,
        tau_ideal_s,
        window,
        counts,
        count_imbalance,
        quality_vacuous: counts.q_total == 0,
    })
}

/// Per-minute and session KPIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSeries {
    pub minutes: Vec<OeeBreakdown>,
    pub session: OeeBreakdown,
}

impl KpiSeries {
    pub fn performance_anomaly(&self) -> bool {
        self.minutes.iter().any(OeeBreakdown::performance_anomaly)
    }

    pub fn oee_series(&self) -> Vec<Option<f64>> {
        self.minutes.iter().map(|m| m.oee).collect()
    }
}

/// Inputs shared by engine-derived and ledger-derived KPIs.
#[derive(Debug, Clone, Copy)]
pub struct KpiContext {
    pub session_ms: u64,
    /// Planned production time; defaults to the session length.
    pub planned_s: Option<f64>,
    pub tau_ideal_s: f64,
}

/// KPI stack from count series and downtime. Each minute's planned time is
/// its length; the session uses the planned production time, with
/// downtime counted inside it.
pub fn compute_kpis(
    total: &EdgeCountSeries,
    good: &EdgeCountSeries,
    downtime: &[DowntimeEvent],
    ctx: &KpiContext,
) -> Result<KpiSeries> {
    let n = minute_count(ctx.session_ms);
    let mut minutes = Vec::with_capacity(n);
    for m in 0..n {
        let (start, end) = minute_bounds(m, ctx.session_ms);
        let planned_ms = end.ms() - start.ms();
        let down_ms = downtime_ms_within(downtime, start, end);
        let (counts, imbalance) = piece_counts_between(total, good, m, m + 1);
        minutes.push(breakdown(
            planned_ms as f64 / 1000.0,
            down_ms as f64 / 1000.0,
            ctx.tau_ideal_s,
            counts,
            imbalance,
            (m, m + 1),
        )?);
    }
    let planned_s = ctx.planned_s.unwrap_or(ctx.session_ms as f64 / 1000.0);
    let planned_end = Timestamp((planned_s * 1000.0).round() as u64);
    let down_ms = downtime_ms_within(downtime, Timestamp::ZERO, planned_end);
    let (counts, imbalance) = piece_counts_between(total, good, 0, n);
    let session = breakdown(
        planned_s,
        (down_ms as f64 / 1000.0).min(planned_s),
        ctx.tau_ideal_s,
        counts,
        imbalance,
        (0, n),
    )?;
    Ok(KpiSeries { minutes, session })
}

/// Centred `k`-point mean ignoring absent values. Windows are truncated at
/// the ends; an even `k` is widened to the next odd size. A window with no
/// values is absent.
pub fn rolling_mean(series: &[Option<f64>], k: usize) -> Vec<Option<f64>> {
    let half = k.max(1) / 2;
    (0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(series.len());
            let (sum, n) = series[lo..hi]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn piece_count_examples() {
        assert_eq!(piece_counts(100, 95), (PieceCounts::new(95, 5), false));
        assert_eq!(piece_counts(0, 0).0, PieceCounts::default());
        let (c, flag) = piece_counts(10, 12);
        assert!(flag);
        assert_eq!(c, PieceCounts::new(10, 0));
    }

    #[test]
    fn availability_examples() {
        assert_eq!(availability_ratio(100.0, 15.0).unwrap(), 0.85);
        assert_eq!(availability_ratio(100.0, 0.0).unwrap(), 1.0);
        assert_eq!(availability_ratio(100.0, 100.0).unwrap(), 0.0);
        assert!(matches!(availability_ratio(100.0, 101.0), Err(Error::Contract(_))));
        assert!(availability_ratio(0.0, 0.0).is_err());
    }

    #[test]
    fn performance_examples() {
        assert!((performance_ratio(1.1, 100, 121.0).unwrap() - 0.909_090_909).abs() < 1e-6);
        assert_eq!(performance_ratio(1.1, 0, 60.0), Some(0.0));
        let p = performance_ratio(1.1, 60, 60.0).unwrap();
        assert!((p - 1.1).abs() < 1e-12 && p > 1.0);
        assert_eq!(performance_ratio(1.1, 5, 0.0), None);
    }

    #[test]
    fn quality_examples() {
        assert_eq!(quality_ratio(&PieceCounts::new(95, 5)), 0.95);
        assert_eq!(quality_ratio(&PieceCounts::default()), 1.0);
        assert_eq!(quality_ratio(&PieceCounts::new(100, 0)), 1.0);
    }

    #[test]
    fn oee_examples() {
        assert!((oee(0.9, 0.95, 0.98).0 - 0.8379).abs() < 1e-12);
        assert_eq!(oee(1.0, 1.0, 1.0).0, 1.0);
        assert_eq!(oee(0.0, 0.7, 0.9).0, 0.0);
        assert_eq!(oee(0.5, 1.2, 1.0), (0.6, 0.5));
    }

    #[test]
    fn stopped_minute_has_no_performance() {
        let b = breakdown(60.0, 60.0, 1.1, PieceCounts::default(), false, (0, 1)).unwrap();
        assert_eq!(b.availability, 0.0);
        assert_eq!(b.performance, None);
        assert_eq!(b.oee, None);
        assert!(b.quality_vacuous);
    }

    #[test]
    fn rolling_mean_examples() {
        let s = [Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0)];
        assert_eq!(rolling_mean(&s, 1), s.to_vec());
        assert_eq!(rolling_mean(&s, 5)[2], Some(3.0));
        assert_eq!(rolling_mean(&s, 5)[0], Some(2.0));
        let gap = [Some(1.0), None, Some(3.0)];
        assert_eq!(rolling_mean(&gap, 3)[1], Some(2.0));
        assert_eq!(rolling_mean(&[None, None], 3), vec![None, None]);
    }

    proptest! {
        #[test]
        fn rolling_mean_k1_is_identity(s in proptest::collection::vec(proptest::option::of(-1e6..1e6f64), 0..50)) {
            prop_assert_eq!(rolling_mean(&s, 1), s);
        }

        #[test]
        fn breakdown_identities(
            planned in 1.0..1e5f64,
            down_frac in 0.0..=1.0f64,
            good in 0u64..10_000,
            bad in 0u64..10_000,
            tau in 0.01..10.0f64,
        ) {
            let down = planned * down_frac;
            let b = breakdown(planned, down, tau, PieceCounts::new(good, bad), false, (0, 1)).unwrap();
            prop_assert_eq!(b.t_operating_s, b.t_planned_s - b.t_downtime_s);
            prop_assert_eq!(b.counts.q_total, b.counts.q_good + b.counts.q_bad);
            prop_assert!((0.0..=1.0).contains(&b.availability));
            prop_assert!((0.0..=1.0).contains(&b.quality));
            if let (Some(p), Some(o)) = (b.performance, b.oee) {
                prop_assert!(p >= 0.0);
                prop_assert!((o - b.availability * p * b.quality).abs() <= 1e-12);
            }
        }
    }
}
