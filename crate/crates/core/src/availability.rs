//! Run/stop classification from motor vibration, and downtime.
//!
//! The feature is the standard deviation of the acceleration magnitude in
//! a centred sliding window. States switch with hysteresis, flips shorter
//! than `min_state_duration_s` are suppressed, and each surviving
//! transition is re-located at the most likely variance change point
//! within one window of where hysteresis fired.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};
use crate::ingest::ledger::StopInterval;
use crate::ingest::SensorSample;
use crate::model::Timestamp;

const HIST_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Manual,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AvailabilityConfig {
    pub window_s: f64,
    /// Enter running at or above this feature value (m/s²). Manual mode only.
    pub run_threshold: f64,
    /// Enter stopped at or below this feature value (m/s²). Manual mode only.
    pub stop_threshold: f64,
    pub min_state_duration_s: f64,
    pub threshold_mode: ThresholdMode,
}

impl Default for AvailabilityConfig {
    fn default() -> Self {
        AvailabilityConfig {
            window_s: 1.0,
            run_threshold: 0.25,
            stop_threshold: 0.1,
            min_state_duration_s: 2.0,
            threshold_mode: ThresholdMode::Auto,
        }
    }
}

impl AvailabilityConfig {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return Err(ValidationError::new("availability.window_s", "must be > 0"));
        }
        if !(self.min_state_duration_s.is_finite() && self.min_state_duration_s >= 0.0) {
            return Err(ValidationError::new(
                "availability.min_state_duration_s",
                "must be >= 0",
            ));
        }
        if !(self.stop_threshold.is_finite()
            && self.run_threshold.is_finite()
            && self.stop_threshold < self.run_threshold)
        {
            return Err(ValidationError::new(
                "availability.stop_threshold",
                "stop_threshold must be below run_threshold",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunState {
    Stopped = 0,
    Running = 1,
}

impl RunState {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

/// Piecewise-constant line state, stored as its change points. The first
/// entry holds from session start; each later entry differs from the one
/// before it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunStopSignal {
    changes: Vec<(Timestamp, RunState)>,
}

impl RunStopSignal {
    pub fn new(changes: Vec<(Timestamp, RunState)>) -> Result<Self, ValidationError> {
        if changes.is_empty() {
            return Err(ValidationError::new("signal", "empty signal"));
        }
        for w in changes.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ValidationError::new("signal", "change times must increase"));
            }
            if w[1].1 == w[0].1 {
                return Err(ValidationError::new("signal", "consecutive duplicate state"));
            }
        }
        Ok(RunStopSignal { changes })
    }

    /// Build from stop intervals (e.g. a ledger): running outside them.
    pub fn from_stops(stops: &[StopInterval]) -> Self {
        let mut changes = vec![(Timestamp::ZERO, RunState::Running)];
        for s in stops {
            if s.t_stop == Timestamp::ZERO {
                changes[0].1 = RunState::Stopped;
            } else if changes.last().map(|c| c.1) != Some(RunState::Stopped) {
                changes.push((s.t_stop, RunState::Stopped));
            }
            changes.push((s.t_start, RunState::Running));
        }
        // collapse any accidental duplicates from touching intervals
        changes.dedup_by(|b, a| a.1 == b.1);
        RunStopSignal { changes }
    }

    pub fn changes(&self) -> &[(Timestamp, RunState)] {
        &self.changes
    }

    pub fn state_at(&self, t: Timestamp) -> RunState {
        let idx = self.changes.partition_point(|c| c.0 <= t);
        if idx == 0 {
            self.changes[0].1
        } else {
            self.changes[idx - 1].1
        }
    }

    /// Milliseconds spent running within `[from, to)`.
    pub fn running_ms(&self, from: Timestamp, to: Timestamp) -> u64 {
        if to <= from {
            return 0;
        }
        let mut total = 0;
        for (i, &(start, state)) in self.changes.iter().enumerate() {
            if state != RunState::Running {
                continue;
            }
            let seg_start = if i == 0 { Timestamp::ZERO } else { start };
            let seg_end = self
                .changes
                .get(i + 1)
                .map_or(Timestamp(u64::MAX), |c| c.0);
            let lo = seg_start.max(from);
            let hi = seg_end.min(to);
            if hi > lo {
                total += hi.0 - lo.0;
            }
        }
        total
    }

    pub fn write_csv<W: Write>(&self, w: W, session_end: Timestamp) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time_ms", "state"])?;
        let mut last = RunState::Stopped;
        for (i, &(t, s)) in self.changes.iter().enumerate() {
            if i > 0 {
                // step shape: close the previous level right before the change
                wtr.write_record([t.ms().saturating_sub(1).to_string(), last.as_u8().to_string()])?;
            }
            let t = if i == 0 { Timestamp::ZERO } else { t };
            wtr.write_record([t.ms().to_string(), s.as_u8().to_string()])?;
            last = s;
        }
        wtr.write_record([session_end.ms().to_string(), last.as_u8().to_string()])?;
        wtr.flush()?;
        Ok(())
    }
}

/// Contiguous stopped interval `[t_stop, t_start)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DowntimeEvent {
    pub t_stop: Timestamp,
    pub t_start: Timestamp,
}

impl DowntimeEvent {
    pub fn duration_s(&self) -> f64 {
        self.t_start.secs_since(self.t_stop)
    }
}

/// Population standard deviation of the acceleration magnitude.
/// An empty window has no spread and yields 0.
pub fn vibration_feature(window: &[SensorSample]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let n = window.len() as f64;
    let mags: Vec<f64> = window.iter().map(SensorSample::accel_magnitude).collect();
    let mean = mags.iter().sum::<f64>() / n;
    (mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Prefix sums of x and x² for O(1) range moments.
struct Moments {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn new(values: &[f64]) -> Self {
        let mut s1 = Vec::with_capacity(values.len() + 1);
        let mut s2 = Vec::with_capacity(values.len() + 1);
        s1.push(0.0);
        s2.push(0.0);
        for v in values {
            s1.push(s1.last().unwrap() + v);
            s2.push(s2.last().unwrap() + v * v);
        }
        Moments { s1, s2 }
    }

    /// Population variance over `[lo, hi)`.
    fn variance(&self, lo: usize, hi: usize) -> f64 {
        let n = (hi - lo) as f64;
        let mean = (self.s1[hi] - self.s1[lo]) / n;
        ((self.s2[hi] - self.s2[lo]) / n - mean * mean).max(0.0)
    }
}

/// Centred sliding-window feature for every sample.
pub fn feature_series(samples: &[SensorSample], window_s: f64) -> Vec<f64> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mags: Vec<f64> = samples.iter().map(SensorSample::accel_magnitude).collect();
    // centre before accumulating to limit cancellation
    let reference = mags.iter().sum::<f64>() / mags.len() as f64;
    let centred: Vec<f64> = mags.iter().map(|m| m - reference).collect();
    let moments = Moments::new(&centred);
    let half_ms = (window_s * 500.0).round() as u64;
    let (mut lo, mut hi) = (0usize, 0usize);
    samples
        .iter()
        .map(|s| {
            let t = s.time.ms();
            while samples[lo].time.ms() + half_ms < t {
                lo += 1;
            }
            while hi < samples.len() && samples[hi].time.ms() <= t + half_ms {
                hi += 1;
            }
            moments.variance(lo, hi).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub run: f64,
    pub stop: f64,
    pub mode: ThresholdMode,
}

/// Two-class split of the feature histogram maximizing between-class
/// variance. Thresholds sit 10% of the class-mean separation either side
/// of the split.
pub fn auto_thresholds(features: &[f64]) -> Result<Thresholds> {
    let unimodal = || {
        Error::Calibration(
            "vibration feature is unimodal; set threshold_mode = \"manual\" with explicit thresholds"
                .into(),
        )
    };
    let (min, max) = features
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    if features.len() < 2 || !(max > min) {
        return Err(unimodal());
    }
    let width = (max - min) / HIST_BINS as f64;
    let bin_of = |f: f64| (((f - min) / width) as usize).min(HIST_BINS - 1);
    let mut hist = [0u64; HIST_BINS];
    for &f in features {
        hist[bin_of(f)] += 1;
    }
    let total = features.len() as f64;
    let centre = |k: usize| min + (k as f64 + 0.5) * width;
    let grand: f64 = hist.iter().enumerate().map(|(k, &c)| c as f64 * centre(k)).sum();

    // between-class variance for a split after bin k
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut scores = Vec::with_capacity(HIST_BINS - 1);
    for (k, &count) in hist.iter().enumerate().take(HIST_BINS - 1) {
        w0 += count as f64;
        sum0 += count as f64 * centre(k);
        let w1 = total - w0;
        let score = if w0 == 0.0 || w1 == 0.0 {
            0.0
        } else {
            let m0 = sum0 / w0;
            let m1 = (grand - sum0) / w1;
            w0 * w1 * (m0 - m1).powi(2)
        };
        scores.push(score);
    }
    let best = scores.iter().cloned().fold(0.0, f64::max);
    if best <= 0.0 {
        return Err(unimodal());
    }
    // an empty gap between modes gives a plateau of equal scores; take its middle
    let tol = best * 1e-12;
    let first = scores.iter().position(|&s| s >= best - tol).unwrap();
    let last = first
        + scores[first..]
            .iter()
            .take_while(|&&s| s >= best - tol)
            .count()
        - 1;
    let split = min + ((first + last) as f64 / 2.0 + 1.0) * width;

    let (mut n0, mut s0, mut q0, mut n1, mut s1, mut q1) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &f in features {
        if f < split {
            n0 += 1.0;
            s0 += f;
            q0 += f * f;
        } else {
            n1 += 1.0;
            s1 += f;
            q1 += f * f;
        }
    }
    if n0 == 0.0 || n1 == 0.0 {
        return Err(unimodal());
    }
    let (m0, m1) = (s0 / n0, s1 / n1);
    let within = ((q0 - n0 * m0 * m0).max(0.0) + (q1 - n1 * m1 * m1).max(0.0)) / (n0 + n1);
    let separation = m1 - m0;
    if separation < 3.0 * within.sqrt() {
        return Err(unimodal());
    }
    Ok(Thresholds {
        run: split + 0.1 * separation,
        stop: split - 0.1 * separation,
        mode: ThresholdMode::Auto,
    })
}

/// Most likely split of `values[lo..hi]` into two segments with distinct
/// variances. Returns the index of the first sample of the second segment.
fn variance_change_point(moments: &Moments, lo: usize, hi: usize) -> Option<usize> {
    const MIN_SEG: usize = 2;
    if hi < lo + 2 * MIN_SEG {
        return None;
    }
    let ll = |a: usize, b: usize| -> f64 {
        let n = (b - a) as f64;
        -0.5 * n * moments.variance(a, b).max(1e-18).ln()
    };
    (lo + MIN_SEG..=hi - MIN_SEG)
        .map(|k| (k, ll(lo, k) + ll(k, hi)))
        .fold(None, |best: Option<(usize, f64)>, (k, score)| match best {
            Some((_, s)) if s >= score => best,
            _ => Some((k, score)),
        })
        .map(|(k, _)| k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub signal: RunStopSignal,
    pub thresholds: Thresholds,
}

pub fn classify_run_stop(samples: &[SensorSample], cfg: &AvailabilityConfig) -> Result<Classification> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Contract("no sensor samples to classify".into()));
    }
    if samples.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::Contract("sensor samples must be time-sorted".into()));
    }
    let features = feature_series(samples, cfg.window_s);
    let thresholds = match cfg.threshold_mode {
        ThresholdMode::Manual => Thresholds {
            run: cfg.run_threshold,
            stop: cfg.stop_threshold,
            mode: ThresholdMode::Manual,
        },
        ThresholdMode::Auto => auto_thresholds(&features)?,
    };

    // hysteresis
    let mid = 0.5 * (thresholds.run + thresholds.stop);
    let mut state = if features[0] >= mid {
        RunState::Running
    } else {
        RunState::Stopped
    };
    let mut raw: Vec<(usize, RunState)> = vec![(0, state)];
    for (i, &f) in features.iter().enumerate().skip(1) {
        let next = match state {
            RunState::Stopped if f >= thresholds.run => RunState::Running,
            RunState::Running if f <= thresholds.stop => RunState::Stopped,
            s => s,
        };
        if next != state {
            raw.push((i, next));
            state = next;
        }
    }

    // debounce
    let last_time = samples[samples.len() - 1].time;
    let min_ms = (cfg.min_state_duration_s * 1000.0).round() as u64;
    let mut kept: Vec<(usize, RunState)> = vec![raw[0]];
    for (j, &(idx, s)) in raw.iter().enumerate().skip(1) {
        if s == kept.last().unwrap().1 {
            continue;
        }
        let end = raw.get(j + 1).map_or(last_time, |&(i, _)| samples[i].time);
        let lasts_to_end = j + 1 == raw.len();
        if lasts_to_end || end.ms() - samples[idx].time.ms() >= min_ms {
            kept.push((idx, s));
        }
    }

    // re-locate each transition at the variance change point
    let mags: Vec<f64> = samples.iter().map(SensorSample::accel_magnitude).collect();
    let reference = mags.iter().sum::<f64>() / mags.len() as f64;
    let centred: Vec<f64> = mags.iter().map(|m| m - reference).collect();
    let moments = Moments::new(&centred);
    let reach = (cfg.window_s * 1000.0).round() as u64;
    let mut refined: Vec<(usize, RunState)> = Vec::with_capacity(kept.len());
    refined.push(kept[0]);
    for j in 1..kept.len() {
        let (idx, s) = kept[j];
        let t = samples[idx].time.ms();
        let floor_idx = refined.last().unwrap().0 + 1;
        let ceil_idx = kept.get(j + 1).map_or(samples.len(), |&(i, _)| i);
        let lo = samples[..idx]
            .partition_point(|x| x.time.ms() + reach < t)
            .max(floor_idx);
        let hi = (idx + samples[idx..].partition_point(|x| x.time.ms() <= t + reach)).min(ceil_idx);
        let pick = variance_change_point(&moments, lo, hi)
            .filter(|&k| {
                // the quieter side must match the new state
                let before = moments.variance(lo, k);
                let after = moments.variance(k, hi);
                match s {
                    RunState::Stopped => after < before,
                    RunState::Running => after > before,
                }
            })
            .unwrap_or(idx);
        refined.push((pick, s));
    }

    let changes = refined
        .into_iter()
        .enumerate()
        .map(|(i, (idx, s))| (if i == 0 { Timestamp::ZERO } else { samples[idx].time }, s))
        .collect();
    Ok(Classification {
        signal: RunStopSignal::new(changes)?,
        thresholds,
    })
}

/// Maximal stopped intervals clipped to `[t0, t1)`.
pub fn downtime_events(signal: &RunStopSignal, session: (Timestamp, Timestamp)) -> Vec<DowntimeEvent> {
    let (t0, t1) = session;
    let changes = signal.changes();
    let mut out = Vec::new();
    for (i, &(start, state)) in changes.iter().enumerate() {
        if state != RunState::Stopped {
            continue;
        }
        let start = if i == 0 { t0 } else { start.max(t0) };
        let end = changes.get(i + 1).map_or(t1, |c| c.0.min(t1));
        if end > start {
            out.push(DowntimeEvent {
                t_stop: start,
                t_start: end,
            });
        }
    }
    out
}

/// Sum of stop durations, seconds.
pub fn total_downtime(events: &[DowntimeEvent]) -> f64 {
    events.iter().map(DowntimeEvent::duration_s).sum()
}

/// Stopped milliseconds of `events` inside `[from, to)`.
pub fn downtime_ms_within(events: &[DowntimeEvent], from: Timestamp, to: Timestamp) -> u64 {
    events
        .iter()
        .map(|e| {
            let lo = e.t_stop.max(from);
            let hi = e.t_start.min(to);
            hi.0.saturating_sub(lo.0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn samples_from(mags: &[f64], period_ms: u64) -> Vec<SensorSample> {
        mags.iter()
            .enumerate()
            .map(|(i, &m)| SensorSample::accel_only(Timestamp(i as u64 * period_ms), [0.0, 0.0, m]))
            .collect()
    }

    /// Square wave: `on_s` running then `off_s` stopped, repeated.
    fn square_wave(on_s: u64, off_s: u64, cycles: u64, seed: u64) -> (Vec<SensorSample>, Vec<StopInterval>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = Normal::new(0.0, 0.5).unwrap();
        let stop = Normal::new(0.0, 0.02).unwrap();
        let period = (on_s + off_s) * 1000;
        let total = period * cycles;
        let mut stops = Vec::new();
        for c in 0..cycles {
            stops.push(StopInterval {
                t_stop: Timestamp(c * period + on_s * 1000),
                t_start: Timestamp((c + 1) * period),
            });
        }
        let samples = (0..total / 10)
            .map(|k| {
                let t = k * 10;
                let stopped = (t % period) >= on_s * 1000;
                let noise = if stopped { stop.sample(&mut rng) } else { run.sample(&mut rng) };
                SensorSample::accel_only(Timestamp(t), [0.0, 0.0, 9.81 + noise])
            })
            .collect();
        (samples, stops)
    }

    #[test]
    fn feature_examples() {
        let constant = samples_from(&[9.81; 20], 10);
        assert_eq!(vibration_feature(&constant), 0.0);
        let alt = samples_from(&[9.0, 11.0, 9.0, 11.0], 10);
        assert!((vibration_feature(&alt) - 1.0).abs() < 1e-12);
        assert_eq!(vibration_feature(&[]), 0.0);
    }

    #[test]
    fn running_feature_exceeds_stopped() {
        let (samples, _) = square_wave(60, 30, 1, 3);
        let running = vibration_feature(&samples[1000..2000]);
        let stopped = vibration_feature(&samples[7000..8000]);
        assert!(running > stopped);
    }

    #[test]
    fn quiet_session_is_all_stopped() {
        let samples = samples_from(&[9.81; 1000], 10);
        let cfg = AvailabilityConfig {
            threshold_mode: ThresholdMode::Manual,
            ..Default::default()
        };
        let c = classify_run_stop(&samples, &cfg).unwrap();
        assert_eq!(c.signal.changes(), &[(Timestamp::ZERO, RunState::Stopped)]);
        let ev = downtime_events(&c.signal, (Timestamp(0), Timestamp(10_000)));
        assert_eq!(ev.len(), 1);
        // no running phase ever ended, so no stop transition
        assert_eq!(c.signal.changes().iter().filter(|c| c.1 == RunState::Stopped).count(), 1);
    }

    #[test]
    fn quiet_session_auto_mode_is_calibration_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = Normal::new(0.0, 0.02).unwrap();
        let mags: Vec<f64> = (0..3000).map(|_| 9.81 + n.sample(&mut rng)).collect();
        let err = classify_run_stop(&samples_from(&mags, 10), &AvailabilityConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Calibration(_)));
    }

    #[test]
    fn square_wave_transitions_near_truth() {
        let (samples, stops) = square_wave(60, 30, 4, 11);
        let cfg = AvailabilityConfig::default();
        let c = classify_run_stop(&samples, &cfg).unwrap();
        let truth = RunStopSignal::from_stops(&stops);
        // the final "start" lands at session end and is not observable
        let expected: Vec<_> = truth.changes().iter().filter(|c| c.0.ms() < 360_000).collect();
        assert_eq!(c.signal.changes().len(), expected.len());
        for (got, want) in c.signal.changes().iter().zip(expected) {
            assert_eq!(got.1, want.1);
            let diff = got.0.ms().abs_diff(want.0.ms());
            assert!(diff <= 1000, "transition at {} vs {}", got.0, want.0);
        }
    }

    #[test]
    fn short_blip_is_debounced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let run = Normal::new(0.0, 0.5).unwrap();
        let stop = Normal::new(0.0, 0.02).unwrap();
        // 30 s running, 30 s stopped with a 0.5 s blip at 45 s, 30 s running
        let mags: Vec<f64> = (0..9000)
            .map(|k| {
                let t = k * 10;
                let running = t < 30_000 || (45_000..45_500).contains(&t) || t >= 60_000;
                9.81 + if running { run.sample(&mut rng) } else { stop.sample(&mut rng) }
            })
            .collect();
        let c = classify_run_stop(&samples_from(&mags, 10), &AvailabilityConfig::default()).unwrap();
        let states: Vec<RunState> = c.signal.changes().iter().map(|c| c.1).collect();
        assert_eq!(states, vec![RunState::Running, RunState::Stopped, RunState::Running]);
    }

    #[test]
    fn downtime_examples() {
        let signal = RunStopSignal::new(vec![
            (Timestamp(0), RunState::Running),
            (Timestamp(10_000), RunState::Stopped),
            (Timestamp(20_000), RunState::Running),
            (Timestamp(50_000), RunState::Stopped),
            (Timestamp(55_000), RunState::Running),
        ])
        .unwrap();
        let ev = downtime_events(&signal, (Timestamp(0), Timestamp(60_000)));
        assert_eq!(ev.len(), 2);
        assert_eq!(total_downtime(&ev), 15.0);

        let running = RunStopSignal::new(vec![(Timestamp(0), RunState::Running)]).unwrap();
        assert!(downtime_events(&running, (Timestamp(0), Timestamp(60_000))).is_empty());

        let tail = RunStopSignal::new(vec![
            (Timestamp(0), RunState::Running),
            (Timestamp(55_000), RunState::Stopped),
        ])
        .unwrap();
        let ev = downtime_events(&tail, (Timestamp(0), Timestamp(60_000)));
        assert_eq!(
            ev,
            vec![DowntimeEvent {
                t_stop: Timestamp(55_000),
                t_start: Timestamp(60_000)
            }]
        );
        assert_eq!(total_downtime(&[]), 0.0);
    }

    #[test]
    fn downtime_plus_running_is_session() {
        let signal = RunStopSignal::new(vec![
            (Timestamp(0), RunState::Stopped),
            (Timestamp(7_000), RunState::Running),
            (Timestamp(31_000), RunState::Stopped),
            (Timestamp(44_000), RunState::Running),
        ])
        .unwrap();
        let session = (Timestamp(0), Timestamp(90_000));
        let down = total_downtime(&downtime_events(&signal, session));
        let up = signal.running_ms(session.0, session.1) as f64 / 1000.0;
        assert_eq!(down + up, 90.0);
    }

    #[test]
    fn from_stops_round_trip() {
        let stops = vec![
            StopInterval { t_stop: Timestamp(0), t_start: Timestamp(5_000) },
            StopInterval { t_stop: Timestamp(20_000), t_start: Timestamp(30_000) },
        ];
        let s = RunStopSignal::from_stops(&stops);
        let ev = downtime_events(&s, (Timestamp(0), Timestamp(60_000)));
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].t_stop, Timestamp(0));
        assert_eq!(ev[1].t_start, Timestamp(30_000));
    }

    #[test]
    fn auto_mode_is_scale_invariant() {
        let (samples, _) = square_wave(40, 20, 3, 21);
        let scaled: Vec<SensorSample> = samples
            .iter()
            .map(|s| SensorSample::accel_only(s.time, s.accel.map(|v| v * 10.0)))
            .collect();
        let cfg = AvailabilityConfig::default();
        let a = classify_run_stop(&samples, &cfg).unwrap();
        let b = classify_run_stop(&scaled, &cfg).unwrap();
        assert_eq!(a.signal, b.signal);
    }

    #[test]
    fn reclassifying_reconstructed_signal_is_idempotent() {
        let (samples, _) = square_wave(40, 20, 3, 8);
        let cfg = AvailabilityConfig::default();
        let first = classify_run_stop(&samples, &cfg).unwrap().signal;
        // synthesize a clean signal from the classification and classify again
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let run = Normal::new(0.0, 0.5).unwrap();
        let stop = Normal::new(0.0, 0.02).unwrap();
        let rebuilt: Vec<SensorSample> = samples
            .iter()
            .map(|s| {
                let noise = match first.state_at(s.time) {
                    RunState::Running => run.sample(&mut rng),
                    RunState::Stopped => stop.sample(&mut rng),
                };
                SensorSample::accel_only(s.time, [0.0, 0.0, 9.81 + noise])
            })
            .collect();
        let second = classify_run_stop(&rebuilt, &cfg).unwrap().signal;
        assert_eq!(first.changes().len(), second.changes().len());
        for (a, b) in first.changes().iter().zip(second.changes()) {
            assert_eq!(a.1, b.1);
            assert!(a.0.ms().abs_diff(b.0.ms()) <= 10);
        }
    }

    #[test]
    fn signal_csv_dump() {
        let signal = RunStopSignal::new(vec![
            (Timestamp(0), RunState::Running),
            (Timestamp(10_000), RunState::Stopped),
        ])
        .unwrap();
        let mut buf = Vec::new();
        signal.write_csv(&mut buf, Timestamp(20_000)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "time_ms,state\n0,1\n9999,1\n10000,0\n20000,0\n");
    }
}
