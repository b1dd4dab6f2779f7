//! Tick records and the duration series built from them.
//!
//! Timestamps are carried as integer milliseconds so that differencing and
//! aggregation are exact; they are exposed as real seconds since midnight.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{AcdError, Result};
use crate::stats;

/// 09:30:00 in milliseconds since midnight.
pub const SESSION_OPEN_MS: i64 = 34_200_000;
/// 16:00:00 in milliseconds since midnight.
pub const SESSION_CLOSE_MS: i64 = 57_600_000;
pub const SESSION_OPEN: f64 = 34_200.0;
pub const SESSION_CLOSE: f64 = 57_600.0;

/// Tolerance used when comparing absolute price changes against a threshold.
const PRICE_TOL: f64 = 1e-9;

/// One transaction: trading-day ordinal, execution time, price and volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    day_index: u32,
    time_ms: i64,
    price: f64,
    volume: f64,
}

impl TickRecord {
    /// Builds a record from a time in seconds since midnight. The time must
    /// sit on the millisecond grid.
    pub fn new(day_index: u32, time_secs: f64, price: f64, volume: f64) -> Result<Self> {
        if !time_secs.is_finite() || time_secs < 0.0 {
            return Err(AcdError::Validation(format!("time {time_secs} must be non-negative")));
        }
        let scaled = time_secs * 1000.0;
        let ms = scaled.round();
        if (scaled - ms).abs() > 1e-4 {
            return Err(AcdError::Validation(format!(
                "time {time_secs} is not a multiple of 0.001 s"
            )));
        }
        Self::from_millis(day_index, ms as i64, price, volume)
    }

    pub fn from_millis(day_index: u32, time_ms: i64, price: f64, volume: f64) -> Result<Self> {
        if time_ms < 0 {
            return Err(AcdError::Validation(format!("time {time_ms} ms is negative")));
        }
        if !(price.is_finite() && price > 0.0) {
            return Err(AcdError::Validation(format!("price {price} must be positive")));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(AcdError::Validation(format!("volume {volume} must be positive")));
        }
        Ok(Self { day_index, time_ms, price, volume })
    }

    pub fn day_index(&self) -> u32 {
        self.day_index
    }

    /// Seconds since midnight.
    pub fn time(&self) -> f64 {
        self.time_ms as f64 / 1000.0
    }

    pub fn time_ms(&self) -> i64 {
        self.time_ms
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// True when 09:30 <= time <= 16:00.
    pub fn in_session(&self) -> bool {
        (SESSION_OPEN_MS..=SESSION_CLOSE_MS).contains(&self.time_ms)
    }
}

/// One trading day's transactions in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickDay {
    day_index: u32,
    records: Vec<TickRecord>,
}

impl TickDay {
    /// Validates a day: non-empty, one day ordinal, non-decreasing times.
    pub fn new(day_index: u32, records: Vec<TickRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(AcdError::Validation(format!("day {day_index} has no records")));
        }
        for (i, r) in records.iter().enumerate() {
            if r.day_index != day_index {
                return Err(AcdError::Validation(format!(
                    "record {i} belongs to day {} not {day_index}",
                    r.day_index
                )));
            }
        }
        if let Some(i) = records.windows(2).position(|w| w[1].time_ms < w[0].time_ms) {
            return Err(AcdError::Validation(format!(
                "day {day_index}: timestamp decreases at record {}",
                i + 1
            )));
        }
        Ok(Self { day_index, records })
    }

    pub fn day_index(&self) -> u32 {
        self.day_index
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Splits records into days, preserving order within each day.
pub fn group_days(records: Vec<TickRecord>) -> Result<Vec<TickDay>> {
    let mut days: Vec<(u32, Vec<TickRecord>)> = Vec::new();
    for r in records {
        match days.iter_mut().find(|(d, _)| *d == r.day_index) {
            Some((_, v)) => v.push(r),
            None => days.push((r.day_index, vec![r])),
        }
    }
    days.sort_by_key(|(d, _)| *d);
    days.into_iter().map(|(d, v)| TickDay::new(d, v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DurationKind {
    Trade,
    TransactionAggregated { t: usize },
    Price { threshold: f64 },
    Volume { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalState {
    Raw,
    Deseasonalized,
}

/// One duration with the clock times (seconds since midnight) of the events
/// that open and close it. For deseasonalized series `duration` is a
/// dimensionless ratio while the clock times are unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationEntry {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySegment {
    pub day_index: u32,
    pub entries: Vec<DurationEntry>,
}

/// Ordered durations segmented by trading day. No duration spans two days.
///
/// `contiguous` holds while every entry's end time equals the next entry's
/// start time within a day; filtering clears it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSeries {
    pub kind: DurationKind,
    pub seasonal_state: SeasonalState,
    pub contiguous: bool,
    pub days: Vec<DaySegment>,
}

impl DurationSeries {
    pub fn empty(kind: DurationKind) -> Self {
        Self { kind, seasonal_state: SeasonalState::Raw, contiguous: true, days: Vec::new() }
    }

    /// Single-day raw trade series whose events start at the session open.
    /// Handy for feeding model code with plain vectors.
    pub fn from_durations(values: &[f64]) -> Self {
        Self::from_day_values(vec![(0, values.to_vec())])
    }

    /// Multi-day raw trade series; each day's clock starts at the session open.
    pub fn from_day_values(days: Vec<(u32, Vec<f64>)>) -> Self {
        let days = days
            .into_iter()
            .map(|(day_index, values)| {
                let mut t = SESSION_OPEN;
                let entries = values
                    .into_iter()
                    .map(|w| {
                        let e = DurationEntry { start: t, end: t + w, duration: w };
                        t += w;
                        e
                    })
                    .collect();
                DaySegment { day_index, entries }
            })
            .collect();
        Self { kind: DurationKind::Trade, seasonal_state: SeasonalState::Raw, contiguous: true, days }
    }

    /// Concatenates per-day series in day order. All parts must share kind
    /// and seasonal state.
    pub fn merge(parts: Vec<DurationSeries>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some(mut out) = iter.next() else {
            return Err(AcdError::Empty("no series to merge".into()));
        };
        for p in iter {
            if p.kind != out.kind || p.seasonal_state != out.seasonal_state {
                return Err(AcdError::State("cannot merge series of different kinds".into()));
            }
            out.contiguous &= p.contiguous;
            out.days.extend(p.days);
        }
        out.days.sort_by_key(|d| d.day_index);
        if out.days.windows(2).any(|w| w[0].day_index == w[1].day_index) {
            return Err(AcdError::State("duplicate day in merged series".into()));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.days.iter().map(|d| d.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// All durations flattened in day order.
    pub fn values(&self) -> Vec<f64> {
        self.entries().map(|e| e.duration).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &DurationEntry> {
        self.days.iter().flat_map(|d| d.entries.iter())
    }

    /// Per-day duration vectors, in day order.
    pub fn day_values(&self) -> Vec<Vec<f64>> {
        self.days.iter().map(|d| d.entries.iter().map(|e| e.duration).collect()).collect()
    }

    /// Same entries with every duration replaced by `f(entry)`.
    pub fn map_durations(&self, mut f: impl FnMut(&DurationEntry) -> f64) -> Self {
        let days = self
            .days
            .iter()
            .map(|d| DaySegment {
                day_index: d.day_index,
                entries: d
                    .entries
                    .iter()
                    .map(|e| DurationEntry { duration: f(e), ..*e })
                    .collect(),
            })
            .collect();
        Self { days, ..self.clone() }
    }

    /// Drops days without entries.
    pub fn without_empty_days(mut self) -> Self {
        self.days.retain(|d| !d.entries.is_empty());
        self
    }
}

fn series_from_retained(day: &TickDay, idx: &[usize], kind: DurationKind) -> DurationSeries {
    let r = &day.records;
    let entries = idx
        .windows(2)
        .map(|w| {
            let (a, b) = (r[w[0]].time_ms, r[w[1]].time_ms);
            DurationEntry {
                start: a as f64 / 1000.0,
                end: b as f64 / 1000.0,
                duration: (b - a) as f64 / 1000.0,
            }
        })
        .collect();
    DurationSeries {
        kind,
        seasonal_state: SeasonalState::Raw,
        contiguous: true,
        days: vec![DaySegment { day_index: day.day_index, entries }],
    }
}

/// Consecutive tick gaps `t[i+1] - t[i]`; zero gaps are kept.
pub fn compute_trade_durations(day: &TickDay) -> DurationSeries {
    let idx: Vec<usize> = (0..day.len()).collect();
    series_from_retained(day, &idx, DurationKind::Trade)
}

/// Non-overlapping durations spanning `t - 1` tick gaps each:
/// `t[(t-1) i] - t[(t-1)(i-1)]`. `t = 2` reproduces the trade durations.
pub fn aggregate_transactions(day: &TickDay, t: usize) -> Result<DurationSeries> {
    if t < 2 {
        return Err(AcdError::Parameter(format!("aggregation count T = {t} must be at least 2")));
    }
    let idx: Vec<usize> = (0..day.len()).step_by(t - 1).collect();
    let kind = if t == 2 { DurationKind::Trade } else { DurationKind::TransactionAggregated { t } };
    Ok(series_from_retained(day, &idx, kind))
}

/// Retained tick indices for price thinning with threshold `c`.
pub fn price_retained_indices(day: &TickDay, c: f64) -> Vec<usize> {
    let r = &day.records;
    let mut idx = vec![0];
    let mut reference = r[0].price;
    for (i, rec) in r.iter().enumerate().skip(1) {
        if (rec.price - reference).abs() >= c - PRICE_TOL {
            idx.push(i);
            reference = rec.price;
        }
    }
    idx
}

/// Price durations: the next retained tick is the first one whose price
/// differs from the last retained price by at least `c` in absolute terms.
pub fn thin_by_price(day: &TickDay, c: f64) -> Result<DurationSeries> {
    if !(c.is_finite() && c >= 0.0) {
        return Err(AcdError::Parameter(format!("price threshold {c} must be non-negative")));
    }
    let idx = price_retained_indices(day, c);
    Ok(series_from_retained(day, &idx, DurationKind::Price { threshold: c }))
}

/// Retained tick indices for volume thinning with threshold `v`.
pub fn volume_retained_indices(day: &TickDay, v: f64) -> Vec<usize> {
    let mut idx = vec![0];
    let mut acc = 0.0;
    for (i, rec) in day.records.iter().enumerate().skip(1) {
        acc += rec.volume;
        if acc >= v {
            idx.push(i);
            acc = 0.0;
        }
    }
    idx
}

/// Volume durations: a tick is retained once the volume traded since the
/// last retained tick (excluding that tick) reaches `v`.
pub fn thin_by_volume(day: &TickDay, v: f64) -> Result<DurationSeries> {
    if !(v.is_finite() && v > 0.0) {
        return Err(AcdError::Parameter(format!("volume threshold {v} must be positive")));
    }
    let idx = volume_retained_indices(day, v);
    Ok(series_from_retained(day, &idx, DurationKind::Volume { threshold: v }))
}

/// Runs a per-day construction over all days and merges in day order.
pub fn build_for_days<F>(days: &[TickDay], kind: DurationKind, op: F) -> Result<DurationSeries>
where
    F: Fn(&TickDay) -> Result<DurationSeries> + Sync,
{
    let parts: Vec<DurationSeries> = days.par_iter().map(&op).collect::<Result<_>>()?;
    if parts.is_empty() {
        return Ok(DurationSeries::empty(kind));
    }
    DurationSeries::merge(parts)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThinningConfig {
    pub price_threshold: f64,
    pub volume_threshold: f64,
}

impl ThinningConfig {
    pub fn new(price_threshold: f64, volume_threshold: f64) -> Result<Self> {
        if !(price_threshold > 0.0 && volume_threshold > 0.0) {
            return Err(AcdError::Parameter("thinning thresholds must be positive".into()));
        }
        Ok(Self { price_threshold, volume_threshold })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub drop_zero: bool,
    pub max_duration_cap: Option<f64>,
}

impl FilterPolicy {
    pub fn new(drop_zero: bool, max_duration_cap: Option<f64>) -> Result<Self> {
        if let Some(cap) = max_duration_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(AcdError::Parameter(format!("duration cap {cap} must be positive")));
            }
        }
        Ok(Self { drop_zero, max_duration_cap })
    }

    fn keeps(&self, w: f64) -> bool {
        !(self.drop_zero && w == 0.0) && self.max_duration_cap.is_none_or(|cap| w <= cap)
    }
}

/// Removes zero and over-cap durations. Survivors keep their order, values
/// and day; the series is marked non-contiguous when anything was dropped.
pub fn apply_filter(series: &DurationSeries, policy: &FilterPolicy) -> Result<DurationSeries> {
    if series.seasonal_state != SeasonalState::Raw {
        return Err(AcdError::State("filtering applies to raw durations".into()));
    }
    let mut dropped = false;
    let days = series
        .days
        .iter()
        .map(|d| {
            let entries: Vec<DurationEntry> =
                d.entries.iter().copied().filter(|e| policy.keeps(e.duration)).collect();
            dropped |= entries.len() != d.entries.len();
            DaySegment { day_index: d.day_index, entries }
        })
        .collect();
    Ok(DurationSeries { days, contiguous: series.contiguous && !dropped, ..series.clone() })
}

/// Sums consecutive retained trade durations in groups of `t - 1` within
/// each day; an incomplete trailing group is discarded. Applied to an
/// unfiltered raw trade series this equals [`aggregate_transactions`]; applied
/// to filtered or deseasonalized tick durations it yields aggregated
/// durations built from the adjusted ticks.
pub fn aggregate_series(series: &DurationSeries, t: usize) -> Result<DurationSeries> {
    if t < 2 {
        return Err(AcdError::Parameter(format!("aggregation count T = {t} must be at least 2")));
    }
    if series.kind != DurationKind::Trade {
        return Err(AcdError::State("aggregation expects tick-by-tick durations".into()));
    }
    let g = t - 1;
    let days = series
        .days
        .iter()
        .map(|d| DaySegment {
            day_index: d.day_index,
            entries: d
                .entries
                .chunks_exact(g)
                .map(|c| DurationEntry {
                    start: c[0].start,
                    end: c[g - 1].end,
                    duration: c.iter().map(|e| e.duration).sum(),
                })
                .collect(),
        })
        .collect();
    let kind = if t == 2 { DurationKind::Trade } else { DurationKind::TransactionAggregated { t } };
    Ok(DurationSeries { kind, days, ..series.clone() })
}

/// Descriptive statistics in the layout of a duration summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// `(p, q(p))` for p in 0.05, 0.25, 0.5, 0.75, 0.95.
    pub quantiles: Vec<(f64, f64)>,
    pub lb_lags: usize,
    /// `None` when the statistic is undefined (constant or too-short series).
    pub ljung_box: Option<f64>,
}

pub const SUMMARY_PROBS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

pub fn describe(series: &DurationSeries, lb_lags: usize) -> Result<DurationSummary> {
    describe_values(&series.values(), lb_lags)
}

pub fn describe_values(x: &[f64], lb_lags: usize) -> Result<DurationSummary> {
    if x.is_empty() {
        return Err(AcdError::Empty("cannot describe an empty series".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantiles = SUMMARY_PROBS.iter().map(|&p| (p, stats::ecdf_quantile(&sorted, p))).collect();
    let ljung_box = diagnostics::ljung_box(x, lb_lags).ok().map(|r| r.q);
    Ok(DurationSummary {
        n: x.len(),
        mean: stats::mean(x),
        std_dev: stats::sample_variance(x).sqrt(),
        quantiles,
        lb_lags,
        ljung_box,
    })
}

/// Instantaneous volatility implied by a price-duration hazard:
/// `(c / price)^2 * hazard`.
pub fn price_duration_volatility(c: f64, price: f64, hazard: f64) -> Result<f64> {
    if !(price > 0.0) {
        return Err(AcdError::Parameter(format!("price {price} must be positive")));
    }
    if !(hazard >= 0.0) {
        return Err(AcdError::Parameter(format!("hazard {hazard} must be non-negative")));
    }
    Ok((c / price).powi(2) * hazard)
}
