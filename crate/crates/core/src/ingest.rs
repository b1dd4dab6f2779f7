//! Tick CSV input and output.
//!
//! Input rows carry `day, time, price, volume`. `day` is an ordinal or an ISO
//! date; `time` is seconds since midnight (millisecond resolution) or
//! `HH:MM:SS[.mmm]`. A header row is detected and skipped. Rows that fail to
//! parse, fall outside 09:30-16:00, or go back in time within their day are
//! rejected with their line number.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::duration::{group_days, DurationEntry, DurationKind, DurationSeries, DaySegment, SeasonalState, TickDay, TickRecord};
use crate::error::{AcdError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rejects: Vec<RejectedRow>,
    pub days_found: usize,
    /// Source date for each day ordinal, when the input used ISO dates.
    pub day_dates: Vec<(u32, String)>,
}

impl IngestReport {
    pub fn reject_fraction(&self) -> f64 {
        if self.rows_read == 0 {
            0.0
        } else {
            self.rejects.len() as f64 / self.rows_read as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DayKey {
    Ordinal(u32),
    Date(NaiveDate),
}

fn parse_day(s: &str) -> std::result::Result<DayKey, String> {
    if let Ok(d) = s.parse::<u32>() {
        return Ok(DayKey::Ordinal(d));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(DayKey::Date)
        .map_err(|_| format!("unrecognized day '{s}'"))
}

/// Seconds since midnight, from `ssss.mmm` or `HH:MM:SS[.mmm]`.
pub fn parse_time(s: &str) -> std::result::Result<f64, String> {
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("malformed clock time '{s}'"));
        }
        let h: u32 = parts[0].parse().map_err(|_| format!("malformed hour in '{s}'"))?;
        let m: u32 = parts[1].parse().map_err(|_| format!("malformed minute in '{s}'"))?;
        let sec: f64 = parts[2].parse().map_err(|_| format!("malformed second in '{s}'"))?;
        if h > 23 || m > 59 || !(0.0..60.0).contains(&sec) {
            return Err(format!("clock time '{s}' out of range"));
        }
        Ok(h as f64 * 3600.0 + m as f64 * 60.0 + sec)
    } else {
        let v: f64 = s.parse().map_err(|_| format!("malformed time '{s}'"))?;
        if !v.is_finite() {
            return Err(format!("malformed time '{s}'"));
        }
        Ok(v)
    }
}

fn parse_positive(s: &str, what: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(format!("{what} {v} must be positive")),
        Err(_) => Err(format!("malformed {what} '{s}'")),
    }
}

fn looks_like_header(rec: &csv::StringRecord) -> bool {
    rec.get(2).is_some_and(|p| p.trim().parse::<f64>().is_err())
        && rec.get(0).is_some_and(|d| parse_day(d.trim()).is_err())
}

/// Reads tick rows, validates them and groups them into days.
pub fn read_ticks<R: Read>(input: R) -> Result<(Vec<TickDay>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut rows: Vec<(u64, DayKey, f64, f64, f64)> = Vec::new();
    let mut rejects = Vec::new();
    let mut rows_read = 0usize;
    let mut first = true;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if first {
            first = false;
            if looks_like_header(&rec) {
                continue;
            }
        }
        rows_read += 1;
        let parsed = (|| {
            if rec.len() != 4 {
                return Err(format!("expected 4 columns, found {}", rec.len()));
            }
            let day = parse_day(&rec[0])?;
            let time = parse_time(&rec[1])?;
            let price = parse_positive(&rec[2], "price")?;
            let volume = parse_positive(&rec[3], "volume")?;
            Ok((day, time, price, volume))
        })();
        match parsed {
            Ok((d, t, p, v)) => rows.push((line, d, t, p, v)),
            Err(reason) => rejects.push(RejectedRow { line, reason }),
        }
    }

    // Day ordinals: ordinals are used as given; ISO dates are ranked.
    let dates: BTreeMap<NaiveDate, u32> = {
        let mut ds: Vec<NaiveDate> = rows
            .iter()
            .filter_map(|r| if let DayKey::Date(d) = r.1 { Some(d) } else { None })
            .collect();
        ds.sort();
        ds.dedup();
        ds.into_iter().enumerate().map(|(i, d)| (d, i as u32)).collect()
    };
    let uses_dates = !dates.is_empty();

    let mut last_time: BTreeMap<u32, i64> = BTreeMap::new();
    let mut records = Vec::with_capacity(rows.len());
    for (line, key, t, p, v) in rows {
        let day = match (key, uses_dates) {
            (DayKey::Date(d), _) => dates[&d],
            (DayKey::Ordinal(o), false) => o,
            (DayKey::Ordinal(_), true) => {
                rejects.push(RejectedRow { line, reason: "mixed ordinal and date day formats".into() });
                continue;
            }
        };
        let rec = match TickRecord::new(day, t, p, v) {
            Ok(r) => r,
            Err(e) => {
                rejects.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        if !rec.in_session() {
            rejects.push(RejectedRow { line, reason: "outside session".into() });
            continue;
        }
        if let Some(&prev) = last_time.get(&day) {
            if rec.time_ms() < prev {
                rejects.push(RejectedRow { line, reason: "timestamp earlier than previous tick of the same day".into() });
                continue;
            }
        }
        last_time.insert(day, rec.time_ms());
        records.push(rec);
    }
    rejects.sort_by_key(|r| r.line);

    let rows_accepted = records.len();
    let days = group_days(records)?;
    let report = IngestReport {
        rows_read,
        rows_accepted,
        rejects,
        days_found: days.len(),
        day_dates: dates.into_iter().map(|(d, i)| (i, d.format("%Y-%m-%d").to_string())).collect(),
    };
    Ok((days, report))
}

/// Writes ticks in the canonical ingest format (ordinal day, seconds with
/// three decimals).
pub fn write_ticks<W: Write>(out: W, days: &[TickDay]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "time", "price", "volume"])?;
    for d in days {
        for r in d.records() {
            w.write_record([
                r.day_index().to_string(),
                format!("{}.{:03}", r.time_ms() / 1000, r.time_ms() % 1000),
                format!("{}", r.price()),
                format!("{}", r.volume()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `day, start_time, duration` rows.
pub fn write_durations<W: Write>(out: W, series: &DurationSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "start_time", "duration"])?;
    for d in &series.days {
        for e in &d.entries {
            w.write_record([d.day_index.to_string(), format!("{:.3}", e.start), format!("{}", e.duration)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `day, start_time, duration` file back into a series. End times are
/// reconstructed as `start + duration` for raw series and as the next entry's
/// start otherwise.
pub fn read_durations<R: Read>(input: R, kind: DurationKind, state: SeasonalState) -> Result<DurationSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let mut days: Vec<DaySegment> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |what: &str| AcdError::Validation(format!("line {line}: malformed {what}"));
        let day: u32 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("day"))?;
        let start: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("start_time"))?;
        let duration: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("duration"))?;
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(bad("duration"));
        }
        let end = if state == SeasonalState::Raw { start + duration } else { start };
        let entry = DurationEntry { start, end, duration };
        match days.last_mut() {
            Some(seg) if seg.day_index == day => seg.entries.push(entry),
            _ => days.push(DaySegment { day_index: day, entries: vec![entry] }),
        }
    }
    if state != SeasonalState::Raw {
        for seg in &mut days {
            let n = seg.entries.len();
            for i in 0..n.saturating_sub(1) {
                seg.entries[i].end = seg.entries[i + 1].start;
            }
        }
    }
    days.sort_by_key(|d| d.day_index);
    Ok(DurationSeries { kind, seasonal_state: state, contiguous: false, days })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_headered_file_with_clock_times_and_dates() {
        let data = "day,time,price,volume\n\
                    2014-01-03,09:30:00.000,100.0,10\n\
                    2014-01-02,09:30:01.500,100.1,5\n\
                    2014-01-02,09:30:02.000,100.2,5\n";
        let (days, rep) = read_ticks(data.as_bytes()).unwrap();
        assert_eq!(rep.rows_read, 3);
        assert_eq!(rep.rows_accepted, 3);
        assert!(rep.rejects.is_empty());
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].len(), 2);
        assert_eq!(days[0].records()[0].time_ms(), 34_201_500);
        assert_eq!(rep.day_dates[0], (0, "2014-01-02".to_string()));
    }

    #[test]
    fn rejects_with_line_numbers() {
        let data = "0,34200.000,100,1\n\
                    0,57900.000,100,1\n\
                    0,abc,100,1\n\
                    0,34300.000,100,1\n\
                    0,34250.000,100,1\n\
                    0,34400.000,-1,1\n";
        let (days, rep) = read_ticks(data.as_bytes()).unwrap();
        assert_eq!(rep.rows_read, 6);
        assert_eq!(rep.rows_accepted, 2);
        let reasons: Vec<(u64, &str)> = rep.rejects.iter().map(|r| (r.line, r.reason.as_str())).collect();
        assert_eq!(reasons[0], (2, "outside session"));
        assert_eq!(reasons[1].0, 3);
        assert_eq!(reasons[2], (5, "timestamp earlier than previous tick of the same day"));
        assert_eq!(reasons[3].0, 6);
        assert_eq!(days[0].len(), 2);
    }

    #[test]
    fn tick_roundtrip() {
        let data = "0,34200.001,100.25,3\n0,34200.001,100.5,2\n1,40000.999,99,7\n";
        let (days, _) = read_ticks(data.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_ticks(&mut buf, &days).unwrap();
        let (again, rep) = read_ticks(buf.as_slice()).unwrap();
        assert_eq!(rep.rejects.len(), 0);
        assert_eq!(again, days);
    }

    #[test]
    fn duration_file_roundtrip() {
        let s = DurationSeries::from_day_values(vec![(0, vec![0.5, 1.25]), (3, vec![2.0])]);
        let mut buf = Vec::new();
        write_durations(&mut buf, &s).unwrap();
        let back = read_durations(buf.as_slice(), DurationKind::Trade, SeasonalState::Raw).unwrap();
        assert_eq!(back.day_values(), s.day_values());
    }

    #[test]
    fn parse_time_forms() {
        assert_eq!(parse_time("09:30:00.250").unwrap(), 34_200.25);
        assert_eq!(parse_time("34200.250").unwrap(), 34_200.25);
        assert!(parse_time("9:61:00").is_err());
    }
}
