//! Charging-event ingestion and connected-count statistics.
//!
//! Events (charger, connect, disconnect) become step-indexed counts of how
//! many EVs are plugged in at each step-start instant. Hourly differencing
//! of that series gives the connection flows the fleet model consumes, and
//! within-hour differencing against a decision instant gives the empirical
//! distributions whose moments feed the chance constraints. Normality and
//! unimodality tests attach to each distribution so an ambiguity set can be
//! picked per cell.

use crate::stats::{self, StatsError};
use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConnectivityError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no events")]
    NoEvents,
    #[error("no events in {year}-{month:02}")]
    EmptyMonth { year: i32, month: u32 },
    #[error("series must have 5-minute resolution and start at midnight")]
    NotFiveMinuteDays,
    #[error("series must have hourly resolution")]
    NotHourly,
    #[error("window hours must satisfy t_d <= t_s <= 23")]
    BadWindow,
    #[error("bad row {line}: {field}")]
    BadField { line: usize, field: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChargingEvent {
    pub charger_id: String,
    pub connect_time: NaiveDateTime,
    pub disconnect_time: NaiveDateTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    FiveMinute,
    Hourly,
}

impl Resolution {
    pub fn step_minutes(self) -> i64 {
        match self {
            Resolution::FiveMinute => 5,
            Resolution::Hourly => 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Weekday,
    Weekend,
}

impl DayClass {
    pub fn of(date: NaiveDate) -> DayClass {
        if date.weekday().number_from_monday() >= 6 {
            DayClass::Weekend
        } else {
            DayClass::Weekday
        }
    }
}

/// Counts of connected EVs at each step-start instant over whole calendar
/// days.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivitySeries {
    pub resolution: Resolution,
    pub start: NaiveDateTime,
    pub values: Vec<u32>,
}

impl ConnectivitySeries {
    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::minutes(self.resolution.step_minutes() * i as i64)
    }

    pub fn day_class(&self, i: usize) -> DayClass {
        DayClass::of(self.timestamp(i).date())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "timestamp,count")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{v}", self.timestamp(i).format("%Y-%m-%dT%H:%M"))?;
        }
        Ok(())
    }
}

/// Per-hour connection churn aligned with an hourly series: events whose
/// connect (disconnect) falls in the half-open hour (t, t+1].
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyFlows {
    pub delta_hat: Vec<i64>,
    pub n_in: Vec<u32>,
    pub n_out: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    MissingField,
    MalformedTimestamp,
    NonPositiveDuration,
    Overlap,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::MissingField => "missing field",
            RejectReason::MalformedTimestamp => "malformed timestamp",
            RejectReason::NonPositiveDuration => "non-positive duration",
            RejectReason::Overlap => "overlap",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub events: Vec<ChargingEvent>,
    /// (1-based data row, reason) for every rejected row.
    pub rejected: Vec<(usize, RejectReason)>,
}

fn parse_ts(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    None
}

/// Reads `charger_id,connect_time,disconnect_time` rows, keeping valid
/// events and reporting each rejected row. An event overlapping an already
/// accepted session on the same charger is rejected; touching endpoints are
/// allowed.
pub fn ingest_events<R: Read>(reader: R) -> Result<IngestReport, ConnectivityError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    let mut sessions: BTreeMap<String, BTreeMap<NaiveDateTime, NaiveDateTime>> = BTreeMap::new();

    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let (Some(id), Some(con), Some(dis)) = (record.get(0), record.get(1), record.get(2))
        else {
            rejected.push((row, RejectReason::MissingField));
            continue;
        };
        let (Some(connect), Some(disconnect)) = (parse_ts(con), parse_ts(dis)) else {
            rejected.push((row, RejectReason::MalformedTimestamp));
            continue;
        };
        if disconnect <= connect {
            rejected.push((row, RejectReason::NonPositiveDuration));
            continue;
        }
        let charger = sessions.entry(id.to_string()).or_default();
        let clash = charger
            .range(..connect)
            .next_back()
            .map(|(_, end)| *end > connect)
            .unwrap_or(false)
            || charger
                .range(connect..)
                .next()
                .map(|(start, _)| *start < disconnect)
                .unwrap_or(false);
        if clash {
            rejected.push((row, RejectReason::Overlap));
            continue;
        }
        charger.insert(connect, disconnect);
        events.push(ChargingEvent {
            charger_id: id.to_string(),
            connect_time: connect,
            disconnect_time: disconnect,
        });
    }
    Ok(IngestReport { events, rejected })
}

fn month_of(t: NaiveDateTime) -> (i32, u32) {
    (t.date().year(), t.date().month())
}

fn days_in_month(year: i32, month: u32) -> i64 {
    let first = NaiveDate::from_ymd_opt(year, month, 1).unwrap();
    let next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)
    }
    .unwrap();
    (next - first).num_days()
}

fn active_in_month(events: &[ChargingEvent], year: i32, month: u32) -> BTreeSet<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in events {
        if month_of(e.connect_time) == (year, month) {
            *counts.entry(&e.charger_id).or_default() += 1;
        }
    }
    let threshold = 2.0 * days_in_month(year, month) as f64 / 7.0;
    counts
        .into_iter()
        .filter(|&(_, n)| n as f64 >= threshold - 1e-9)
        .map(|(id, _)| id.to_string())
        .collect()
}

/// Chargers with at least two events per week of the given month.
pub fn active_charger_filter(
    events: &[ChargingEvent],
    year: i32,
    month: u32,
) -> Result<BTreeSet<String>, ConnectivityError> {
    if !events.iter().any(|e| month_of(e.connect_time) == (year, month)) {
        return Err(ConnectivityError::EmptyMonth { year, month });
    }
    Ok(active_in_month(events, year, month))
}

/// Mean monthly active-charger count over the months the events span,
/// rounded to the nearest integer.
pub fn fleet_size(events: &[ChargingEvent]) -> Result<u32, ConnectivityError> {
    let first = events
        .iter()
        .map(|e| e.connect_time)
        .min()
        .ok_or(ConnectivityError::NoEvents)?;
    let last = events.iter().map(|e| e.connect_time).max().unwrap();
    let (mut y, mut m) = month_of(first);
    let end = month_of(last);
    let mut total = 0usize;
    let mut months = 0usize;
    loop {
        total += active_in_month(events, y, m).len();
        months += 1;
        if (y, m) == end {
            break;
        }
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
    Ok((total as f64 / months as f64).round() as u32)
}

/// Builds the step-start coverage counts over whole days spanning all
/// events: an event counts at step s iff connect <= s < disconnect.
pub fn build_series(
    events: &[ChargingEvent],
    resolution: Resolution,
) -> Result<ConnectivitySeries, ConnectivityError> {
    let first = events
        .iter()
        .map(|e| e.connect_time)
        .min()
        .ok_or(ConnectivityError::NoEvents)?;
    let last = events.iter().map(|e| e.disconnect_time).max().unwrap();
    let start = first.date().and_hms_opt(0, 0, 0).unwrap();
    let midnight = chrono::NaiveTime::from_hms_opt(0, 0, 0).unwrap();
    let end = if last.time() == midnight {
        last
    } else {
        (last.date() + Duration::days(1)).and_hms_opt(0, 0, 0).unwrap()
    };
    build_series_between(events, resolution, start, end)
}

/// Same as [`build_series`] over an explicit half-open span [start, end).
pub fn build_series_between(
    events: &[ChargingEvent],
    resolution: Resolution,
    start: NaiveDateTime,
    end: NaiveDateTime,
) -> Result<ConnectivitySeries, ConnectivityError> {
    let step = resolution.step_minutes();
    let len = ((end - start).num_minutes() / step).max(0) as usize;
    let mut diff = vec![0i64; len + 1];
    for e in events {
        let lo_min = (e.connect_time - start).num_minutes();
        let hi_min = (e.disconnect_time - start).num_minutes();
        // first covered step >= connect; first uncovered step >= disconnect
        let lo = lo_min.div_euclid(step) + i64::from(lo_min.rem_euclid(step) != 0);
        let hi = hi_min.div_euclid(step) + i64::from(hi_min.rem_euclid(step) != 0);
        let lo = lo.clamp(0, len as i64) as usize;
        let hi = hi.clamp(0, len as i64) as usize;
        diff[lo] += 1;
        diff[hi] -= 1;
    }
    let mut values = Vec::with_capacity(len);
    let mut acc = 0i64;
    for d in &diff[..len] {
        acc += d;
        values.push(acc as u32);
    }
    Ok(ConnectivitySeries {
        resolution,
        start,
        values,
    })
}

/// Connection and disconnection counts per hour of an hourly series.
pub fn hourly_flows(
    events: &[ChargingEvent],
    series: &ConnectivitySeries,
) -> Result<HourlyFlows, ConnectivityError> {
    if series.resolution != Resolution::Hourly {
        return Err(ConnectivityError::NotHourly);
    }
    let len = series.values.len();
    let mut n_in = vec![0u32; len];
    let mut n_out = vec![0u32; len];
    let bump = |t: NaiveDateTime, arr: &mut Vec<u32>| {
        // hour window (t_h, t_h + 1h] owns instant t
        let mins = (t - series.start).num_minutes();
        let idx = (mins - 1).div_euclid(60);
        if (0..len as i64).contains(&idx) {
            arr[idx as usize] += 1;
        }
    };
    for e in events {
        bump(e.connect_time, &mut n_in);
        bump(e.disconnect_time, &mut n_out);
    }
    let delta_hat = n_in
        .iter()
        .zip(&n_out)
        .map(|(&i, &o)| i as i64 - o as i64)
        .collect();
    Ok(HourlyFlows {
        delta_hat,
        n_in,
        n_out,
    })
}

/// Writes the hourly series with its flows:
/// `timestamp,count,delta_hat,n_in,n_out`.
pub fn write_hourly_csv<W: Write>(
    series: &ConnectivitySeries,
    flows: &HourlyFlows,
    mut w: W,
) -> io::Result<()> {
    writeln!(w, "timestamp,count,delta_hat,n_in,n_out")?;
    for i in 0..series.values.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            series.timestamp(i).format("%Y-%m-%dT%H:%M"),
            series.values[i],
            flows.delta_hat[i],
            flows.n_in[i],
            flows.n_out[i]
        )?;
    }
    Ok(())
}

/// Reads the extended hourly CSV back.
pub fn read_hourly_csv<R: Read>(
    reader: R,
) -> Result<(ConnectivitySeries, HourlyFlows), ConnectivityError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut start = None;
    let mut values = Vec::new();
    let mut flows = HourlyFlows {
        delta_hat: Vec::new(),
        n_in: Vec::new(),
        n_out: Vec::new(),
    };
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = i + 1;
        let bad = |field| ConnectivityError::BadField { line, field };
        let ts = parse_ts(record.get(0).ok_or_else(|| bad("timestamp"))?)
            .ok_or_else(|| bad("timestamp"))?;
        if start.is_none() {
            start = Some(ts);
        }
        let field = |j: usize, name: &'static str| {
            record
                .get(j)
                .and_then(|s| s.trim().parse::<i64>().ok())
                .ok_or_else(|| ConnectivityError::BadField { line, field: name })
        };
        values.push(field(1, "count")? as u32);
        flows.delta_hat.push(field(2, "delta_hat")?);
        flows.n_in.push(field(3, "n_in")? as u32);
        flows.n_out.push(field(4, "n_out")? as u32);
    }
    let start = start.ok_or(ConnectivityError::NoEvents)?;
    Ok((
        ConnectivitySeries {
            resolution: Resolution::Hourly,
            start,
            values,
        },
        flows,
    ))
}

/// Empirical distribution of the within-hour count change between the
/// decision instant t_d:00 and each 5-minute step of scheduling hour t_s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaNDistribution {
    pub t_d: u32,
    pub t_s: u32,
    pub day_class: DayClass,
    pub samples: Vec<i64>,
    pub mu: f64,
    pub sigma: f64,
    /// Set when fewer than 30 days of the class back the samples.
    pub insufficient_history: bool,
}

/// One sample per 5-minute step of t_s per historical day of the class:
/// count(step) - count(t_d:00). Moments are population-normalized.
pub fn empirical_delta_n(
    series: &ConnectivitySeries,
    t_d: u32,
    t_s: u32,
    day_class: DayClass,
) -> Result<DeltaNDistribution, ConnectivityError> {
    if series.resolution != Resolution::FiveMinute
        || series.start.time() != chrono::NaiveTime::from_hms_opt(0, 0, 0).unwrap()
    {
        return Err(ConnectivityError::NotFiveMinuteDays);
    }
    if t_d > t_s || t_s > 23 {
        return Err(ConnectivityError::BadWindow);
    }
    const STEPS_PER_DAY: usize = 24 * 12;
    let days = series.values.len() / STEPS_PER_DAY;
    let mut samples = Vec::new();
    let mut class_days = 0usize;
    for d in 0..days {
        let date = series.start.date() + Duration::days(d as i64);
        if DayClass::of(date) != day_class {
            continue;
        }
        class_days += 1;
        let base = series.values[d * STEPS_PER_DAY + t_d as usize * 12] as i64;
        for j in 0..12 {
            let idx = d * STEPS_PER_DAY + t_s as usize * 12 + j;
            samples.push(series.values[idx] as i64 - base);
        }
    }
    let n = samples.len() as f64;
    let (mu, sigma) = if samples.is_empty() {
        (0.0, 0.0)
    } else {
        let mu = samples.iter().map(|&s| s as f64).sum::<f64>() / n;
        let var = samples
            .iter()
            .map(|&s| (s as f64 - mu).powi(2))
            .sum::<f64>()
            / n;
        (mu, var.sqrt())
    };
    Ok(DeltaNDistribution {
        t_d,
        t_s,
        day_class,
        samples,
        mu,
        sigma,
        insufficient_history: class_days < 30,
    })
}

/// A distribution with its normality and unimodality test results. Either
/// p-value is absent when its test cannot run (too few or degenerate
/// samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    #[serde(flatten)]
    pub dist: DeltaNDistribution,
    pub shapiro_p: Option<f64>,
    pub dip_statistic: Option<f64>,
    pub dip_p: Option<f64>,
}

impl DistributionRecord {
    /// Runs both tests on the samples. The dip null calibration is Monte
    /// Carlo with the given resample count and seed.
    pub fn with_tests(dist: DeltaNDistribution, resamples: usize, seed: u64) -> Self {
        let xs: Vec<f64> = dist.samples.iter().map(|&s| s as f64).collect();
        let shapiro_p = if xs.len() >= 8 {
            stats::shapiro_wilk(&xs).ok().map(|r| r.1)
        } else {
            None
        };
        let (dip_statistic, dip_p) = match stats::dip_test(&xs, resamples, seed) {
            Ok((d, p)) => (Some(d), Some(p)),
            Err(StatsError::Degenerate | StatsError::TooFewSamples { .. }) => (None, None),
            Err(_) => (None, None),
        };
        DistributionRecord {
            dist,
            shapiro_p,
            dip_statistic,
            dip_p,
        }
    }
}

/// On-disk distributions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionsFile {
    pub format_version: u32,
    pub records: Vec<DistributionRecord>,
}

pub const DISTRIBUTIONS_FORMAT_VERSION: u32 = 1;

impl DistributionsFile {
    pub fn new(records: Vec<DistributionRecord>) -> Self {
        DistributionsFile {
            format_version: DISTRIBUTIONS_FORMAT_VERSION,
            records,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), ConnectivityError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, ConnectivityError> {
        Ok(serde_json::from_reader(r)?)
    }
}
