use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, Tessellation};

use super::series::SeriesMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripKind {
    Demand,
    Supply,
}

impl fmt::Display for TripKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripKind::Demand => "demand",
            TripKind::Supply => "supply",
        })
    }
}

impl FromStr for TripKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "demand" | "d" | "passenger" | "pickup" => Ok(TripKind::Demand),
            "supply" | "s" | "driver" => Ok(TripKind::Supply),
            other => Err(Error::Parse(format!("unknown trip kind {other:?}"))),
        }
    }
}

/// One trip event. Timestamps are wall-clock in the data's local time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    pub timestamp: NaiveDateTime,
    pub point: GeoPoint,
    pub kind: TripKind,
}

/// Accepted header names per field, matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripSchema {
    pub timestamp: Vec<String>,
    pub lat: Vec<String>,
    pub lon: Vec<String>,
    pub kind: Vec<String>,
    /// Kind assigned when the file has no kind column.
    pub default_kind: TripKind,
    /// Records outside `[start, end)` are skipped.
    pub window: Option<(NaiveDateTime, NaiveDateTime)>,
}

impl Default for TripSchema {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            timestamp: v(&[
                "timestamp",
                "time",
                "datetime",
                "pickup_datetime",
                "tpep_pickup_datetime",
                "lpep_pickup_datetime",
            ]),
            lat: v(&["lat", "latitude", "pickup_latitude"]),
            lon: v(&["lon", "lng", "longitude", "pickup_longitude"]),
            kind: v(&["kind", "type"]),
            default_kind: TripKind::Demand,
            window: None,
        }
    }
}

impl TripSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub records: Vec<TripRecord>,
    pub skipped: usize,
    /// Up to ten `(line, reason)` samples of skipped rows.
    pub report: Vec<(usize, String)>,
}

const TIME_FORMATS: [&str; 5] = [
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M",
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
];

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    for f in TIME_FORMATS {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_time(NaiveTime::MIN))
        .map_err(|_| Error::Parse(format!("unrecognized timestamp {s:?}")))
}

fn find_column(headers: &csv::StringRecord, names: &[String]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| n.eq_ignore_ascii_case(h.trim())))
}

/// Reads a trip CSV. Malformed or out-of-range rows are skipped and counted;
/// more than half of the rows malformed is a format error.
pub fn ingest_trips(path: &Path, schema: &TripSchema) -> Result<Ingested> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let need = |names: &[String], field: &str| {
        find_column(&headers, names).ok_or_else(|| Error::Format(format!("no {field} column among {headers:?}")))
    };
    let ts_col = need(&schema.timestamp, "timestamp")?;
    let lat_col = need(&schema.lat, "latitude")?;
    let lon_col = need(&schema.lon, "longitude")?;
    let kind_col = find_column(&headers, &schema.kind);

    let rows: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let parsed: Vec<Result<TripRecord>> = rows
        .par_iter()
        .map(|row| {
            let field = |i: usize| row.get(i).ok_or_else(|| Error::Parse("missing field".into()));
            let timestamp = parse_timestamp(field(ts_col)?)?;
            let num = |i: usize| -> Result<f64> {
                let s = field(i)?;
                s.trim().parse().map_err(|_| Error::Parse(format!("bad coordinate {s:?}")))
            };
            let point = GeoPoint::new(num(lat_col)?, num(lon_col)?)?;
            let kind = match kind_col {
                Some(i) => field(i)?.parse()?,
                None => schema.default_kind,
            };
            if let Some((start, end)) = schema.window {
                if timestamp < start || timestamp >= end {
                    return Err(Error::Parse(format!("{timestamp} outside the study window")));
                }
            }
            Ok(TripRecord { timestamp, point, kind })
        })
        .collect();

    let mut out = Ingested {
        records: Vec::with_capacity(parsed.len()),
        skipped: 0,
        report: Vec::new(),
    };
    for (i, r) in parsed.into_iter().enumerate() {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => {
                out.skipped += 1;
                if out.report.len() < 10 {
                    // header is line 1
                    out.report.push((i + 2, e.to_string()));
                }
            }
        }
    }
    if out.skipped * 2 > rows.len() {
        return Err(Error::Format(format!(
            "{} of {} rows in {} are malformed",
            out.skipped,
            rows.len(),
            path.display()
        )));
    }
    if out.skipped > 0 {
        log::warn!("skipped {} malformed rows in {}", out.skipped, path.display());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    pub matrix: SeriesMatrix,
    /// Records that fell outside the grid or the time window.
    pub dropped: usize,
}

/// Counts records per (region, bin). The window starts at midnight of the
/// earliest record and ends at midnight after the latest.
pub fn aggregate_series(records: &[TripRecord], tess: &Tessellation, bin_minutes: u32) -> Result<Aggregation> {
    if bin_minutes == 0 || 1440 % bin_minutes != 0 {
        return Err(Error::invalid(format!("{bin_minutes}-minute bins do not tile a day")));
    }
    let first = records
        .iter()
        .map(|r| r.timestamp)
        .min()
        .ok_or_else(|| Error::invalid("no records to aggregate"))?;
    let last = records.iter().map(|r| r.timestamp).max().expect("non-empty");
    let t0 = first.date().and_time(NaiveTime::MIN);
    let days = (last.date() - first.date()).num_days() as usize + 1;
    aggregate_window(records, tess, bin_minutes, t0, days * (1440 / bin_minutes as usize))
}

/// Counts records into `steps` bins starting at `t0`.
pub fn aggregate_window(
    records: &[TripRecord],
    tess: &Tessellation,
    bin_minutes: u32,
    t0: NaiveDateTime,
    steps: usize,
) -> Result<Aggregation> {
    if bin_minutes == 0 {
        return Err(Error::invalid("bin width must be positive"));
    }
    let points: Vec<GeoPoint> = records.iter().map(|r| r.point).collect();
    let regions = tess.locate_all(&points);
    let bin = Duration::minutes(bin_minutes as i64);
    let slots: Vec<Option<(usize, usize)>> = records
        .par_iter()
        .zip(&regions)
        .map(|(rec, region)| {
            let region = (*region)?;
            let offset = rec.timestamp - t0;
            if offset < Duration::zero() {
                return None;
            }
            let t = (offset.num_seconds() / bin.num_seconds()) as usize;
            (t < steps).then_some((region, t))
        })
        .collect();
    let mut values = vec![vec![0.0; steps]; tess.len()];
    let mut dropped = 0;
    for s in slots {
        match s {
            Some((r, t)) => values[r][t] += 1.0,
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} records outside the study grid or window");
    }
    let mut matrix = SeriesMatrix::new(tess.region_ids.clone(), t0, bin_minutes, values)?;
    matrix.sites = Some(tess.centroids.clone());
    Ok(Aggregation { matrix, dropped })
}

/// Record counts per kind, sorted by kind.
pub fn kind_counts(records: &[TripRecord]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.kind.to_string()).or_insert(0) += 1;
    }
    out
}
