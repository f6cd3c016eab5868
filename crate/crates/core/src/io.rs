//! Tick CSV ingestion and export.
//!
//! Input files carry a header `time,price,I,V,D,S,QD,OFI`; only `time` and
//! `price` are required and covariate columns may appear in any order. The
//! time column holds either seconds from the session open or ISO-8601 stamps.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, NaiveTime, Timelike};
use log::warn;

use crate::data::{Covariates, TickSeries, ONE_DAY, SESSION_SECONDS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    /// Prices are levels rather than log-prices; take logs on load.
    pub raw_price: bool,
    /// Keep only ticks at or after this time of day, in seconds.
    pub session_start: Option<f64>,
    /// Keep only ticks at or before this time of day, in seconds.
    pub session_end: Option<f64>,
    /// Length of one session in years.
    pub horizon: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { raw_price: false, session_start: None, session_end: None, horizon: ONE_DAY }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub rows: usize,
    pub duplicates: usize,
    pub outside_session: usize,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub series: TickSeries,
    pub report: LoadReport,
}

/// Parse `HH:MM[:SS[.fff]]` or a plain number of seconds.
pub fn parse_time_of_day(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    ["%H:%M:%S%.f", "%H:%M"]
        .iter()
        .find_map(|f| NaiveTime::parse_from_str(s, f).ok())
        .map(seconds_of_day)
}

fn seconds_of_day(t: NaiveTime) -> f64 {
    t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9
}

fn parse_iso(s: &str) -> Option<f64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(seconds_of_day(dt.time()));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| seconds_of_day(dt.time()))
}

#[derive(Clone, Copy, PartialEq)]
enum TimeFormat {
    Seconds,
    Iso,
}

struct Columns {
    time: usize,
    price: usize,
    sign: Option<usize>,
    volume: Option<usize>,
    duration: Option<usize>,
    spread: Option<usize>,
    depth: Option<usize>,
    ofi: Option<usize>,
}

impl Columns {
    fn from_header(h: &csv::StringRecord) -> Result<Columns> {
        let find = |name: &str| h.iter().position(|c| c.trim().eq_ignore_ascii_case(name));
        let required = |name: &str| {
            find(name).ok_or_else(|| Error::Parse { line: 1, message: format!("missing `{name}` column") })
        };
        Ok(Columns {
            time: required("time")?,
            price: required("price")?,
            sign: find("I"),
            volume: find("V"),
            duration: find("D"),
            spread: find("S"),
            depth: find("QD"),
            ofi: find("OFI"),
        })
    }
}

#[derive(Default)]
struct Raw {
    seconds: Vec<f64>,
    prices: Vec<f64>,
    sign: Vec<i8>,
    volume: Vec<f64>,
    duration: Vec<f64>,
    spread: Vec<f64>,
    depth: Vec<f64>,
    ofi: Vec<f64>,
}

/// Load a tick file from disk.
pub fn load_ticks(path: &Path, opts: &LoadOptions) -> Result<Loaded> {
    let file = std::fs::File::open(path)?;
    read_ticks(file, opts)
}

/// Parse tick CSV from any reader.
pub fn read_ticks<R: Read>(input: R, opts: &LoadOptions) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if header.is_empty() {
        return Err(Error::EmptyFile);
    }
    let cols = Columns::from_header(&header)?;

    let mut raw = Raw::default();
    let mut format = None;
    let mut rows = 0;
    let mut duplicates = 0;
    let mut outside_session = 0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        rows += 1;
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let number = |i: usize, name: &str| -> Result<f64> {
            let s = field(i);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("bad {name} value `{s}`")))
        };

        let t_str = field(cols.time);
        let fmt = *format.get_or_insert(if t_str.parse::<f64>().is_ok() { TimeFormat::Seconds } else { TimeFormat::Iso });
        let secs = match fmt {
            TimeFormat::Seconds => t_str.parse::<f64>().ok(),
            TimeFormat::Iso => parse_iso(t_str),
        }
        .ok_or_else(|| parse_err(format!("bad time `{t_str}`")))?;

        if opts.session_start.is_some_and(|s| secs < s) || opts.session_end.is_some_and(|e| secs > e) {
            outside_session += 1;
            continue;
        }
        if let Some(&last) = raw.seconds.last() {
            if secs == last {
                duplicates += 1;
                continue;
            }
            if secs < last {
                return Err(parse_err(format!("time `{t_str}` goes backwards")));
            }
        }

        let mut price = number(cols.price, "price")?;
        if opts.raw_price {
            if price <= 0.0 {
                return Err(parse_err(format!("raw price must be positive, got {price}")));
            }
            price = price.ln();
        }
        raw.seconds.push(secs);
        raw.prices.push(price);
        if let Some(i) = cols.sign {
            match field(i) {
                "1" | "+1" | "1.0" => raw.sign.push(1),
                "-1" | "-1.0" => raw.sign.push(-1),
                s => return Err(parse_err(format!("trade sign must be -1 or 1, got `{s}`"))),
            }
        }
        for (col, out, name) in [
            (cols.volume, &mut raw.volume, "V"),
            (cols.duration, &mut raw.duration, "D"),
            (cols.spread, &mut raw.spread, "S"),
            (cols.depth, &mut raw.depth, "QD"),
            (cols.ofi, &mut raw.ofi, "OFI"),
        ] {
            if let Some(i) = col {
                out.push(number(i, name)?);
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyFile);
    }
    if duplicates > 0 {
        warn!("dropped {duplicates} row(s) with duplicate timestamps");
    }
    if outside_session > 0 {
        warn!("dropped {outside_session} row(s) outside the session window");
    }

    let origin = match (opts.session_start, format) {
        (Some(s), _) => s,
        (None, Some(TimeFormat::Iso)) => raw.seconds.first().copied().unwrap_or(0.0),
        _ => 0.0,
    };
    let session = match (opts.session_start, opts.session_end) {
        (Some(s), Some(e)) if e > s => e - s,
        _ => SESSION_SECONDS,
    };
    let per_second = opts.horizon / session;
    let times: Vec<f64> = raw.seconds.iter().map(|s| (s - origin) * per_second).collect();
    let horizon = times.last().map_or(opts.horizon, |&t| t.max(opts.horizon));

    let some = |v: Vec<f64>, col: Option<usize>| col.map(|_| v);
    let covariates = Covariates {
        sign: cols.sign.map(|_| raw.sign),
        volume: some(raw.volume, cols.volume),
        // durations in the file are seconds, the series stores years
        duration: some(raw.duration.iter().map(|d| d * per_second).collect(), cols.duration),
        spread: some(raw.spread, cols.spread),
        depth: some(raw.depth, cols.depth),
        ofi: some(raw.ofi, cols.ofi),
    };
    let series = TickSeries::new(times, raw.prices, covariates, horizon)?;
    Ok(Loaded { series, report: LoadReport { rows, duplicates, outside_session } })
}

/// Write a series as tick CSV with times in seconds from the open, inverse of [`read_ticks`].
pub fn write_ticks<W: Write>(series: &TickSeries, out: W) -> Result<()> {
    let to_seconds = SESSION_SECONDS / ONE_DAY;
    let c = &series.covariates;
    let mut header = vec!["time", "price"];
    let present = [
        ("I", c.sign.is_some()),
        ("V", c.volume.is_some()),
        ("D", c.duration.is_some()),
        ("S", c.spread.is_some()),
        ("QD", c.depth.is_some()),
        ("OFI", c.ofi.is_some()),
    ];
    header.extend(present.iter().filter(|p| p.1).map(|p| p.0));
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&header).map_err(io)?;
    for i in 0..series.prices.len() {
        let row = c.row(i);
        let mut rec = vec![format!("{}", series.times[i] * to_seconds), format!("{}", series.prices[i])];
        if let Some(v) = row.sign {
            rec.push(format!("{}", v as i8));
        }
        for v in [row.volume, row.duration.map(|d| d * to_seconds), row.spread, row.depth, row.ofi].into_iter().flatten() {
            rec.push(format!("{v}"));
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<Loaded> {
        read_ticks(s.as_bytes(), &LoadOptions::default())
    }

    #[test]
    fn three_rows_give_two_returns() {
        let l = load("time,price\n0,4.6\n1,4.61\n2.5,4.605\n").unwrap();
        assert_eq!(l.series.n_returns(), 2);
        assert!((l.series.times[2] - 2.5 * ONE_DAY / SESSION_SECONDS).abs() < 1e-18);
        assert_eq!(l.series.horizon, ONE_DAY);
    }

    #[test]
    fn duplicate_timestamp_is_dropped_and_counted() {
        let l = load("time,price\n0,1\n1,2\n1,3\n2,4\n").unwrap();
        assert_eq!(l.series.n_returns(), 2);
        assert_eq!(l.report.duplicates, 1);
        assert_eq!(l.series.prices, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn covariates_in_any_order() {
        let l = load("price,S,time,I\n1,0.01,0,1\n2,0.02,1,-1\n").unwrap();
        assert_eq!(l.series.covariates.sign, Some(vec![1, -1]));
        assert_eq!(l.series.covariates.spread, Some(vec![0.01, 0.02]));
        assert!(l.series.covariates.volume.is_none());
    }

    #[test]
    fn iso_times_relative_to_first_tick() {
        let l = load("time,price\n2024-03-01T09:30:00,1\n2024-03-01T09:30:01.5,2\n").unwrap();
        assert_eq!(l.series.times[0], 0.0);
        assert!((l.series.times[1] - 1.5 * ONE_DAY / SESSION_SECONDS).abs() < 1e-18);
    }

    #[test]
    fn session_window_trims_and_sets_origin() {
        let opts = LoadOptions {
            session_start: parse_time_of_day("09:30"),
            session_end: parse_time_of_day("16:00"),
            ..Default::default()
        };
        let csv = "time,price\n2024-03-01 09:00:00,1\n2024-03-01 09:30:00,2\n2024-03-01 12:45:00,3\n2024-03-01 16:30:00,4\n";
        let l = read_ticks(csv.as_bytes(), &opts).unwrap();
        assert_eq!(l.report.outside_session, 2);
        assert_eq!(l.series.prices, vec![2.0, 3.0]);
        assert!((l.series.times[1] - ONE_DAY / 2.0).abs() < 1e-15);
    }

    #[test]
    fn raw_prices_are_logged() {
        let opts = LoadOptions { raw_price: true, ..Default::default() };
        let l = read_ticks("time,price\n0,100\n1,101\n".as_bytes(), &opts).unwrap();
        assert!((l.series.prices[1] - 101f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(load(""), Err(Error::EmptyFile)));
        assert!(matches!(load("time,price\n"), Err(Error::EmptyFile)));
        assert!(matches!(load("time,price\n0,1\n1,x\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(load("time,price,I\n0,1,1\n1,2,0\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(load("time,price\n1,1\n0,2\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(load("t,price\n0,1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let l = load("time,price,I,V,D,S,QD,OFI\n0,1,1,10,1,0.01,5,0.3\n1,2,-1,20,1,0.02,6,-0.1\n3,1.5,1,5,2,0.01,7,0\n").unwrap();
        let mut buf = Vec::new();
        write_ticks(&l.series, &mut buf).unwrap();
        let back = load(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.series.prices, l.series.prices);
        assert_eq!(back.series.covariates.sign, l.series.covariates.sign);
        for (a, b) in back.series.times.iter().zip(&l.series.times) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
