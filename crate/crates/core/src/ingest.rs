//! Trade files to tick series.
//!
//! Input is a CSV with the header `date,timestamp_ms,price,volume,side,bid,ask`,
//! one execution per line, quotes attached to the execution. Spreads are
//! rounded to ticks and mid-price changes to half ticks. Records whose spread
//! leaves `{1, 2}` or whose return leaves `-2..=2` are dropped and the series
//! is cut there, so no return ever spans a drop, a gap or a day boundary.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::simulate::SimPath;
use crate::states::{encode_transition, is_allowed, Return, SpreadState, TransitionState};

pub const TRADE_HEADER: [&str; 7] = ["date", "timestamp_ms", "price", "volume", "side", "bid", "ask"];
pub const SERIES_HEADER: &str = "date,timestamp_ms,s,x,r,regime";

const MS_PER_MINUTE: u32 = 60_000;
const fn hm(h: u32, m: u32) -> u32 {
    (h * 60 + m) * MS_PER_MINUTE
}
pub const SESSION_OPEN_MS: u32 = hm(9, 30);
pub const SESSION_CLOSE_MS: u32 = hm(16, 0);
pub const PROFILE_BIN_MS: u32 = 6 * MS_PER_MINUTE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Buy,
    Sell,
    Unknown,
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "buy" | "b" => Ok(Side::Buy),
            "sell" | "s" => Ok(Side::Sell),
            "unknown" | "u" | "" => Ok(Side::Unknown),
            other => Err(Error::Parse(format!("unknown side {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub date: NaiveDate,
    /// Milliseconds since midnight.
    pub timestamp_ms: u32,
    pub price: f64,
    pub volume: f64,
    pub side: Side,
    pub bid: f64,
    pub ask: f64,
    /// Position in the cleaned record stream; consecutive records differ by one.
    pub seq: usize,
    /// 1-based line in the source file.
    pub line: usize,
}

impl TradeRecord {
    pub fn mid(&self) -> f64 {
        0.5 * (self.bid + self.ask)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub records: Vec<TradeRecord>,
    pub errors: Vec<LineError>,
    pub warnings: Vec<String>,
    /// Records merged into a later record with the same date, time and side.
    pub collapsed: usize,
}

fn parse_line(rec: &csv::StringRecord, line: usize) -> std::result::Result<TradeRecord, String> {
    if rec.len() != TRADE_HEADER.len() {
        return Err(format!("expected {} fields, found {}", TRADE_HEADER.len(), rec.len()));
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = rec[i].trim().parse().map_err(|_| format!("{} {:?} is not a number", TRADE_HEADER[i], &rec[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{} is not finite", TRADE_HEADER[i]))
        }
    };
    let date = NaiveDate::parse_from_str(rec[0].trim(), "%Y-%m-%d").map_err(|e| format!("date {:?}: {e}", &rec[0]))?;
    let timestamp_ms: u32 = rec[1].trim().parse().map_err(|_| format!("timestamp_ms {:?} is not an integer", &rec[1]))?;
    if timestamp_ms >= 86_400_000 {
        return Err(format!("timestamp_ms {timestamp_ms} is past midnight"));
    }
    let (price, volume, bid, ask) = (num(2)?, num(3)?, num(5)?, num(6)?);
    if volume < 0.0 {
        return Err(format!("negative volume {volume}"));
    }
    if ask < bid {
        return Err(format!("crossed quote: ask {ask} < bid {bid}"));
    }
    let side = rec[4].parse::<Side>().map_err(|e| e.to_string())?;
    Ok(TradeRecord { date, timestamp_ms, price, volume, side, bid, ask, seq: 0, line })
}

/// Parses a trade file. Bad lines are collected in the report; only a wrong
/// header or an unreadable stream is fatal.
pub fn parse_trades<R: Read>(reader: R) -> Result<ParseReport> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut report = ParseReport::default();
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => {
            report.warnings.push("input is empty".into());
            return Ok(report);
        }
        Some(h) => h.map_err(|e| Error::Parse(e.to_string()))?,
    };
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != TRADE_HEADER {
        return Err(Error::Parse(format!(
            "header must be {:?}, found {:?}",
            TRADE_HEADER.join(","),
            found.join(",")
        )));
    }
    let mut parsed = Vec::new();
    for row in rows {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        match parse_line(&row, line) {
            Ok(r) => parsed.push(r),
            Err(message) => report.errors.push(LineError { line, message }),
        }
    }
    if parsed.is_empty() {
        report.warnings.push("no records".into());
    }
    if parsed.windows(2).any(|w| (w[1].date, w[1].timestamp_ms) < (w[0].date, w[0].timestamp_ms)) {
        report.warnings.push("timestamps are not monotone; records were stably sorted".into());
        parsed.sort_by_key(|r| (r.date, r.timestamp_ms));
    }
    let mut records: Vec<TradeRecord> = Vec::with_capacity(parsed.len());
    for r in parsed {
        match records.last_mut() {
            Some(last) if (last.date, last.timestamp_ms, last.side) == (r.date, r.timestamp_ms, r.side) => {
                *last = r;
                report.collapsed += 1;
            }
            _ => records.push(r),
        }
    }
    for (i, r) in records.iter_mut().enumerate() {
        r.seq = i;
    }
    report.records = records;
    Ok(report)
}

pub fn parse_trades_file(path: &Path) -> Result<ParseReport> {
    parse_trades(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivityRegime {
    High,
    Low,
}

impl fmt::Display for ActivityRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivityRegime::High => "high",
            ActivityRegime::Low => "low",
        })
    }
}

/// A stretch of consecutive observations with no gap. `returns[t]` is the
/// mid-price change from observation `t` to `t + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub spreads: Vec<SpreadState>,
    pub returns: Vec<Return>,
    pub dates: Vec<Option<NaiveDate>>,
    pub timestamps_ms: Vec<u64>,
}

impl Segment {
    pub fn transitions(&self) -> impl Iterator<Item = TransitionState> + '_ {
        self.spreads.windows(2).map(|w| encode_transition(w[0], w[1]))
    }

    fn push(&mut self, s: SpreadState, date: Option<NaiveDate>, ts: u64) {
        self.spreads.push(s);
        self.dates.push(date);
        self.timestamps_ms.push(ts);
    }

    fn validate(&self) -> Result<()> {
        if self.spreads.is_empty() || self.returns.len() + 1 != self.spreads.len() {
            return Err(Error::InvalidParameter("segment returns must be one fewer than spreads".into()));
        }
        for (x, r) in self.transitions().zip(&self.returns) {
            if !is_allowed(*r, x) {
                return Err(Error::SupportViolation { ret: r.value() as i64, state: x.label() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickSeries {
    pub segments: Vec<Segment>,
    pub regime: Option<ActivityRegime>,
    pub dropped_count: usize,
}

impl TickSeries {
    /// Single-segment series from a simulated path, timestamped by step.
    pub fn from_path(path: &SimPath) -> Self {
        let n = path.spreads.len();
        let segment = Segment {
            spreads: path.spreads.clone(),
            returns: path.returns.clone(),
            dates: vec![None; n],
            timestamps_ms: (0..n as u64).collect(),
        };
        TickSeries { segments: vec![segment], regime: None, dropped_count: 0 }
    }

    pub fn spread_count(&self) -> usize {
        self.segments.iter().map(|s| s.spreads.len()).sum()
    }

    pub fn return_count(&self) -> usize {
        self.segments.iter().map(|s| s.returns.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.spread_count() == 0
    }

    pub fn validate(&self) -> Result<()> {
        self.segments.iter().try_for_each(Segment::validate)
    }

    /// All returns, concatenated across segments.
    pub fn return_values(&self) -> Vec<i64> {
        self.segments.iter().flat_map(|s| s.returns.iter().map(|r| r.value() as i64)).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SERIES_HEADER}")?;
        let regime = self.regime.map(|r| r.to_string()).unwrap_or_default();
        for seg in &self.segments {
            let xs: Vec<TransitionState> = seg.transitions().collect();
            for t in 0..seg.spreads.len() {
                let date = seg.dates[t].map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
                let (x, r) = match (xs.get(t), seg.returns.get(t)) {
                    (Some(x), Some(r)) => (x.to_string(), r.to_string()),
                    _ => (String::new(), String::new()),
                };
                writeln!(w, "{date},{},{},{x},{r},{regime}", seg.timestamps_ms[t], seg.spreads[t])?;
            }
        }
        Ok(())
    }

    /// Reads the series format above or a simulated path (`t,s,x,r`). A row
    /// with empty `x` and `r` closes a segment.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.iter().map(|h| h.trim().to_string()).collect();
        let path_format = header == ["t", "s", "x", "r"];
        if !path_format && header.join(",") != SERIES_HEADER {
            return Err(Error::Parse(format!("unrecognized series header {:?}", header.join(","))));
        }
        let mut series = TickSeries::default();
        let mut current = Segment::default();
        let mut pending: Option<(TransitionState, Return)> = None;
        for row in rdr.records() {
            let row = row.map_err(|e| Error::Parse(e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let bad = |what: &str| Error::Parse(format!("line {line}: {what}"));
            let off = if path_format { 0 } else { 1 };
            let date = if path_format || row[0].trim().is_empty() {
                None
            } else {
                Some(NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d").map_err(|_| bad("bad date"))?)
            };
            let ts: u64 = row[off].trim().parse().map_err(|_| bad("bad timestamp"))?;
            let s = row[off + 1].trim().parse::<i64>().map_err(|_| bad("bad spread")).and_then(|v| SpreadState::new(v).map_err(|e| bad(&e.to_string())))?;
            if !path_format {
                match row[5].trim() {
                    "" => {}
                    "high" => series.regime = Some(ActivityRegime::High),
                    "low" => series.regime = Some(ActivityRegime::Low),
                    other => return Err(bad(&format!("unknown regime {other:?}"))),
                }
            }
            if let Some((x, r)) = pending.take() {
                let prev = *current.spreads.last().expect("pending implies a previous row");
                if encode_transition(prev, s) != x {
                    return Err(bad(&format!("x = {x} does not match spreads {prev} -> {s}")));
                }
                current.returns.push(r);
            }
            current.push(s, date, ts);
            let (xs, rs) = (row[off + 2].trim(), row[off + 3].trim());
            if xs.is_empty() && rs.is_empty() {
                series.segments.push(std::mem::take(&mut current));
            } else {
                let x = xs.parse::<i64>().map_err(|_| bad("bad x")).and_then(|v| TransitionState::new(v).map_err(|e| bad(&e.to_string())))?;
                let r = rs.parse::<i64>().map_err(|_| bad("bad r")).and_then(|v| Return::new(v).map_err(|e| bad(&e.to_string())))?;
                if !is_allowed(r, x) {
                    return Err(Error::SupportViolation { ret: r.value() as i64, state: x.label() });
                }
                pending = Some((x, r));
            }
        }
        if pending.is_some() {
            return Err(Error::Parse("last row must leave x and r empty".into()));
        }
        Ok(series)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn to_ticks(value: f64, tick_size: f64) -> i64 {
    (value / tick_size).round() as i64
}

/// Spreads and half-tick returns from consecutive records. A new segment
/// starts at every date change, sequence gap and dropped record.
pub fn build_tick_series(records: &[TradeRecord], tick_size: f64) -> Result<TickSeries> {
    if !tick_size.is_finite() || tick_size <= 0.0 {
        return Err(Error::InvalidParameter(format!("tick size must be positive, got {tick_size}")));
    }
    let mut series = TickSeries::default();
    let mut current = Segment::default();
    let mut prev: Option<&TradeRecord> = None;
    let close = |series: &mut TickSeries, current: &mut Segment| {
        if !current.spreads.is_empty() {
            series.segments.push(std::mem::take(current));
        }
    };
    for rec in records {
        let spread = match SpreadState::new(to_ticks(rec.ask - rec.bid, tick_size)) {
            Ok(s) => s,
            Err(_) => {
                series.dropped_count += 1;
                close(&mut series, &mut current);
                prev = None;
                continue;
            }
        };
        let contiguous = prev.is_some_and(|p| p.date == rec.date && p.seq + 1 == rec.seq);
        if contiguous {
            let p = prev.unwrap();
            let half_ticks = to_ticks(2.0 * (rec.mid() - p.mid()), tick_size);
            let x = encode_transition(*current.spreads.last().unwrap(), spread);
            match Return::new(half_ticks) {
                Ok(r) if is_allowed(r, x) => current.returns.push(r),
                _ => {
                    series.dropped_count += 1;
                    close(&mut series, &mut current);
                    prev = None;
                    continue;
                }
            }
        } else {
            close(&mut series, &mut current);
        }
        current.push(spread, Some(rec.date), rec.timestamp_ms as u64);
        prev = Some(rec);
    }
    close(&mut series, &mut current);
    debug_assert!(series.validate().is_ok());
    Ok(series)
}

/// Wall-clock routing of a timestamp, or `None` for the trimmed first and
/// last six minutes. Errors outside the session.
pub fn classify_time(timestamp_ms: u32) -> Result<Option<ActivityRegime>> {
    let t = timestamp_ms;
    if !(SESSION_OPEN_MS..=SESSION_CLOSE_MS).contains(&t) {
        return Err(Error::InvalidParameter(format!("timestamp {t} ms is outside the session")));
    }
    Ok(if t <= hm(9, 36) || t >= hm(15, 54) {
        None
    } else if t < hm(10, 30) || t > hm(15, 45) {
        Some(ActivityRegime::High)
    } else {
        Some(ActivityRegime::Low)
    })
}

#[derive(Debug, Clone, Default)]
pub struct RegimeSplit {
    pub high: Vec<TradeRecord>,
    pub low: Vec<TradeRecord>,
    pub trimmed: usize,
    pub outside_session: usize,
}

/// Routes records to the high and low activity sets. Sequence numbers are
/// kept, so a later [`build_tick_series`] never bridges the hole left by a
/// record routed elsewhere.
pub fn split_regimes(records: &[TradeRecord]) -> RegimeSplit {
    let mut split = RegimeSplit::default();
    for rec in records {
        match classify_time(rec.timestamp_ms) {
            Err(_) => split.outside_session += 1,
            Ok(None) => split.trimmed += 1,
            Ok(Some(ActivityRegime::High)) => split.high.push(rec.clone()),
            Ok(Some(ActivityRegime::Low)) => split.low.push(rec.clone()),
        }
    }
    split
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReturnClass {
    Zero,
    One,
    Two,
    Beyond,
    /// First record of a day, or one following a gap.
    Undefined,
}

impl ReturnClass {
    pub const ALL: [ReturnClass; 5] =
        [ReturnClass::Zero, ReturnClass::One, ReturnClass::Two, ReturnClass::Beyond, ReturnClass::Undefined];

    fn of(half_ticks: i64) -> Self {
        match half_ticks.abs() {
            0 => ReturnClass::Zero,
            1 => ReturnClass::One,
            2 => ReturnClass::Two,
            _ => ReturnClass::Beyond,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReturnClass::Zero => "0",
            ReturnClass::One => "1",
            ReturnClass::Two => "2",
            ReturnClass::Beyond => "beyond",
            ReturnClass::Undefined => "none",
        }
    }
}

/// Trade counts in six-minute bins of the session, in total and by the
/// absolute return that each trade produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityProfile {
    /// Start of each bin in ms since midnight.
    pub bin_starts_ms: Vec<u32>,
    pub counts_total: Vec<u64>,
    pub counts_by_return: BTreeMap<ReturnClass, Vec<u64>>,
    pub outside_session: u64,
}

impl ActivityProfile {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "bin_start_ms,total")?;
        for c in ReturnClass::ALL {
            write!(w, ",r_{}", c.label())?;
        }
        writeln!(w)?;
        for (i, start) in self.bin_starts_ms.iter().enumerate() {
            write!(w, "{start},{}", self.counts_total[i])?;
            for c in ReturnClass::ALL {
                write!(w, ",{}", self.counts_by_return[&c][i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn activity_profile(records: &[TradeRecord], tick_size: f64) -> Result<ActivityProfile> {
    if records.is_empty() {
        return Err(Error::InsufficientData("activity profile needs at least one record".into()));
    }
    let bins = ((SESSION_CLOSE_MS - SESSION_OPEN_MS) / PROFILE_BIN_MS) as usize;
    let mut profile = ActivityProfile {
        bin_starts_ms: (0..bins as u32).map(|i| SESSION_OPEN_MS + i * PROFILE_BIN_MS).collect(),
        counts_total: vec![0; bins],
        counts_by_return: ReturnClass::ALL.iter().map(|c| (*c, vec![0; bins])).collect(),
        outside_session: 0,
    };
    let mut prev: Option<&TradeRecord> = None;
    for rec in records {
        let class = match prev {
            Some(p) if p.date == rec.date && p.seq + 1 == rec.seq => {
                ReturnClass::of(to_ticks(2.0 * (rec.mid() - p.mid()), tick_size))
            }
            _ => ReturnClass::Undefined,
        };
        prev = Some(rec);
        if !(SESSION_OPEN_MS..=SESSION_CLOSE_MS).contains(&rec.timestamp_ms) {
            profile.outside_session += 1;
            continue;
        }
        // the closing instant belongs to the last bin
        let bin = (((rec.timestamp_ms - SESSION_OPEN_MS) / PROFILE_BIN_MS) as usize).min(bins - 1);
        profile.counts_total[bin] += 1;
        profile.counts_by_return.get_mut(&class).unwrap()[bin] += 1;
    }
    Ok(profile)
}
