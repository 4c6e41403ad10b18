//! Call-detail-record ingestion and monthly usage aggregation.
//!
//! Three delimited inputs are read: the CDR file, the subscriber roster and
//! the tariff menu. Records are folded into one [`SubscriberMonth`] per
//! on-net subscriber and active month, plus per-pair monthly call counts
//! that feed the friendship graph.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::calendar::{Window, YearMonth};
use crate::error::{Error, Result};
use crate::stats::round_half_up;

pub const CDR_HEADER: [&str; 7] = [
    "timestamp",
    "caller_id",
    "callee_id",
    "duration_sec",
    "cell_id",
    "caller_on_net",
    "callee_on_net",
];
pub const SUBSCRIBER_HEADER: [&str; 3] = ["subscriber_id", "plan_id", "join_month"];
pub const TARIFF_HEADER: [&str; 4] = ["plan_id", "monthly_fee", "rate_on_net", "rate_off_net"];

const TIMESTAMP_FORMATS: [&str; 2] = ["%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CdrRecord {
    pub timestamp: NaiveDateTime,
    pub caller_id: String,
    pub callee_id: String,
    pub duration_sec: u32,
    pub cell_id: String,
    pub caller_on_net: bool,
    pub callee_on_net: bool,
}

impl CdrRecord {
    pub fn format_timestamp(&self) -> String {
        self.timestamp.format(TIMESTAMP_FORMATS[0]).to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TariffPlan {
    pub plan_id: String,
    pub monthly_fee: f64,
    pub rate_on_net: f64,
    pub rate_off_net: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscriber {
    pub subscriber_id: String,
    pub plan_id: String,
    pub join_month: YearMonth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    FieldCount,
    BadTimestamp,
    OutsideWindow,
    NegativeDuration,
    BadDuration,
    BadFlag,
    EmptyId,
    SelfCall,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::FieldCount => "field_count",
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::OutsideWindow => "outside_window",
            RejectReason::NegativeDuration => "negative_duration",
            RejectReason::BadDuration => "bad_duration",
            RejectReason::BadFlag => "bad_flag",
            RejectReason::EmptyId => "empty_id",
            RejectReason::SelfCall => "self_call",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub reason: RejectReason,
    pub detail: String,
}

/// Streaming CDR reader. Yields records in file order; rows that fail
/// validation come back as `Err(Reject)` so the caller can count them.
pub struct CdrReader<R: Read> {
    inner: csv::Reader<R>,
    window: Window,
    row: csv::StringRecord,
}

impl CdrReader<File> {
    pub fn open(path: impl AsRef<Path>, window: Window) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, window, &path.display().to_string())
    }
}

impl<R: Read> CdrReader<R> {
    pub fn from_reader(reader: R, window: Window, name: &str) -> Result<Self> {
        let mut inner = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        check_header(inner.headers()?, &CDR_HEADER, name)?;
        Ok(CdrReader {
            inner,
            window,
            row: csv::StringRecord::new(),
        })
    }

    fn parse_row(&self, line: u64) -> std::result::Result<CdrRecord, Reject> {
        let row = &self.row;
        let reject = |reason, detail: String| Reject {
            line,
            reason,
            detail,
        };
        if row.len() != CDR_HEADER.len() {
            return Err(reject(
                RejectReason::FieldCount,
                format!("expected {} fields, found {}", CDR_HEADER.len(), row.len()),
            ));
        }
        let ts_raw = row[0].trim();
        let timestamp = TIMESTAMP_FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(ts_raw, f).ok())
            .ok_or_else(|| reject(RejectReason::BadTimestamp, ts_raw.to_string()))?;
        if self.window.index_of(YearMonth::of(&timestamp)).is_none() {
            return Err(reject(RejectReason::OutsideWindow, ts_raw.to_string()));
        }
        let caller_id = row[1].trim();
        let callee_id = row[2].trim();
        if caller_id.is_empty() || callee_id.is_empty() {
            return Err(reject(RejectReason::EmptyId, String::new()));
        }
        if caller_id == callee_id {
            return Err(reject(RejectReason::SelfCall, caller_id.to_string()));
        }
        let dur_raw = row[3].trim();
        let duration: i64 = dur_raw
            .parse()
            .map_err(|_| reject(RejectReason::BadDuration, dur_raw.to_string()))?;
        if duration < 0 {
            return Err(reject(RejectReason::NegativeDuration, dur_raw.to_string()));
        }
        let duration_sec = u32::try_from(duration)
            .map_err(|_| reject(RejectReason::BadDuration, dur_raw.to_string()))?;
        let flag = |s: &str| match s.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(reject(RejectReason::BadFlag, other.to_string())),
        };
        Ok(CdrRecord {
            timestamp,
            caller_id: caller_id.to_string(),
            callee_id: callee_id.to_string(),
            duration_sec,
            cell_id: row[4].trim().to_string(),
            caller_on_net: flag(&row[5])?,
            callee_on_net: flag(&row[6])?,
        })
    }
}

impl<R: Read> Iterator for CdrReader<R> {
    type Item = Result<std::result::Result<CdrRecord, Reject>>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.inner.read_record(&mut self.row) {
            Ok(false) => None,
            Ok(true) => {
                let line = self.row.position().map_or(0, |p| p.line());
                Some(Ok(self.parse_row(line)))
            }
            Err(e) => Some(Err(e.into())),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CdrParse {
    pub records: Vec<CdrRecord>,
    pub rejects: Vec<Reject>,
}

/// Reads a whole CDR file, separating accepted records from rejected rows.
pub fn parse_cdr_file(path: impl AsRef<Path>, window: Window) -> Result<CdrParse> {
    collect_cdr(CdrReader::open(path, window)?)
}

pub fn parse_cdr_reader<R: Read>(reader: R, window: Window) -> Result<CdrParse> {
    collect_cdr(CdrReader::from_reader(reader, window, "<cdr>")?)
}

fn collect_cdr<R: Read>(reader: CdrReader<R>) -> Result<CdrParse> {
    let mut out = CdrParse::default();
    for item in reader {
        match item? {
            Ok(rec) => out.records.push(rec),
            Err(rej) => out.rejects.push(rej),
        }
    }
    Ok(out)
}

fn check_header(found: &csv::StringRecord, expected: &[&str], file: &str) -> Result<()> {
    let ok = found.len() == expected.len()
        && found.iter().zip(expected).all(|(f, e)| f.trim() == *e);
    if ok {
        Ok(())
    } else {
        Err(Error::Schema {
            file: file.to_string(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        })
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    check_header(rdr.headers()?, header, &path.display().to_string())?;
    Ok(rdr)
}

fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    file: &Path,
) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Parse {
        file: file.display().to_string(),
        line: rec.position().map_or(0, |p| p.line()),
        reason: format!("cannot parse `{raw}`"),
    })
}

pub fn parse_tariff_file(path: impl AsRef<Path>) -> Result<Vec<TariffPlan>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &TARIFF_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let plan = TariffPlan {
            plan_id: parse_field(&rec, 0, path)?,
            monthly_fee: parse_field(&rec, 1, path)?,
            rate_on_net: parse_field(&rec, 2, path)?,
            rate_off_net: parse_field(&rec, 3, path)?,
        };
        if plan.monthly_fee < 0.0 || plan.rate_on_net < 0.0 || plan.rate_off_net < 0.0 {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: rec.position().map_or(0, |p| p.line()),
                reason: format!("negative fee or rate in plan `{}`", plan.plan_id),
            });
        }
        out.push(plan);
    }
    Ok(out)
}

pub fn parse_subscriber_file(path: impl AsRef<Path>) -> Result<Vec<Subscriber>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &SUBSCRIBER_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(Subscriber {
            subscriber_id: parse_field(&rec, 0, path)?,
            plan_id: parse_field(&rec, 1, path)?,
            join_month: parse_field(&rec, 2, path)?,
        });
    }
    Ok(out)
}

/// On-net subscribers, their plans and join months, indexed densely in
/// ascending id order.
#[derive(Debug, Clone)]
pub struct Roster {
    ids: Vec<String>,
    index: HashMap<String, u32>,
    plans: Vec<TariffPlan>,
    joins: Vec<YearMonth>,
}

impl Roster {
    pub fn new(subscribers: &[Subscriber], tariffs: &[TariffPlan]) -> Result<Self> {
        let plan_by_id: HashMap<&str, &TariffPlan> =
            tariffs.iter().map(|p| (p.plan_id.as_str(), p)).collect();
        let mut subs: Vec<&Subscriber> = subscribers.iter().collect();
        subs.sort_by(|a, b| a.subscriber_id.cmp(&b.subscriber_id));
        subs.dedup_by(|a, b| a.subscriber_id == b.subscriber_id);
        let mut roster = Roster {
            ids: Vec::with_capacity(subs.len()),
            index: HashMap::with_capacity(subs.len()),
            plans: Vec::with_capacity(subs.len()),
            joins: Vec::with_capacity(subs.len()),
        };
        for (i, s) in subs.into_iter().enumerate() {
            let plan = plan_by_id
                .get(s.plan_id.as_str())
                .ok_or_else(|| Error::MissingPlan(s.subscriber_id.clone()))?;
            roster.ids.push(s.subscriber_id.clone());
            roster.index.insert(s.subscriber_id.clone(), i as u32);
            roster.plans.push((*plan).clone());
            roster.joins.push(s.join_month);
        }
        Ok(roster)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<u32> {
        self.index.get(id).copied()
    }

    pub fn id(&self, idx: u32) -> &str {
        &self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn plan(&self, idx: u32) -> &TariffPlan {
        &self.plans[idx as usize]
    }

    pub fn join_month(&self, idx: u32) -> YearMonth {
        self.joins[idx as usize]
    }
}

/// Outbound airtime split by destination network, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutboundAirtime {
    pub on_net_sec: u64,
    pub off_net_sec: u64,
}

/// Monthly spend under a sender-pays regime: the plan fee plus per-minute
/// charges on outbound airtime only.
pub fn compute_expenditure(airtime: OutboundAirtime, plan: &TariffPlan) -> f64 {
    plan.monthly_fee
        + plan.rate_on_net * (airtime.on_net_sec as f64 / 60.0)
        + plan.rate_off_net * (airtime.off_net_sec as f64 / 60.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriberMonth {
    pub subscriber_id: String,
    pub month_index: u32,
    pub n_calls_out: u32,
    pub n_calls_in: u32,
    pub n_calls_out_other: u32,
    pub n_calls_in_other: u32,
    pub airtime_out_sec: u64,
    pub airtime_in_sec: u64,
    pub airtime_out_on_net_sec: u64,
    pub expenditure: f64,
}

impl SubscriberMonth {
    /// A month with no calls at all; spend is the plan fee.
    pub fn idle(subscriber_id: &str, month_index: u32, plan: &TariffPlan) -> Self {
        SubscriberMonth {
            subscriber_id: subscriber_id.to_string(),
            month_index,
            n_calls_out: 0,
            n_calls_in: 0,
            n_calls_out_other: 0,
            n_calls_in_other: 0,
            airtime_out_sec: 0,
            airtime_in_sec: 0,
            airtime_out_on_net_sec: 0,
            expenditure: plan.monthly_fee,
        }
    }

    pub fn airtime_out(&self) -> f64 {
        self.airtime_out_sec as f64 / 60.0
    }

    pub fn airtime_in(&self) -> f64 {
        self.airtime_in_sec as f64 / 60.0
    }

    pub fn pct_calls_out_other(&self) -> f64 {
        ratio(self.n_calls_out_other, self.n_calls_out)
    }

    pub fn pct_calls_in_other(&self) -> f64 {
        ratio(self.n_calls_in_other, self.n_calls_in)
    }

    fn outbound_airtime(&self) -> OutboundAirtime {
        OutboundAirtime {
            on_net_sec: self.airtime_out_on_net_sec,
            off_net_sec: self.airtime_out_sec - self.airtime_out_on_net_sec,
        }
    }
}

fn ratio(num: u32, den: u32) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Calls exchanged per unordered on-net pair and month.
#[derive(Debug, Clone, Default)]
pub struct PairMonthCounts {
    months: u32,
    counts: HashMap<(u32, u32), Vec<u32>>,
}

impl PairMonthCounts {
    pub fn new(months: u32) -> Self {
        PairMonthCounts {
            months,
            counts: HashMap::new(),
        }
    }

    fn key(a: u32, b: u32) -> (u32, u32) {
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn add(&mut self, a: u32, b: u32, month_index: u32, calls: u32) {
        debug_assert!(a != b && month_index >= 1 && month_index <= self.months);
        let months = self.months as usize;
        let slot = self
            .counts
            .entry(Self::key(a, b))
            .or_insert_with(|| vec![0; months]);
        slot[month_index as usize - 1] += calls;
    }

    pub fn months(&self) -> u32 {
        self.months
    }

    pub fn calls(&self, a: u32, b: u32, month_index: u32) -> u32 {
        self.counts
            .get(&Self::key(a, b))
            .map_or(0, |v| v[month_index as usize - 1])
    }

    pub fn series(&self, a: u32, b: u32) -> Option<&[u32]> {
        self.counts.get(&Self::key(a, b)).map(|v| v.as_slice())
    }

    pub fn num_pairs(&self) -> usize {
        self.counts.len()
    }

    /// Pairs in ascending `(a, b)` order with their monthly series.
    pub fn sorted_pairs(&self) -> Vec<((u32, u32), &[u32])> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, s)| (*k, s.as_slice())).collect();
        v.sort_unstable_by_key(|(k, _)| *k);
        v
    }
}

/// Monthly usage table for every on-net subscriber.
#[derive(Debug, Clone)]
pub struct MonthlyAggregate {
    pub window: Window,
    pub roster: Roster,
    /// Dense `subscriber × month` table; `None` for months without calls.
    usage: Vec<Option<SubscriberMonth>>,
    pub pairs: PairMonthCounts,
    /// Records folded in; zero when rebuilt from exported tables.
    pub accepted_records: u64,
}

#[derive(Default, Clone, Copy)]
struct Accum {
    n_out: u32,
    n_in: u32,
    n_out_other: u32,
    n_in_other: u32,
    air_out: u64,
    air_in: u64,
    air_out_on: u64,
}

/// Aggregates accepted records into per-subscriber monthly usage.
///
/// Every on-net party must be on the roster; an unknown on-net id is a hard
/// error. Off-net parties only contribute to the on-net side's counters.
pub fn aggregate_monthly<I>(records: I, roster: Roster, window: Window) -> Result<MonthlyAggregate>
where
    I: IntoIterator,
    I::Item: Borrow<CdrRecord>,
{
    let months = window.months as usize;
    let n = roster.len();
    let mut acc = vec![None::<Accum>; n * months];
    let mut pairs = PairMonthCounts::new(window.months);
    let mut accepted = 0u64;

    let lookup = |id: &str| roster.index_of(id).ok_or_else(|| Error::MissingPlan(id.to_string()));

    for rec in records {
        let rec = rec.borrow();
        let m = window
            .index_of(YearMonth::of(&rec.timestamp))
            .ok_or_else(|| Error::Config(format!("record at {} outside window", rec.timestamp)))?;
        accepted += 1;
        let caller = if rec.caller_on_net { Some(lookup(&rec.caller_id)?) } else { None };
        let callee = if rec.callee_on_net { Some(lookup(&rec.callee_id)?) } else { None };
        let dur = rec.duration_sec as u64;
        if let Some(c) = caller {
            let a = acc[c as usize * months + m as usize - 1].get_or_insert_with(Accum::default);
            a.n_out += 1;
            a.air_out += dur;
            if rec.callee_on_net {
                a.air_out_on += dur;
            } else {
                a.n_out_other += 1;
            }
        }
        if let Some(c) = callee {
            let a = acc[c as usize * months + m as usize - 1].get_or_insert_with(Accum::default);
            a.n_in += 1;
            a.air_in += dur;
            if !rec.caller_on_net {
                a.n_in_other += 1;
            }
        }
        if let (Some(a), Some(b)) = (caller, callee) {
            pairs.add(a, b, m, 1);
        }
    }

    let usage = acc
        .into_iter()
        .enumerate()
        .map(|(k, a)| {
            a.map(|a| {
                let sub = (k / months) as u32;
                let mut sm = SubscriberMonth {
                    subscriber_id: roster.id(sub).to_string(),
                    month_index: (k % months) as u32 + 1,
                    n_calls_out: a.n_out,
                    n_calls_in: a.n_in,
                    n_calls_out_other: a.n_out_other,
                    n_calls_in_other: a.n_in_other,
                    airtime_out_sec: a.air_out,
                    airtime_in_sec: a.air_in,
                    airtime_out_on_net_sec: a.air_out_on,
                    expenditure: 0.0,
                };
                sm.expenditure = compute_expenditure(sm.outbound_airtime(), roster.plan(sub));
                sm
            })
        })
        .collect();

    Ok(MonthlyAggregate {
        window,
        roster,
        usage,
        pairs,
        accepted_records: accepted,
    })
}

impl MonthlyAggregate {
    /// Rebuilds an aggregate from previously exported tables.
    pub fn from_parts(
        window: Window,
        roster: Roster,
        rows: Vec<SubscriberMonth>,
        pairs: PairMonthCounts,
    ) -> Result<Self> {
        let months = window.months as usize;
        let mut usage = vec![None; roster.len() * months];
        for row in rows {
            let idx = roster
                .index_of(&row.subscriber_id)
                .ok_or_else(|| Error::UnknownSubscriber(row.subscriber_id.clone()))?;
            if row.month_index == 0 || row.month_index as usize > months {
                return Err(Error::Config(format!("month index {} outside window", row.month_index)));
            }
            let slot = idx as usize * months + row.month_index as usize - 1;
            usage[slot] = Some(row);
        }
        Ok(MonthlyAggregate {
            window,
            roster,
            usage,
            pairs,
            accepted_records: 0,
        })
    }

    pub fn months(&self) -> u32 {
        self.window.months
    }

    pub fn get(&self, sub: u32, month_index: u32) -> Option<&SubscriberMonth> {
        self.usage[sub as usize * self.window.months as usize + month_index as usize - 1].as_ref()
    }

    /// Usage for a month, with zero-activity months filled in as idle.
    pub fn usage_or_idle(&self, sub: u32, month_index: u32) -> SubscriberMonth {
        self.get(sub, month_index).cloned().unwrap_or_else(|| {
            SubscriberMonth::idle(self.roster.id(sub), month_index, self.roster.plan(sub))
        })
    }

    /// Outbound call counts per month, `[month-1]`.
    pub fn outbound_activity(&self, sub: u32) -> Vec<u32> {
        (1..=self.window.months)
            .map(|m| self.get(sub, m).map_or(0, |s| s.n_calls_out))
            .collect()
    }

    /// All active subscriber-months in `(subscriber, month)` order.
    pub fn rows(&self) -> impl Iterator<Item = &SubscriberMonth> {
        self.usage.iter().flatten()
    }
}

pub const SUBSCRIBER_MONTH_HEADER: [&str; 14] = [
    "subscriber_id",
    "month_index",
    "n_calls_out",
    "n_calls_in",
    "airtime_out",
    "airtime_in",
    "expenditure",
    "pct_calls_out_other",
    "pct_calls_in_other",
    "n_calls_out_other",
    "n_calls_in_other",
    "airtime_out_sec",
    "airtime_in_sec",
    "airtime_out_on_net_sec",
];

/// Writes the monthly usage table. Minutes and fractions are rounded
/// half-up for readability; exact integer columns are kept alongside so the
/// table can be read back losslessly.
pub fn write_subscriber_months<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = &'a SubscriberMonth>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUBSCRIBER_MONTH_HEADER)?;
    for r in rows {
        w.write_record([
            r.subscriber_id.clone(),
            r.month_index.to_string(),
            r.n_calls_out.to_string(),
            r.n_calls_in.to_string(),
            format!("{:.2}", round_half_up(r.airtime_out(), 2)),
            format!("{:.2}", round_half_up(r.airtime_in(), 2)),
            r.expenditure.to_string(),
            format!("{:.4}", round_half_up(r.pct_calls_out_other(), 4)),
            format!("{:.4}", round_half_up(r.pct_calls_in_other(), 4)),
            r.n_calls_out_other.to_string(),
            r.n_calls_in_other.to_string(),
            r.airtime_out_sec.to_string(),
            r.airtime_in_sec.to_string(),
            r.airtime_out_on_net_sec.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<subscriber months>", e))?;
    Ok(())
}

pub fn read_subscriber_months(path: impl AsRef<Path>) -> Result<Vec<SubscriberMonth>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &SUBSCRIBER_MONTH_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(SubscriberMonth {
            subscriber_id: parse_field(&rec, 0, path)?,
            month_index: parse_field(&rec, 1, path)?,
            n_calls_out: parse_field(&rec, 2, path)?,
            n_calls_in: parse_field(&rec, 3, path)?,
            expenditure: parse_field(&rec, 6, path)?,
            n_calls_out_other: parse_field(&rec, 9, path)?,
            n_calls_in_other: parse_field(&rec, 10, path)?,
            airtime_out_sec: parse_field(&rec, 11, path)?,
            airtime_in_sec: parse_field(&rec, 12, path)?,
            airtime_out_on_net_sec: parse_field(&rec, 13, path)?,
        });
    }
    Ok(out)
}

pub const PAIR_MONTH_HEADER: [&str; 4] = ["subscriber_a", "subscriber_b", "month_index", "calls_exchanged"];

pub fn write_pair_months<W: Write>(out: W, pairs: &PairMonthCounts, roster: &Roster) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PAIR_MONTH_HEADER)?;
    let mut rows: Vec<(&str, &str, u32, u32)> = Vec::new();
    for ((a, b), series) in pairs.sorted_pairs() {
        for (m, &c) in series.iter().enumerate() {
            if c > 0 {
                rows.push((roster.id(a), roster.id(b), m as u32 + 1, c));
            }
        }
    }
    rows.sort_unstable();
    for (a, b, m, c) in rows {
        w.write_record([a, b, &m.to_string(), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<pair months>", e))?;
    Ok(())
}

pub fn read_pair_months(path: impl AsRef<Path>, roster: &Roster, months: u32) -> Result<PairMonthCounts> {
    let path = path.as_ref();
    let mut rdr = open_csv(path, &PAIR_MONTH_HEADER)?;
    let mut pairs = PairMonthCounts::new(months);
    for rec in rdr.records() {
        let rec = rec?;
        let a: String = parse_field(&rec, 0, path)?;
        let b: String = parse_field(&rec, 1, path)?;
        let m: u32 = parse_field(&rec, 2, path)?;
        let c: u32 = parse_field(&rec, 3, path)?;
        let ia = roster.index_of(&a).ok_or(Error::UnknownSubscriber(a))?;
        let ib = roster.index_of(&b).ok_or(Error::UnknownSubscriber(b))?;
        if m == 0 || m > months || ia == ib {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: rec.position().map_or(0, |p| p.line()),
                reason: "invalid pair-month row".into(),
            });
        }
        pairs.add(ia, ib, m, c);
    }
    Ok(pairs)
}

pub fn write_rejects<W: Write>(out: W, rejects: &[Reject]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["line", "reason", "detail"])?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.code().to_string(), r.detail.clone()])?;
    }
    w.flush().map_err(|e| Error::io("<rejects>", e))?;
    Ok(())
}

pub fn write_cdr<'a, W: Write>(out: W, records: impl IntoIterator<Item = &'a CdrRecord>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CDR_HEADER)?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for r in records {
        w.write_record([
            r.format_timestamp().as_str(),
            &r.caller_id,
            &r.callee_id,
            &r.duration_sec.to_string(),
            &r.cell_id,
            flag(r.caller_on_net),
            flag(r.callee_on_net),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<cdr>", e))?;
    Ok(())
}

pub fn write_subscribers<W: Write>(out: W, subs: &[Subscriber]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUBSCRIBER_HEADER)?;
    for s in subs {
        w.write_record([&s.subscriber_id, &s.plan_id, &s.join_month.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<subscribers>", e))?;
    Ok(())
}

pub fn write_tariffs<W: Write>(out: W, plans: &[TariffPlan]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TARIFF_HEADER)?;
    for p in plans {
        w.write_record([
            p.plan_id.clone(),
            p.monthly_fee.to_string(),
            p.rate_on_net.to_string(),
            p.rate_off_net.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<tariffs>", e))?;
    Ok(())
}
