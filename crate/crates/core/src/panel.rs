//! Subscriber-month survival panel and treatment cross-sections.

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::churn::{tenure_at, ChurnLabels};
use crate::error::{Error, Result};
use crate::graph::{ChurnerFriendTable, FriendGraph};
use crate::ingest::MonthlyAggregate;

/// How the churner-friend covariate enters the survival panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrdChurnMode {
    /// Friends churned in months `1..=t-1`.
    #[default]
    Cumulative,
    /// Friends churned in month `t-1` only.
    PerMonth,
}

/// One at-risk subscriber-month in counting-process form, `(t-1, t]`.
/// Time-varying covariates are measured in month `t-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub subscriber: u32,
    pub subscriber_id: String,
    pub t: u32,
    pub event: bool,
    pub frd: f64,
    pub n_calls: f64,
    pub airtime: f64,
    pub expenditure: f64,
    pub frd_churn: f64,
}

impl PanelRow {
    pub fn start(&self) -> u32 {
        self.t - 1
    }

    pub fn stop(&self) -> u32 {
        self.t
    }

    pub fn n_calls_sq(&self) -> f64 {
        self.n_calls * self.n_calls
    }

    pub fn airtime_sq(&self) -> f64 {
        self.airtime * self.airtime
    }

    /// One-hot month indicator over `1..=risk_months`.
    pub fn month_dummies(&self, risk_months: u32) -> Vec<u8> {
        (1..=risk_months).map(|m| (m == self.t) as u8).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalPanel {
    pub n_threshold: u32,
    pub mode: FrdChurnMode,
    pub risk_months: u32,
    pub rows: Vec<PanelRow>,
}

impl SurvivalPanel {
    pub fn n_events(&self) -> usize {
        self.rows.iter().filter(|r| r.event).count()
    }

    pub fn n_subjects(&self) -> usize {
        let mut ids: Vec<u32> = self.rows.iter().map(|r| r.subscriber).collect();
        ids.dedup();
        ids.len()
    }
}

/// Everything the panel builders read, borrowed from earlier stages.
#[derive(Clone, Copy)]
pub struct PanelInputs<'a> {
    pub usage: &'a MonthlyAggregate,
    pub labels: &'a ChurnLabels,
    pub graph: &'a FriendGraph,
    pub churner_friends: &'a ChurnerFriendTable,
    /// Subscribers kept after degree trimming, ascending.
    pub retained: &'a [u32],
    /// Months after the first active month before a subscriber who joined
    /// inside the window can be at risk. A churn is never dated to an active
    /// month, so this is at least one; a sample that requires a friend also
    /// rules out churn until two months of co-presence have passed.
    /// Subscribers active from the first window month enter at month 1.
    pub entry_delay: u32,
}

/// Entry delay implied by the sample filter.
pub fn entry_delay_for(require_degree: bool) -> u32 {
    if require_degree {
        crate::graph::MIN_COPRESENT_MONTHS
    } else {
        1
    }
}

pub fn build_survival_panel(inputs: PanelInputs<'_>, n_threshold: u32, mode: FrdChurnMode) -> Result<SurvivalPanel> {
    let last_risk = inputs.labels.last_risk_month();
    let mut rows = Vec::new();
    for &i in inputs.retained {
        let Some(presence) = inputs.labels.presence_of(i) else {
            continue;
        };
        let churn = inputs.labels.churn_of(i);
        let end = churn.unwrap_or(last_risk).min(last_risk);
        let entry = if presence.first <= 1 {
            1
        } else {
            presence.first + inputs.entry_delay.max(1)
        };
        if entry > end {
            continue;
        }
        let id = inputs.usage.roster.id(i);
        let frd = inputs.graph.degree(i) as f64;
        for t in entry..=end {
            // month 1 has no earlier observation; reuse its own usage
            let lag_month = (t - 1).max(1);
            if lag_month > inputs.usage.months() {
                return Err(Error::MissingCovariate {
                    subscriber: id.to_string(),
                    month: lag_month,
                });
            }
            let usage = inputs.usage.usage_or_idle(i, lag_month);
            let frd_churn = match mode {
                FrdChurnMode::Cumulative => inputs.churner_friends.cumulative(i, t - 1, n_threshold)?,
                FrdChurnMode::PerMonth if t > 1 => inputs.churner_friends.get(i, t - 1, n_threshold)?,
                FrdChurnMode::PerMonth => 0,
            };
            rows.push(PanelRow {
                subscriber: i,
                subscriber_id: id.to_string(),
                t,
                event: churn == Some(t),
                frd,
                n_calls: usage.n_calls_out as f64,
                airtime: usage.airtime_out(),
                expenditure: usage.expenditure,
                frd_churn: frd_churn as f64,
            });
        }
    }
    Ok(SurvivalPanel {
        n_threshold,
        mode,
        risk_months: last_risk,
        rows,
    })
}

/// Treatment exposure period followed by the post-treatment period.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub tep: Vec<u32>,
    pub ptp: Vec<u32>,
}

impl Split {
    pub fn new(tep: &[u32], ptp: &[u32]) -> Self {
        Split {
            tep: tep.to_vec(),
            ptp: ptp.to_vec(),
        }
    }

    pub fn primary() -> Self {
        Split::new(&[1, 2, 3, 4], &[5, 6, 7])
    }

    pub fn alternate() -> Self {
        Split::new(&[1, 2, 3], &[4, 5, 6, 7])
    }

    pub fn label(&self) -> String {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join("");
        format!("tep{}_ptp{}", join(&self.tep), join(&self.ptp))
    }

    /// Checks both periods are non-empty contiguous runs inside the risk
    /// window with the exposure period strictly first.
    pub fn validate(&self, risk_months: u32) -> Result<(RangeInclusive<u32>, RangeInclusive<u32>)> {
        let run = |v: &[u32], name: &str| -> Result<RangeInclusive<u32>> {
            let (&first, &last) = v
                .first()
                .zip(v.last())
                .ok_or_else(|| Error::Split(format!("{name} is empty")))?;
            if v.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(Error::Split(format!("{name} {v:?} is not a contiguous ascending run")));
            }
            if first < 1 || last > risk_months {
                return Err(Error::Split(format!("{name} {v:?} outside risk months 1..={risk_months}")));
            }
            Ok(first..=last)
        };
        let tep = run(&self.tep, "TEP")?;
        let ptp = run(&self.ptp, "PTP")?;
        if tep.end() >= ptp.start() {
            return Err(Error::Split(format!(
                "TEP {:?} must end before PTP {:?} starts",
                self.tep, self.ptp
            )));
        }
        Ok((tep, ptp))
    }
}

pub const GPS_COVARIATES: [&str; 5] = ["tenure", "n_calls", "expenditure", "frd", "pct_calls_out_other"];

#[derive(Debug, Clone, PartialEq)]
pub struct GpsUnit {
    pub subscriber: u32,
    pub subscriber_id: String,
    pub treatment: u32,
    pub outcome: bool,
    /// In [`GPS_COVARIATES`] order.
    pub covariates: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpsCrossSection {
    pub split: Split,
    pub n_threshold: u32,
    pub units: Vec<GpsUnit>,
    /// Excluded because they churned during the exposure period.
    pub excluded_churned: usize,
    /// Excluded because they entered after the exposure period began.
    pub excluded_late_entry: usize,
}

pub fn build_gps_cross_section(inputs: PanelInputs<'_>, split: &Split, n_threshold: u32) -> Result<GpsCrossSection> {
    let (tep, ptp) = split.validate(inputs.labels.last_risk_month())?;
    let window = inputs.usage.window;
    let mut out = GpsCrossSection {
        split: split.clone(),
        n_threshold,
        units: Vec::new(),
        excluded_churned: 0,
        excluded_late_entry: 0,
    };
    for &i in inputs.retained {
        let Some(presence) = inputs.labels.presence_of(i) else {
            continue;
        };
        let churn = inputs.labels.churn_of(i);
        if churn.is_some_and(|c| c <= *tep.end()) {
            out.excluded_churned += 1;
            continue;
        }
        if presence.first > *tep.start() {
            out.excluded_late_entry += 1;
            continue;
        }
        let mut treatment = 0;
        let (mut calls, mut spend, mut pct) = (0.0, 0.0, 0.0);
        for m in tep.clone() {
            treatment += inputs.churner_friends.get(i, m, n_threshold)?;
            let u = inputs.usage.usage_or_idle(i, m);
            calls += u.n_calls_out as f64;
            spend += u.expenditure;
            pct += u.pct_calls_out_other();
        }
        let len = tep.clone().count() as f64;
        let id = inputs.usage.roster.id(i);
        let tenure = tenure_at(id, inputs.usage.roster.join_month(i), window.month_at(*tep.end()))?;
        out.units.push(GpsUnit {
            subscriber: i,
            subscriber_id: id.to_string(),
            treatment,
            outcome: churn.is_some_and(|c| ptp.contains(&c)),
            covariates: [
                tenure as f64,
                calls / len,
                spend / len,
                inputs.graph.degree(i) as f64,
                pct / len,
            ],
        });
    }
    Ok(out)
}

pub fn panel_header(risk_months: u32) -> Vec<String> {
    let mut h: Vec<String> = [
        "subscriber_id",
        "t",
        "start",
        "stop",
        "event",
        "frd",
        "n_calls",
        "n_calls_sq",
        "airtime",
        "airtime_sq",
        "expenditure",
        "frd_churn",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=risk_months).map(|m| format!("month_{m}")));
    h
}

pub fn write_panel<W: Write>(out: W, panel: &SurvivalPanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(panel_header(panel.risk_months))?;
    for r in &panel.rows {
        let mut rec = vec![
            r.subscriber_id.clone(),
            r.t.to_string(),
            r.start().to_string(),
            r.stop().to_string(),
            (r.event as u8).to_string(),
            r.frd.to_string(),
            r.n_calls.to_string(),
            r.n_calls_sq().to_string(),
            r.airtime.to_string(),
            r.airtime_sq().to_string(),
            r.expenditure.to_string(),
            r.frd_churn.to_string(),
        ];
        rec.extend(r.month_dummies(panel.risk_months).iter().map(u8::to_string));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io("<panel>", e))?;
    Ok(())
}

/// Reads a panel written by [`write_panel`]. Roster indices are assigned in
/// order of first appearance.
pub fn read_panel(path: impl AsRef<Path>, n_threshold: u32, mode: FrdChurnMode) -> Result<SurvivalPanel> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let risk_months = rdr.headers()?.iter().filter(|h| h.starts_with("month_")).count() as u32;
    let mut rows: Vec<PanelRow> = Vec::new();
    let mut last_id: Option<String> = None;
    let mut next_idx = 0u32;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse {
                file: path.display().to_string(),
                line,
                reason: format!("bad value in column {i}"),
            })
        };
        let id = rec.get(0).unwrap_or("").to_string();
        if last_id.as_deref() != Some(id.as_str()) {
            if last_id.is_some() {
                next_idx += 1;
            }
            last_id = Some(id.clone());
        }
        rows.push(PanelRow {
            subscriber: next_idx,
            subscriber_id: id,
            t: f(1)? as u32,
            event: f(4)? != 0.0,
            frd: f(5)?,
            n_calls: f(6)?,
            airtime: f(8)?,
            expenditure: f(10)?,
            frd_churn: f(11)?,
        });
    }
    Ok(SurvivalPanel {
        n_threshold,
        mode,
        risk_months,
        rows,
    })
}

pub fn write_cross_section<W: Write>(out: W, cs: &GpsCrossSection) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["subscriber_id", "treatment", "outcome"];
    header.extend(GPS_COVARIATES);
    w.write_record(&header)?;
    for u in &cs.units {
        let mut rec = vec![u.subscriber_id.clone(), u.treatment.to_string(), (u.outcome as u8).to_string()];
        rec.extend(u.covariates.iter().map(f64::to_string));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io("<cross section>", e))?;
    Ok(())
}

pub fn read_cross_section(path: impl AsRef<Path>, split: Split, n_threshold: u32) -> Result<GpsCrossSection> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut units = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let f = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| Error::Parse {
                file: path.display().to_string(),
                line,
                reason: format!("bad value in column {i}"),
            })
        };
        let mut covariates = [0.0; 5];
        for (j, c) in covariates.iter_mut().enumerate() {
            *c = f(3 + j)?;
        }
        units.push(GpsUnit {
            subscriber: k as u32,
            subscriber_id: rec.get(0).unwrap_or("").to_string(),
            treatment: f(1)? as u32,
            outcome: f(2)? != 0.0,
            covariates,
        });
    }
    Ok(GpsCrossSection {
        split,
        n_threshold,
        units,
        excluded_churned: 0,
        excluded_late_entry: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_validation() {
        assert!(Split::primary().validate(7).is_ok());
        assert!(Split::alternate().validate(7).is_ok());
        assert!(matches!(Split::new(&[1, 2, 3], &[3, 4]).validate(7), Err(Error::Split(_))));
        assert!(Split::new(&[1, 3], &[4]).validate(7).is_err());
        assert!(Split::new(&[5, 6], &[7, 8]).validate(7).is_err());
        assert!(Split::new(&[], &[4]).validate(7).is_err());
        assert_eq!(Split::primary().label(), "tep1234_ptp567");
    }

    #[test]
    fn dummies_are_one_hot() {
        let r = PanelRow {
            subscriber: 0,
            subscriber_id: "a".into(),
            t: 3,
            event: false,
            frd: 1.0,
            n_calls: 2.0,
            airtime: 3.0,
            expenditure: 4.0,
            frd_churn: 0.0,
        };
        assert_eq!(r.month_dummies(7), vec![0, 0, 1, 0, 0, 0, 0]);
        assert_eq!((r.start(), r.stop()), (2, 3));
        assert_eq!(r.n_calls_sq(), 4.0);
    }
}
