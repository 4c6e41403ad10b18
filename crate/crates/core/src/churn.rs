//! Prepaid churn labelling: three consecutive months without an outbound
//! call. Churn is dated at the first silent month.

use std::io::Write;
use std::path::Path;

use crate::calendar::YearMonth;
use crate::error::{Error, Result};
use crate::ingest::MonthlyAggregate;

/// Months without outbound calls that confirm a churn.
pub const SILENT_RUN: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChurnEvent {
    pub subscriber_id: String,
    pub churn_month: Option<u32>,
    pub censored: bool,
}

/// First and last month with outbound activity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Presence {
    pub first: u32,
    pub last: u32,
}

impl Presence {
    pub fn from_activity(active: &[bool]) -> Option<Self> {
        let first = active.iter().position(|&a| a)? as u32 + 1;
        let last = active.iter().rposition(|&a| a)? as u32 + 1;
        Some(Presence { first, last })
    }

    pub fn contains(&self, month: u32) -> bool {
        (self.first..=self.last).contains(&month)
    }
}

/// Churn month for one subscriber's outbound-activity series.
///
/// Scanning starts the month after the first active month; the latest
/// datable churn is `len - 3`, the last month whose silent run fits inside
/// the window. Later silences leave the subscriber censored.
pub fn churn_month(active: &[bool]) -> Result<Option<u32>> {
    let len = active.len() as u32;
    if len < SILENT_RUN + 1 {
        return Err(Error::Config(format!(
            "window of {len} months is too short to date churn"
        )));
    }
    let Some(presence) = Presence::from_activity(active) else {
        return Ok(None);
    };
    let last_risk = len - SILENT_RUN;
    Ok(((presence.first + 1)..=last_risk).find(|&m| {
        (m..m + SILENT_RUN).all(|k| !active[k as usize - 1])
    }))
}

#[derive(Debug, Clone)]
pub struct ChurnLabels {
    pub window_len: u32,
    events: Vec<ChurnEvent>,
    presence: Vec<Option<Presence>>,
}

/// Labels every roster subscriber from outbound call counts.
pub fn label_churn(agg: &MonthlyAggregate) -> Result<ChurnLabels> {
    let window_len = agg.months();
    let mut events = Vec::with_capacity(agg.roster.len());
    let mut presence = Vec::with_capacity(agg.roster.len());
    for (i, id) in agg.roster.ids().iter().enumerate() {
        let active: Vec<bool> = agg.outbound_activity(i as u32).iter().map(|&c| c > 0).collect();
        let cm = churn_month(&active)?;
        events.push(ChurnEvent {
            subscriber_id: id.clone(),
            churn_month: cm,
            censored: cm.is_none(),
        });
        presence.push(Presence::from_activity(&active));
    }
    Ok(ChurnLabels {
        window_len,
        events,
        presence,
    })
}

impl ChurnLabels {
    pub fn from_events(window_len: u32, events: Vec<ChurnEvent>, presence: Vec<Option<Presence>>) -> Self {
        assert_eq!(events.len(), presence.len());
        ChurnLabels {
            window_len,
            events,
            presence,
        }
    }

    pub fn events(&self) -> &[ChurnEvent] {
        &self.events
    }

    /// Churn month by dense roster index.
    pub fn churn_of(&self, idx: u32) -> Option<u32> {
        self.events[idx as usize].churn_month
    }

    pub fn presence_of(&self, idx: u32) -> Option<Presence> {
        self.presence[idx as usize]
    }

    pub fn event(&self, subscriber_id: &str) -> Result<&ChurnEvent> {
        self.events
            .binary_search_by(|e| e.subscriber_id.as_str().cmp(subscriber_id))
            .map(|i| &self.events[i])
            .map_err(|_| Error::UnknownSubscriber(subscriber_id.to_string()))
    }

    pub fn last_risk_month(&self) -> u32 {
        self.window_len - SILENT_RUN
    }

    pub fn n_churners(&self) -> usize {
        self.events.iter().filter(|e| !e.censored).count()
    }
}

/// Months with the operator counting the current month: joining in the
/// month itself gives 1.
pub fn tenure_at(subscriber_id: &str, join: YearMonth, month: YearMonth) -> Result<u32> {
    let d = month.months_since(join);
    if d < 0 {
        return Err(Error::MonthBeforeJoin {
            subscriber: subscriber_id.to_string(),
            month: month.to_string(),
            join: join.to_string(),
        });
    }
    Ok(d as u32 + 1)
}

pub fn write_churn<W: Write>(out: W, labels: &ChurnLabels) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_id", "churn_month", "censored"])?;
    for e in &labels.events {
        w.write_record([
            e.subscriber_id.clone(),
            e.churn_month.map(|m| m.to_string()).unwrap_or_default(),
            (e.censored as u8).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<churn>", e))?;
    Ok(())
}

pub fn read_churn(path: impl AsRef<Path>) -> Result<Vec<ChurnEvent>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || Error::Parse {
            file: path.display().to_string(),
            line: rec.position().map_or(0, |p| p.line()),
            reason: "malformed churn row".into(),
        };
        let churn_month = match rec.get(1).ok_or_else(bad)?.trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| bad())?),
        };
        out.push(ChurnEvent {
            subscriber_id: rec.get(0).ok_or_else(bad)?.to_string(),
            churn_month,
            censored: rec.get(2).ok_or_else(bad)?.trim() == "1",
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bools(xs: &[u8]) -> Vec<bool> {
        xs.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn churn_at_first_silent_month() {
        assert_eq!(churn_month(&bools(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0])).unwrap(), Some(4));
    }

    #[test]
    fn always_active_is_censored() {
        assert_eq!(churn_month(&[true; 10]).unwrap(), None);
    }

    #[test]
    fn short_silences_do_not_count() {
        assert_eq!(churn_month(&bools(&[1, 0, 0, 1, 0, 0, 1, 0, 0, 1])).unwrap(), None);
        // silent 8..10 is beyond the last datable month
        assert_eq!(churn_month(&bools(&[1, 1, 1, 1, 1, 1, 1, 0, 0, 0])).unwrap(), None);
        assert_eq!(churn_month(&bools(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 1])).unwrap(), Some(7));
    }

    #[test]
    fn late_entry_is_not_churn() {
        assert_eq!(churn_month(&bools(&[0, 0, 0, 1, 1, 1, 1, 1, 1, 1])).unwrap(), None);
        assert_eq!(churn_month(&bools(&[0, 0, 1, 1, 0, 0, 0, 1, 1, 1])).unwrap(), Some(5));
        assert_eq!(churn_month(&[false; 10]).unwrap(), None);
    }

    #[test]
    fn window_too_short() {
        assert!(churn_month(&[true, false, false]).is_err());
    }

    #[test]
    fn tenure_anchor_points() {
        let ym = |s: &str| s.parse::<YearMonth>().unwrap();
        assert_eq!(tenure_at("a", ym("2008-08"), ym("2008-08")).unwrap(), 1);
        assert_eq!(tenure_at("a", ym("2004-08"), ym("2008-08")).unwrap(), 49);
        assert!(tenure_at("a", ym("2008-09"), ym("2008-08")).is_err());
    }

    /// Exhaustive scan over every length-3 window.
    fn brute_force(active: &[bool]) -> Option<u32> {
        let n = active.len();
        let first = active.iter().position(|&a| a)?;
        let mut found = None;
        for start in 0..n.saturating_sub(2) {
            let m = start as u32 + 1;
            if start > first && m <= n as u32 - 3 && !active[start] && !active[start + 1] && !active[start + 2] {
                found = found.or(Some(m));
            }
        }
        found
    }

    proptest! {
        #[test]
        fn agrees_with_exhaustive_scan(active in proptest::collection::vec(any::<bool>(), 4..14)) {
            prop_assert_eq!(churn_month(&active).unwrap(), brute_force(&active));
        }

        #[test]
        fn inactive_from_churn_month(active in proptest::collection::vec(any::<bool>(), 4..14)) {
            if let Some(m) = churn_month(&active).unwrap() {
                prop_assert!(!active[m as usize - 1]);
                prop_assert!(active[m as usize - 2]);
            }
        }

        #[test]
        fn translation_equivariant(active in proptest::collection::vec(any::<bool>(), 4..12), shift in 1usize..4) {
            // prepend silent months and append the same number of active months;
            // a trailing silent run would become datable, so skip those
            prop_assume!(active[active.len() - 3..].iter().any(|&a| a));
            let mut shifted = vec![false; shift];
            shifted.extend_from_slice(&active);
            shifted.extend(std::iter::repeat(true).take(shift));
            let a = churn_month(&active).unwrap();
            let b = churn_month(&shifted).unwrap();
            prop_assert_eq!(a.map(|m| m + shift as u32), b);
        }
    }
}
