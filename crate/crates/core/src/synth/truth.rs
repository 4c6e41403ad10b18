use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::churn::SILENT_RUN;
use crate::error::{Error, Result};
use crate::graph::MIN_COPRESENT_MONTHS;

/// Why a generated churn happened. With the draw `u` that decided the
/// month, a churn is `Baseline` when it would have happened without any
/// exposure and `Contagion` when exposure tipped it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Baseline,
    Contagion,
}

impl Mechanism {
    pub fn code(self) -> &'static str {
        match self {
            Mechanism::Baseline => "baseline",
            Mechanism::Contagion => "contagion",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(Mechanism::Baseline),
            "contagion" => Some(Mechanism::Contagion),
            _ => None,
        }
    }
}

/// What the generator knows and the estimators must recover. Vectors are
/// indexed like the roster.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub seed: u64,
    pub n_months: u32,
    pub delta_true: f64,
    pub ids: Vec<String>,
    pub traits: Vec<Vec<f64>>,
    /// Window month of the first activity.
    pub join_index: Vec<u32>,
    pub churn_month: Vec<Option<u32>>,
    pub mechanism: Vec<Option<Mechanism>>,
    /// Observable churner friends counted by the hazard in the churn month.
    pub exposure_at_churn: Vec<Option<u32>>,
    /// Designated friendships, `a < b`.
    pub edges: Vec<(u32, u32)>,
}

pub const TRACE_FIXED_HEADER: [&str; 5] = ["subscriber_id", "join_index", "churn_month", "mechanism", "exposure"];

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn last_risk_month(&self) -> u32 {
        self.n_months - SILENT_RUN
    }

    /// Churn months that fall inside the datable range.
    pub fn datable_churn(&self, idx: usize) -> Option<u32> {
        self.churn_month[idx].filter(|&m| m <= self.last_risk_month())
    }

    pub fn n_churns(&self) -> usize {
        self.churn_month.iter().flatten().count()
    }

    pub fn n_contagion(&self) -> usize {
        self.mechanism.iter().filter(|m| **m == Some(Mechanism::Contagion)).count()
    }

    /// Whether every churn carries exactly one mechanism and nothing else does.
    pub fn mechanisms_partition_churns(&self) -> bool {
        self.churn_month
            .iter()
            .zip(&self.mechanism)
            .all(|(c, m)| c.is_some() == m.is_some())
    }

    /// Months `[first, last]` with outbound calls, as the generator placed them.
    pub fn presence(&self, idx: usize) -> (u32, u32) {
        let last = self.churn_month[idx].map_or(self.n_months, |c| c - 1);
        (self.join_index[idx], last)
    }

    /// Designated friendships with enough co-present months to be
    /// observable from the call records.
    pub fn recoverable_edges(&self) -> Vec<(u32, u32)> {
        self.edges
            .iter()
            .copied()
            .filter(|&(a, b)| {
                let (fa, la) = self.presence(a as usize);
                let (fb, lb) = self.presence(b as usize);
                let lo = fa.max(fb);
                let hi = la.min(lb);
                hi >= lo && hi - lo + 1 >= MIN_COPRESENT_MONTHS
            })
            .collect()
    }

    /// Correlation across friendships of the "churned within the datable
    /// range" indicators of the two ends.
    pub fn friend_churn_correlation(&self) -> f64 {
        let x: Vec<f64> = (0..self.len()).map(|i| self.datable_churn(i).is_some() as u8 as f64).collect();
        let mut left = Vec::with_capacity(2 * self.edges.len());
        let mut right = Vec::with_capacity(2 * self.edges.len());
        for &(a, b) in &self.edges {
            left.extend([x[a as usize], x[b as usize]]);
            right.extend([x[b as usize], x[a as usize]]);
        }
        pearson(&left, &right)
    }

    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.traits.first().map_or(0, Vec::len);
        let mut header: Vec<String> = TRACE_FIXED_HEADER.iter().map(|s| s.to_string()).collect();
        header.extend((1..=dim).map(|k| format!("trait_{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.ids[i].clone(),
                self.join_index[i].to_string(),
                self.churn_month[i].map_or(String::new(), |m| m.to_string()),
                self.mechanism[i].map_or("", Mechanism::code).to_string(),
                self.exposure_at_churn[i].map_or(String::new(), |e| e.to_string()),
            ];
            row.extend(self.traits[i].iter().map(|z| format!("{z:.17e}")));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<truth trace>", e))?;
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subscriber_a", "subscriber_b"])?;
        for &(a, b) in &self.edges {
            w.write_record([&self.ids[a as usize], &self.ids[b as usize]])?;
        }
        w.flush().map_err(|e| Error::io("<truth edges>", e))?;
        Ok(())
    }

    /// Reads a trace and edge list written by [`GroundTruth::write_trace`]
    /// and [`GroundTruth::write_edges`].
    pub fn read(trace: &Path, edges: &Path, seed: u64, n_months: u32, delta_true: f64) -> Result<Self> {
        let file = |p: &Path| p.display().to_string();
        let bad = |p: &Path, line: u64, reason: String| Error::Parse {
            file: file(p),
            line,
            reason,
        };
        let mut r = csv::Reader::from_path(trace)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < TRACE_FIXED_HEADER.len() + 1 || header[..5] != TRACE_FIXED_HEADER {
            return Err(Error::Schema {
                file: file(trace),
                expected: TRACE_FIXED_HEADER.join(","),
                found: header.join(","),
            });
        }
        let mut t = GroundTruth {
            seed,
            n_months,
            delta_true,
            ids: Vec::new(),
            traits: Vec::new(),
            join_index: Vec::new(),
            churn_month: Vec::new(),
            mechanism: Vec::new(),
            exposure_at_churn: Vec::new(),
            edges: Vec::new(),
        };
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = k as u64 + 2;
            let opt_u32 = |s: &str| -> Result<Option<u32>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(trace, line, format!("not a count: `{s}`")))
                }
            };
            t.ids.push(rec[0].to_string());
            t.join_index
                .push(rec[1].parse().map_err(|_| bad(trace, line, format!("bad join index `{}`", &rec[1])))?);
            t.churn_month.push(opt_u32(&rec[2])?);
            t.mechanism.push(if rec[3].is_empty() {
                None
            } else {
                Some(Mechanism::parse(&rec[3]).ok_or_else(|| bad(trace, line, format!("bad mechanism `{}`", &rec[3])))?)
            });
            t.exposure_at_churn.push(opt_u32(&rec[4])?);
            let z: Result<Vec<f64>> = rec
                .iter()
                .skip(5)
                .map(|s| s.parse().map_err(|_| bad(trace, line, format!("bad trait `{s}`"))))
                .collect();
            t.traits.push(z?);
        }
        let index: std::collections::HashMap<&str, u32> =
            t.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i as u32)).collect();
        let mut r = csv::Reader::from_path(edges)?;
        let mut list = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let look = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownSubscriber(s.to_string()));
            list.push((look(&rec[0])?, look(&rec[1])?));
        }
        t.edges = list;
        Ok(t)
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let mx = crate::stats::mean(x);
    let my = crate::stats::mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
