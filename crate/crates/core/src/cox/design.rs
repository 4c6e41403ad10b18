use serde::{Deserialize, Serialize};

use super::likelihood::CoxData;
use crate::error::Result;
use crate::panel::{PanelRow, SurvivalPanel};

/// Covariate sets for the hazard model. Both include the churner-friend
/// count, expenditure and degree; they differ in the usage measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateSpec {
    Calls,
    Airtime,
}

impl CovariateSpec {
    pub const ALL: [CovariateSpec; 2] = [CovariateSpec::Calls, CovariateSpec::Airtime];

    pub fn names(self) -> [&'static str; 5] {
        match self {
            CovariateSpec::Calls => ["frd_churn", "n_calls", "n_calls_sq", "expenditure", "frd"],
            CovariateSpec::Airtime => ["frd_churn", "airtime", "airtime_sq", "expenditure", "frd"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CovariateSpec::Calls => "calls",
            CovariateSpec::Airtime => "airtime",
        }
    }

    fn values(self, r: &PanelRow) -> [f64; 5] {
        match self {
            CovariateSpec::Calls => [r.frd_churn, r.n_calls, r.n_calls_sq(), r.expenditure, r.frd],
            CovariateSpec::Airtime => [r.frd_churn, r.airtime, r.airtime_sq(), r.expenditure, r.frd],
        }
    }
}

/// Counting-process design on the panel-month time scale, one frailty group
/// per subscriber. Month indicators are not added: on this time scale they
/// coincide with the baseline hazard steps.
pub fn design_from_panel(panel: &SurvivalPanel, spec: CovariateSpec) -> Result<CoxData> {
    let mut group_of = std::collections::HashMap::new();
    let n = panel.rows.len();
    let mut start = Vec::with_capacity(n);
    let mut stop = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * 5);
    for r in &panel.rows {
        let next = group_of.len() as u32;
        group.push(*group_of.entry(r.subscriber).or_insert(next));
        start.push(r.start() as f64);
        stop.push(r.stop() as f64);
        event.push(r.event);
        x.extend_from_slice(&spec.values(r));
    }
    CoxData::new(start, stop, event, group, x, spec.names().iter().map(|s| s.to_string()).collect())
}
