//! The analysis stages chained in memory.

use serde::{Deserialize, Serialize};

use crate::churn::{label_churn, ChurnLabels};
use crate::cox::{fit_cox, CoxFit, CoxOptions, CovariateSpec};
use crate::error::Result;
use crate::exec::Execution;
use crate::gps::{run_gps, GpsAnalysis, GpsOptions};
use crate::graph::{build_friendships, trim_sample, ChurnerFriendTable, FriendGraph, TrimReport, DEFAULT_DEGREE_CAP, DEFAULT_THRESHOLDS};
use crate::ingest::MonthlyAggregate;
use crate::panel::{build_gps_cross_section, entry_delay_for, build_survival_panel, FrdChurnMode, GpsCrossSection, PanelInputs, Split, SurvivalPanel};

/// Graph and sample settings shared by every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleOptions {
    pub thresholds: Vec<u32>,
    pub degree_cap: u32,
    /// Drop subscribers without any friend.
    pub require_degree: bool,
    pub frd_churn_mode: FrdChurnMode,
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            degree_cap: DEFAULT_DEGREE_CAP,
            require_degree: true,
            frd_churn_mode: FrdChurnMode::Cumulative,
        }
    }
}

/// Monthly usage plus everything derived from it before estimation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub usage: MonthlyAggregate,
    pub labels: ChurnLabels,
    pub graph: FriendGraph,
    pub trim: TrimReport,
    pub churner_friends: ChurnerFriendTable,
    pub options: SampleOptions,
}

pub fn prepare(usage: MonthlyAggregate, options: &SampleOptions, exec: Execution) -> Result<Prepared> {
    let labels = label_churn(&usage)?;
    let graph = build_friendships(&usage.pairs, &labels, usage.roster.len());
    let trim = trim_sample(&graph, options.degree_cap, options.require_degree)?;
    let churner_friends = ChurnerFriendTable::compute(&options.thresholds, &labels, &graph, &usage.pairs, exec);
    Ok(Prepared {
        usage,
        labels,
        graph,
        trim,
        churner_friends,
        options: options.clone(),
    })
}

impl Prepared {
    pub fn inputs(&self) -> PanelInputs<'_> {
        PanelInputs {
            usage: &self.usage,
            labels: &self.labels,
            graph: &self.graph,
            churner_friends: &self.churner_friends,
            retained: &self.trim.retained,
            entry_delay: entry_delay_for(self.options.require_degree),
        }
    }

    pub fn survival_panel(&self, n_threshold: u32) -> Result<SurvivalPanel> {
        build_survival_panel(self.inputs(), n_threshold, self.options.frd_churn_mode)
    }

    pub fn cross_section(&self, split: &Split, n_threshold: u32) -> Result<GpsCrossSection> {
        build_gps_cross_section(self.inputs(), split, n_threshold)
    }

    pub fn fit_cox(&self, n_threshold: u32, spec: CovariateSpec, options: &CoxOptions) -> Result<CoxFit> {
        fit_cox(&self.survival_panel(n_threshold)?, spec, options)
    }

    pub fn run_gps(&self, split: &Split, n_threshold: u32, options: &GpsOptions, exec: Execution) -> Result<GpsAnalysis> {
        run_gps(&self.cross_section(split, n_threshold)?, options, exec)
    }
}
