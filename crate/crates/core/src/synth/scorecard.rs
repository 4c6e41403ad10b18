use serde::{Deserialize, Serialize};

use super::truth::GroundTruth;
use crate::cox::CoxFit;
use crate::error::{Error, Result};
use crate::gps::GpsAnalysis;

/// Estimates produced from one world, tagged with what they were run on.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorOutputs<'a> {
    pub seed: u64,
    /// Roster the estimators saw.
    pub subscriber_ids: &'a [String],
    pub cox: &'a CoxFit,
    pub gps: &'a GpsAnalysis,
}

/// Estimates set against the generator's truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub seed: u64,
    pub n_threshold: u32,
    pub delta_true: f64,
    pub delta_hat: f64,
    pub delta_se: f64,
    /// `delta_hat - delta_true`.
    pub delta_bias: f64,
    pub delta_ci_low: f64,
    pub delta_ci_high: f64,
    pub delta_covered: bool,
    pub theta: f64,
    pub mte: Vec<f64>,
    pub mte_ci_low: Vec<f64>,
    pub mte_ci_high: Vec<f64>,
    pub mte1_sign: i8,
    pub mte1_band_contains_zero: bool,
    /// Bootstrap band half-width at t = 1 over 1.96.
    pub mte1_se: f64,
    pub mte_positive_increasing: bool,
    pub naive_gap: f64,
    pub naive_se: f64,
    pub naive_minus_mte1: f64,
    pub naive_overestimates: bool,
    pub churn_events: usize,
    pub contagion_events: usize,
    pub friend_churn_correlation: f64,
}

impl Scorecard {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scorecard serializes")
    }
}

/// Positive at t = 1 and strictly increasing over `1..=max`.
pub fn positive_increasing(mte: &[f64]) -> bool {
    mte.len() >= 2 && mte[1] > 0.0 && mte[1..].windows(2).all(|w| w[1] > w[0])
}

pub fn replay_ground_truth(truth: &GroundTruth, outputs: EstimatorOutputs<'_>) -> Result<Scorecard> {
    if outputs.seed != truth.seed {
        return Err(Error::GroundTruth(format!(
            "estimates were run with seed {} but the world was generated with seed {}",
            outputs.seed, truth.seed
        )));
    }
    if outputs.subscriber_ids != truth.ids.as_slice() {
        let missing = outputs
            .subscriber_ids
            .iter()
            .find(|id| truth.ids.binary_search(id).is_err())
            .map_or_else(|| "roster sizes differ".to_string(), |id| format!("`{id}` is not in the world"));
        return Err(Error::GroundTruth(format!("subscriber ids do not match the world: {missing}")));
    }
    let cox = outputs.cox;
    let j = cox
        .index_of("frd_churn")
        .map_err(|_| Error::GroundTruth("the Cox fit has no frd_churn coefficient".into()))?;
    let (delta_ci_low, delta_ci_high) = cox.confidence_interval(j, 0.95);
    let delta_hat = cox.beta[j];
    let gps = outputs.gps;
    let series = gps.series();
    if series.mte.len() < 2 {
        return Err(Error::GroundTruth("the MTE series stops before t = 1".into()));
    }
    let mte1 = series.mte[1];
    let naive = gps.naive.ok_or_else(|| Error::GroundTruth("naive gap undefined: an exposure group is empty".into()))?;
    Ok(Scorecard {
        seed: truth.seed,
        n_threshold: gps.n_threshold,
        delta_true: truth.delta_true,
        delta_hat,
        delta_se: cox.se[j],
        delta_bias: delta_hat - truth.delta_true,
        delta_ci_low,
        delta_ci_high,
        delta_covered: delta_ci_low <= truth.delta_true && truth.delta_true <= delta_ci_high,
        theta: cox.theta,
        mte1_sign: if mte1 > 0.0 { 1 } else if mte1 < 0.0 { -1 } else { 0 },
        mte1_band_contains_zero: series.ci_low[1] <= 0.0 && 0.0 <= series.ci_high[1],
        mte1_se: (gps.bands.ci_high[1] - gps.bands.ci_low[1]) / (2.0 * 1.96),
        mte_positive_increasing: positive_increasing(&series.mte),
        naive_gap: naive.gap,
        naive_se: naive.se,
        naive_minus_mte1: naive.gap - mte1,
        naive_overestimates: naive.gap - mte1 > 0.0,
        mte: series.mte,
        mte_ci_low: series.ci_low,
        mte_ci_high: series.ci_high,
        churn_events: truth.n_churns(),
        contagion_events: truth.n_contagion(),
        friend_churn_correlation: truth.friend_churn_correlation(),
    })
}
