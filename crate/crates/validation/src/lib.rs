//! Seeded replications of the full pipeline on synthetic worlds, reduced to
//! the few numbers the acceptance suite scores.

use peerchurn_core::cox::{CoxOptions, CovariateSpec};
use peerchurn_core::gps::{fit_dose_response, fit_treatment_units, GpsOptions};
use peerchurn_core::panel::Split;
use peerchurn_core::pipeline::{prepare, Prepared, SampleOptions};
use peerchurn_core::synth::{generate_world, WorldConfig};
use peerchurn_core::{Execution, Result};

/// Cox estimate of the churner-friend coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    pub delta_true: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DeltaEstimate {
    pub fn covers(&self) -> bool {
        self.ci_low <= self.delta_true && self.delta_true <= self.ci_high
    }
}

/// GPS results for the primary split.
#[derive(Debug, Clone, PartialEq)]
pub struct GpsSummary {
    pub mte: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub naive_gap: Option<f64>,
    /// Balance cells flagged before adjustment, and how many of them clear.
    pub flagged_before: usize,
    pub cleared: usize,
    /// MTE point estimates for the alternate split.
    pub alternate_mte: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub seed: u64,
    pub delta: DeltaEstimate,
    pub gps: Option<GpsSummary>,
    /// frd_churn(5) <= frd_churn(3) <= frd_churn(1) <= frd in every cell.
    pub thresholds_monotone: bool,
}

/// What to run on each world beyond the Cox fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Plan {
    pub gps_reps: Option<usize>,
    pub alternate_split: bool,
}

impl Plan {
    pub const COX_ONLY: Plan = Plan {
        gps_reps: None,
        alternate_split: false,
    };
}

pub fn thresholds_monotone(p: &Prepared) -> bool {
    let t = &p.churner_friends;
    (0..p.graph.len() as u32).all(|ego| {
        (1..=t.months()).all(|m| {
            let c = |n| t.get(ego, m, n).unwrap_or(u32::MAX);
            c(5) <= c(3) && c(3) <= c(1) && c(1) <= p.graph.degree(ego)
        })
    })
}

/// Generates one world and runs the estimators on it.
pub fn run_replicate(config: &WorldConfig, plan: Plan, exec: Execution) -> Result<Replicate> {
    let world = generate_world(config, exec)?;
    let p = prepare(world.aggregate()?, &SampleOptions::default(), exec)?;
    let fit = p.fit_cox(1, CovariateSpec::Calls, &CoxOptions::default())?;
    let j = fit.index_of("frd_churn")?;
    let (ci_low, ci_high) = fit.confidence_interval(j, 0.95);
    let delta = DeltaEstimate {
        delta_true: config.contagion_log_hazard,
        estimate: fit.beta[j],
        se: fit.se[j],
        ci_low,
        ci_high,
    };
    let gps = match plan.gps_reps {
        None => None,
        Some(n_reps) => {
            let options = GpsOptions {
                n_reps,
                seed: config.seed,
                ..GpsOptions::default()
            };
            let g = p.run_gps(&Split::primary(), 1, &options, exec)?;
            let s = g.series();
            let (flagged_before, cleared) = g.balance.as_ref().map_or((0, 0), |b| {
                let before = b.cells.iter().filter(|c| c.flagged_before());
                (before.clone().count(), before.filter(|c| !c.flagged_after()).count())
            });
            let alternate_mte = if plan.alternate_split {
                let cs = p.cross_section(&Split::alternate(), 1)?;
                let model = fit_treatment_units(&cs.units, options.features)?;
                Some(fit_dose_response(&cs.units, &model, options.link, options.max_dose)?.mte)
            } else {
                None
            };
            Some(GpsSummary {
                mte: s.mte,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                naive_gap: g.naive.map(|n| n.gap),
                flagged_before,
                cleared,
                alternate_mte,
            })
        }
    };
    Ok(Replicate {
        seed: config.seed,
        delta,
        gps,
        thresholds_monotone: thresholds_monotone(&p),
    })
}

/// Runs `seeds` in order and keeps every result, failures included.
pub fn run_batch(base: &WorldConfig, seeds: impl IntoIterator<Item = u64>, plan: Plan) -> Vec<(u64, Result<Replicate>)> {
    seeds
        .into_iter()
        .map(|seed| (seed, run_replicate(&base.clone().with_seed(seed), plan, Execution::Parallel)))
        .collect()
}
