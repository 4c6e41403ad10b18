//! Generalized propensity score analysis of a continuous (count) treatment.

mod balance;
mod bootstrap;
mod dose;
mod treatment;

pub use balance::{balance_test, write_balance, BalanceCell, BalanceReport, TreatmentGroup, CRITICAL_T, DEFAULT_BLOCKS};
pub use bootstrap::{bootstrap_mte, BootstrapBands, DEFAULT_REPLICATES, MAX_DROPPED_SHARE};
pub use dose::{fit_dose_response, write_mte, DoseResponse, MteSeries, OutcomeLink, DEFAULT_MAX_DOSE, OUTCOME_TERMS};
pub use treatment::{
    compute_gps, fit_treatment_model, fit_treatment_units, gps_density, GpsValue, TreatmentFeatures, TreatmentModel,
    TREATMENT_TOLERANCE,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::panel::GpsCrossSection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpsOptions {
    pub features: TreatmentFeatures,
    pub link: OutcomeLink,
    pub max_dose: u32,
    pub n_blocks: usize,
    pub n_reps: usize,
    pub seed: u64,
}

impl Default for GpsOptions {
    fn default() -> Self {
        GpsOptions {
            features: TreatmentFeatures::default(),
            link: OutcomeLink::default(),
            max_dose: DEFAULT_MAX_DOSE,
            n_blocks: DEFAULT_BLOCKS,
            n_reps: DEFAULT_REPLICATES,
            seed: 0,
        }
    }
}

/// Everything estimated for one cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsAnalysis {
    pub n_threshold: u32,
    pub split_label: String,
    pub n_units: usize,
    pub treatment: TreatmentModel,
    /// `None` when a treatment group is empty; the reason is in `notes`.
    pub balance: Option<BalanceReport>,
    pub notes: Vec<String>,
    pub dose: DoseResponse,
    pub bands: BootstrapBands,
    /// Churn rate among exposed (T ≥ 1) minus churn rate among unexposed;
    /// `None` when either group is empty.
    pub naive: Option<NaiveGap>,
}

impl GpsAnalysis {
    pub fn series(&self) -> MteSeries {
        MteSeries {
            n_threshold: self.n_threshold,
            t: (0..=self.dose.mte.len() as u32 - 1).collect(),
            mte: self.dose.mte.clone(),
            // the band always covers the point estimate
            ci_low: self.bands.ci_low.iter().zip(&self.dose.mte).map(|(l, m)| l.min(*m)).collect(),
            ci_high: self.bands.ci_high.iter().zip(&self.dose.mte).map(|(h, m)| h.max(*m)).collect(),
        }
    }

    pub fn band_contains_zero(&self, t: usize) -> bool {
        let s = self.series();
        s.ci_low[t] <= 0.0 && 0.0 <= s.ci_high[t]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaiveGap {
    pub gap: f64,
    /// Unpooled two-proportion standard error.
    pub se: f64,
    /// Subscribers with at least [`NAIVE_HIGH_DOSE`] churner friends.
    pub n_exposed: usize,
    /// Subscribers with none.
    pub n_unexposed: usize,
}

/// Smallest treatment counted as high in the naive comparison: the groups
/// above T1.
pub const NAIVE_HIGH_DOSE: u32 = 2;

/// Difference in outcome rates between high-treatment and zero-treatment
/// subscribers, ignoring covariates.
pub fn naive_gap(cs: &GpsCrossSection) -> Option<NaiveGap> {
    let tally = |high: bool| {
        let sel: Vec<f64> = cs
            .units
            .iter()
            .filter(|u| if high { u.treatment >= NAIVE_HIGH_DOSE } else { u.treatment == 0 })
            .map(|u| u.outcome as u8 as f64)
            .collect();
        (!sel.is_empty()).then(|| (crate::stats::mean(&sel), sel.len()))
    };
    let (p1, n1) = tally(true)?;
    let (p0, n0) = tally(false)?;
    Some(NaiveGap {
        gap: p1 - p0,
        se: (p1 * (1.0 - p1) / n1 as f64 + p0 * (1.0 - p0) / n0 as f64).sqrt(),
        n_exposed: n1,
        n_unexposed: n0,
    })
}

pub fn run_gps(cs: &GpsCrossSection, options: &GpsOptions, exec: Execution) -> Result<GpsAnalysis> {
    let treatment = fit_treatment_units(&cs.units, options.features)?;
    let mut notes = Vec::new();
    let balance = match balance_test(&cs.units, &treatment, options.n_blocks) {
        Ok(b) => Some(b),
        Err(e @ Error::EmptyGroup(_)) => {
            notes.push(format!("balance not assessed: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let dose = fit_dose_response(&cs.units, &treatment, options.link, options.max_dose)?;
    let bands = bootstrap_mte(
        &cs.units,
        options.features,
        options.link,
        options.max_dose,
        options.n_reps,
        options.seed,
        exec,
    )?;
    Ok(GpsAnalysis {
        n_threshold: cs.n_threshold,
        split_label: cs.split.label(),
        n_units: cs.units.len(),
        treatment,
        balance,
        notes,
        dose,
        bands,
        naive: naive_gap(cs),
    })
}
