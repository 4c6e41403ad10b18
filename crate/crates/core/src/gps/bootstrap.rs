use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dose::{fit_dose_response, OutcomeLink};
use super::treatment::{fit_treatment_units, TreatmentFeatures};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::panel::GpsUnit;
use crate::stats::{percentile_sorted, sort_floats};

pub const DEFAULT_REPLICATES: usize = 100;
/// Largest share of failed replicates tolerated.
pub const MAX_DROPPED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBands {
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub replicates: usize,
    pub dropped: usize,
    pub warnings: Vec<String>,
}

/// Resamples subscribers with replacement, refits both models per
/// replicate and returns percentile 2.5/97.5 bands of the marginal effects.
/// Replicate `r` draws from its own stream seeded with `seed + r`.
pub fn bootstrap_mte(
    units: &[GpsUnit],
    features: TreatmentFeatures,
    link: OutcomeLink,
    max_dose: u32,
    n_reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<BootstrapBands> {
    if units.len() < 100 {
        return Err(Error::TooFewObservations(format!(
            "bootstrap needs at least 100 subscribers, got {}",
            units.len()
        )));
    }
    if n_reps == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let n = units.len();
    let replicate = |r: usize| -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let sample: Vec<GpsUnit> = (0..n).map(|_| units[rng.random_range(0..n)].clone()).collect();
        let model = fit_treatment_units(&sample, features).ok()?;
        fit_dose_response(&sample, &model, link, max_dose).ok().map(|d| d.mte)
    };
    let results = exec.map_range(n_reps, replicate);
    let kept: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let dropped = n_reps - kept.len();
    if dropped as f64 > MAX_DROPPED_SHARE * n_reps as f64 || kept.is_empty() {
        return Err(Error::Bootstrap { dropped, total: n_reps });
    }
    let mut warnings = Vec::new();
    if dropped > 0 {
        warnings.push(format!("{dropped} of {n_reps} bootstrap replicates failed and were dropped"));
    }
    if kept.len() == 1 {
        warnings.push("a single replicate gives a degenerate band".into());
    }
    let doses = max_dose as usize + 1;
    let mut ci_low = vec![0.0; doses];
    let mut ci_high = vec![0.0; doses];
    for t in 1..doses {
        let mut v: Vec<f64> = kept.iter().map(|m| m[t]).collect();
        sort_floats(&mut v);
        ci_low[t] = percentile_sorted(&v, 0.025);
        ci_high[t] = percentile_sorted(&v, 0.975);
    }
    Ok(BootstrapBands {
        ci_low,
        ci_high,
        replicates: kept.len(),
        dropped,
        warnings,
    })
}
