use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::fit::CoxFit;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::stats::{mean, percentile_sorted, sort_floats};

pub const DEFAULT_SIMULATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardCurve {
    pub k: u32,
    pub mean_relative_hazard: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Simulated relative hazard `exp(b k)` for `k = 0..=k_max` with
/// `b ~ Normal(estimate, se²)`. The same draws serve every `k`.
pub fn mc_relative_hazard_from(
    estimate: f64,
    se: f64,
    k_max: u32,
    n_sims: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HazardCurve>> {
    if !(se >= 0.0) || !estimate.is_finite() {
        return Err(Error::Config("relative hazard needs a finite estimate and se ≥ 0".into()));
    }
    if n_sims == 0 {
        return Err(Error::Config("at least one simulation is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..n_sims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            estimate + se * z
        })
        .collect();
    Ok(exec.map_range(k_max as usize + 1, |k| {
        if k == 0 {
            return HazardCurve {
                k: 0,
                mean_relative_hazard: 1.0,
                ci_low: 1.0,
                ci_high: 1.0,
            };
        }
        let mut rh: Vec<f64> = draws.iter().map(|b| (b * k as f64).exp()).collect();
        let m = mean(&rh);
        sort_floats(&mut rh);
        HazardCurve {
            k: k as u32,
            mean_relative_hazard: m,
            ci_low: percentile_sorted(&rh, 0.025).min(m),
            ci_high: percentile_sorted(&rh, 0.975).max(m),
        }
    }))
}

pub fn mc_relative_hazard(
    fit: &CoxFit,
    covariate: &str,
    k_max: u32,
    n_sims: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<HazardCurve>> {
    let (b, se) = fit.coefficient(covariate)?;
    mc_relative_hazard_from(b, se, k_max, n_sims, seed, exec)
}

pub fn write_hazard_curves<W: Write>(out: W, curves: &[HazardCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "mean", "ci_low", "ci_high"])?;
    for c in curves {
        w.write_record([
            c.k.to_string(),
            format!("{:.6}", c.mean_relative_hazard),
            format!("{:.6}", c.ci_low),
            format!("{:.6}", c.ci_high),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<hazard curves>", e))?;
    Ok(())
}
