use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{GpsUnit, GPS_COVARIATES};

/// How the cross-section covariates enter the treatment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreatmentFeatures {
    /// Covariates as they are.
    Raw,
    /// `ln(1 + x)` for tenure, calls, expenditure and degree; the share of
    /// off-net calls stays raw.
    #[default]
    Log1p,
}

impl TreatmentFeatures {
    pub fn transform(self, covariates: &[f64; 5]) -> [f64; 5] {
        match self {
            TreatmentFeatures::Raw => *covariates,
            TreatmentFeatures::Log1p => {
                let c = covariates;
                [c[0].ln_1p(), c[1].ln_1p(), c[2].ln_1p(), c[3].ln_1p(), c[4]]
            }
        }
    }

    pub fn matrix(self, units: &[GpsUnit]) -> Vec<f64> {
        units.iter().flat_map(|u| self.transform(&u.covariates)).collect()
    }
}

/// Exponential regression `T ~ Exponential(mean = exp(γ0 + x'γ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub names: Vec<String>,
    /// Intercept first, then one slope per covariate, on the input scale.
    pub gamma: Vec<f64>,
    pub loglik: f64,
    /// Fitted mean per observation.
    pub mu: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl TreatmentModel {
    pub fn mean_at(&self, x: &[f64]) -> f64 {
        let eta = self.gamma[0] + self.gamma[1..].iter().zip(x).map(|(g, v)| g * v).sum::<f64>();
        eta.exp()
    }
}

/// Generalized propensity score: exponential density with mean `mu` at `t`.
pub fn gps_density(t: f64, mu: f64) -> f64 {
    (-t / mu).exp() / mu
}

pub const TREATMENT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

fn loglik(t: &[f64], eta: &[f64]) -> f64 {
    t.iter().zip(eta).map(|(t, e)| -e - t * (-e).exp()).sum()
}

/// Maximum likelihood by Newton iterations with step-halving, on internally
/// standardized covariates. `x` is row-major `n × names.len()`.
pub fn fit_treatment_model(t: &[f64], x: &[f64], names: &[String]) -> Result<TreatmentModel> {
    let n = t.len();
    let p = names.len();
    if x.len() != n * p {
        return Err(Error::Config("treatment design has the wrong shape".into()));
    }
    if n < p + 10 {
        return Err(Error::TooFewObservations(format!(
            "treatment model with {p} covariates needs at least {} rows, got {n}",
            p + 10
        )));
    }
    if t.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Config("treatment must be finite and non-negative".into()));
    }
    let mean_t = crate::stats::mean(t);
    if mean_t <= 0.0 {
        return Err(Error::RankDeficient("every treatment is zero; the exponential mean is not identified".into()));
    }
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| x[i * p + j]).collect();
        center[j] = crate::stats::mean(&col);
        let sd = crate::stats::variance(&col).sqrt();
        if !(sd > 1e-12 * center[j].abs().max(1.0)) {
            return Err(Error::RankDeficient(format!("treatment covariate {} is constant", names[j])));
        }
        scale[j] = sd;
    }
    let q = p + 1;
    let z: Vec<f64> = (0..n)
        .flat_map(|i| {
            let row: Vec<f64> = std::iter::once(1.0)
                .chain((0..p).map(|j| (x[i * p + j] - center[j]) / scale[j]))
                .collect();
            row
        })
        .collect();
    let predictor = |g: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| z[i * q..(i + 1) * q].iter().zip(g).map(|(a, b)| a * b).sum())
            .collect()
    };

    let mut g = vec![0.0; q];
    g[0] = mean_t.ln();
    let mut eta = predictor(&g);
    let mut ll = loglik(t, &eta);
    let mut iterations = 0;
    let gnorm = loop {
        let mut grad = DVector::<f64>::zeros(q);
        let mut info = DMatrix::<f64>::zeros(q, q);
        for i in 0..n {
            let w = t[i] * (-eta[i]).exp();
            let zi = &z[i * q..(i + 1) * q];
            for a in 0..q {
                grad[a] += (w - 1.0) * zi[a];
                for b in 0..=a {
                    info[(a, b)] += w * zi[a] * zi[b];
                }
            }
        }
        let gnorm = grad.amax();
        if gnorm <= TREATMENT_TOLERANCE {
            break gnorm;
        }
        if iterations == MAX_ITERATIONS {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
                last_step: 0.0,
            });
        }
        info.fill_upper_triangle_with_lower_triangle();
        let step = info
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("treatment information matrix is singular (separation)".into()))?
            .solve(&grad);
        let mut s = 1.0;
        loop {
            let trial: Vec<f64> = g.iter().zip(step.iter()).map(|(a, d)| a + s * d).collect();
            let te = predictor(&trial);
            let tl = loglik(t, &te);
            // the objective is concave, so a full Newton step only fails far from the optimum
            if tl >= ll - 1e-12 * ll.abs().max(1.0) || s < 1e-10 {
                g = trial;
                eta = te;
                ll = tl;
                break;
            }
            s *= 0.5;
        }
        iterations += 1;
    };

    let mut gamma = vec![0.0; q];
    gamma[0] = g[0];
    for j in 0..p {
        gamma[j + 1] = g[j + 1] / scale[j];
        gamma[0] -= g[j + 1] * center[j] / scale[j];
    }
    Ok(TreatmentModel {
        names: names.to_vec(),
        gamma,
        loglik: ll,
        mu: eta.iter().map(|e| e.exp()).collect(),
        iterations,
        gradient_norm: gnorm,
    })
}

/// Fits the treatment model on a cross-section.
pub fn fit_treatment_units(units: &[GpsUnit], features: TreatmentFeatures) -> Result<TreatmentModel> {
    let t: Vec<f64> = units.iter().map(|u| u.treatment as f64).collect();
    let names: Vec<String> = GPS_COVARIATES.iter().map(|s| s.to_string()).collect();
    fit_treatment_model(&t, &features.matrix(units), &names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsValue {
    pub subscriber_id: String,
    pub treatment: u32,
    pub mu: f64,
    pub r: f64,
}

pub fn compute_gps(model: &TreatmentModel, units: &[GpsUnit]) -> Vec<GpsValue> {
    units
        .iter()
        .zip(&model.mu)
        .map(|(u, &mu)| GpsValue {
            subscriber_id: u.subscriber_id.clone(),
            treatment: u.treatment,
            mu,
            r: gps_density(u.treatment as f64, mu),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_values() {
        assert_eq!(gps_density(0.0, 1.0), 1.0);
        assert!((gps_density(2.0, 2.0) - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert!(gps_density(3.0, 2.0) < gps_density(2.0, 2.0));
    }

    #[test]
    fn intercept_is_log_mean_with_flat_covariate() {
        // covariate orthogonal to T leaves the intercept at ln(mean T) only if
        // the slope is zero; constant T forces that
        let n = 40;
        let t = vec![2.0; n];
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let m = fit_treatment_model(&t, &x, &["x".into()]).unwrap();
        assert!(m.gamma[1].abs() < 1e-12);
        assert!((m.gamma[0] - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_zero_treatment_is_rejected() {
        let t = vec![0.0; 30];
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert!(fit_treatment_model(&t, &x, &["x".into()]).is_err());
    }

    #[test]
    fn too_few_observations() {
        let t = vec![1.0; 5];
        let x = vec![0.0; 5];
        assert!(matches!(
            fit_treatment_model(&t, &x, &["x".into()]),
            Err(Error::TooFewObservations(_))
        ));
    }
}
