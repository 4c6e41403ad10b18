use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::treatment::{gps_density, TreatmentModel};
use crate::error::{Error, Result};
use crate::panel::GpsUnit;

/// Largest dose at which the response is reported by default.
pub const DEFAULT_MAX_DOSE: u32 = 5;

/// Link of the outcome regression. The linear probability model is the
/// default; probit keeps fitted probabilities inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeLink {
    #[default]
    Linear,
    Probit,
}

pub const OUTCOME_TERMS: [&str; 6] = ["const", "t", "t_sq", "r", "r_sq", "t_r"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseResponse {
    pub link: OutcomeLink,
    /// In [`OUTCOME_TERMS`] order.
    pub coefficients: [f64; 6],
    /// Average response at doses `0..=max_dose`.
    pub drf: Vec<f64>,
    /// `drf(t) - drf(0)`, with `mte[0] == 0` exactly.
    pub mte: Vec<f64>,
}

fn terms(t: f64, r: f64) -> [f64; 6] {
    [1.0, t, t * t, r, r * r, t * r]
}

fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    // scale columns so the rank test is unit free
    let scale: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).amax().max(f64::MIN_POSITIVE)).collect();
    let mut xs = x.clone();
    for (j, s) in scale.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let qr = xs.qr();
    let r = qr.r();
    let rmax = r.diagonal().amax();
    if let Some(j) = (0..r.ncols()).find(|&j| r[(j, j)].abs() <= 1e-10 * rmax) {
        return Err(Error::RankDeficient(format!("outcome term {} is collinear", OUTCOME_TERMS[j])));
    }
    let qty = qr.q().transpose() * y;
    let b = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("outcome regression is singular".into()))?;
    Ok(DVector::from_iterator(b.len(), b.iter().zip(&scale).map(|(b, s)| b / s)))
}

fn probit_loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, normal: &Normal) -> f64 {
    let eta = x * beta;
    (0..x.nrows())
        .map(|i| {
            let p = normal.cdf(eta[i]).clamp(1e-300, 1.0 - 1e-16);
            if y[i] > 0.5 { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

/// Probit maximum likelihood by Fisher scoring with step-halving, started at
/// the intercept-only solution.
fn probit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let normal = Normal::standard();
    let k = x.ncols();
    let mut beta = DVector::<f64>::zeros(k);
    beta[0] = normal.inverse_cdf(y.mean().clamp(1e-6, 1.0 - 1e-6));
    let mut ll = probit_loglik(x, y, &beta, &normal);
    let mut gnorm = f64::INFINITY;
    let mut last_step = 0.0;
    for _ in 0..100 {
        let eta = x * &beta;
        let mut grad = DVector::<f64>::zeros(k);
        let mut info = DMatrix::<f64>::zeros(k, k);
        for i in 0..x.nrows() {
            let p = normal.cdf(eta[i]).clamp(1e-12, 1.0 - 1e-12);
            let d = normal.pdf(eta[i]);
            let row = x.row(i);
            grad += row.transpose() * (d * (y[i] - p) / (p * (1.0 - p)));
            info += row.transpose() * row * (d * d / (p * (1.0 - p)));
        }
        gnorm = grad.amax();
        if gnorm <= 1e-8 {
            return Ok(beta);
        }
        let step = info
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("probit information matrix is singular".into()))?
            .solve(&grad);
        let mut s = 1.0;
        loop {
            let trial = &beta + &step * s;
            let tl = probit_loglik(x, y, &trial, &normal);
            if tl >= ll - 1e-12 * ll.abs().max(1.0) || s < 1e-10 {
                beta = trial;
                ll = tl;
                last_step = s * step.amax();
                break;
            }
            s *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: 100,
        gradient_norm: gnorm,
        last_step,
    })
}

/// Regresses the outcome on a quadratic in dose and score with their
/// interaction, then averages the fitted response over the sample at each
/// dose using every unit's own score at that dose.
pub fn fit_dose_response(
    units: &[GpsUnit],
    model: &TreatmentModel,
    link: OutcomeLink,
    max_dose: u32,
) -> Result<DoseResponse> {
    let n = units.len();
    if model.mu.len() != n {
        return Err(Error::Config("treatment model and cross-section differ in size".into()));
    }
    let x = DMatrix::from_fn(n, 6, |i, j| {
        let t = units[i].treatment as f64;
        terms(t, gps_density(t, model.mu[i]))[j]
    });
    let y = DVector::from_iterator(n, units.iter().map(|u| u.outcome as u8 as f64));
    let b = match link {
        OutcomeLink::Linear => ols(&x, &y)?,
        OutcomeLink::Probit => probit(&x, &y)?,
    };
    let coefficients: [f64; 6] = std::array::from_fn(|j| b[j]);
    let normal = Normal::standard();
    let drf: Vec<f64> = (0..=max_dose)
        .map(|t| {
            let t = t as f64;
            let total: f64 = model
                .mu
                .iter()
                .map(|&mu| {
                    let eta: f64 = terms(t, gps_density(t, mu)).iter().zip(&coefficients).map(|(a, b)| a * b).sum();
                    match link {
                        OutcomeLink::Linear => eta,
                        OutcomeLink::Probit => normal.cdf(eta),
                    }
                })
                .sum();
            total / n as f64
        })
        .collect();
    let mte = drf.iter().enumerate().map(|(t, d)| if t == 0 { 0.0 } else { d - drf[0] }).collect();
    Ok(DoseResponse {
        link,
        coefficients,
        drf,
        mte,
    })
}

/// Marginal effect curve with its bootstrap band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MteSeries {
    pub n_threshold: u32,
    pub t: Vec<u32>,
    pub mte: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

pub fn write_mte<W: Write>(out: W, series: &[MteSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_threshold", "t", "mte", "ci_low", "ci_high"])?;
    for s in series {
        for k in 0..s.t.len() {
            w.write_record([
                s.n_threshold.to_string(),
                s.t[k].to_string(),
                format!("{:.8}", s.mte[k]),
                format!("{:.8}", s.ci_low[k]),
                format!("{:.8}", s.ci_high[k]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<mte>", e))?;
    Ok(())
}
