use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::likelihood::{evaluate, linear_predictor, CoxData, Frailty, NegHessian, RiskSets, Ties};
use crate::error::{Error, Result};

/// How the frailty variance is handled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "theta")]
pub enum FrailtyMode {
    /// Plain Cox model.
    Disabled,
    Fixed(f64),
    /// Choose theta by maximizing the marginal likelihood.
    #[default]
    Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    pub ties: Ties,
    pub frailty: FrailtyMode,
    /// Newton stops once the largest absolute gradient entry falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Log-spaced starting grid for the theta search.
    pub theta_grid: Vec<f64>,
    /// Bracket width in `ln(theta)` at which golden-section refinement stops.
    pub theta_log_tolerance: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions {
            ties: Ties::Breslow,
            frailty: FrailtyMode::Profile,
            tolerance: 1e-8,
            max_iterations: 100,
            theta_grid: (0..9).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect(),
            theta_log_tolerance: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub theta_evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStep {
    pub time: f64,
    pub events: usize,
    pub hazard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub theta: f64,
    pub baseline_hazard: Vec<BaselineStep>,
    /// Marginal log-likelihood with the frailties integrated out.
    pub loglik: f64,
    pub penalized_loglik: f64,
    pub n_obs: usize,
    pub n_events: usize,
    pub n_groups: usize,
    pub convergence: ConvergenceReport,
    /// Estimated log-frailty per group, empty without frailty.
    pub log_frailty: Vec<f64>,
    /// Every `(theta, marginal loglik)` pair visited by the search.
    pub theta_profile: Vec<(f64, f64)>,
    pub ties: Ties,
}

impl CoxFit {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("fit has no coefficient named {name}")))
    }

    pub fn coefficient(&self, name: &str) -> Result<(f64, f64)> {
        let j = self.index_of(name)?;
        Ok((self.beta[j], self.se[j]))
    }

    pub fn z(&self, j: usize) -> f64 {
        self.beta[j] / self.se[j]
    }

    /// Two-sided normal p-value.
    pub fn p_value(&self, j: usize) -> f64 {
        statrs::function::erf::erfc(self.z(j).abs() / std::f64::consts::SQRT_2)
    }

    pub fn confidence_interval(&self, j: usize, level: f64) -> (f64, f64) {
        use statrs::distribution::{ContinuousCDF, Normal};
        let q = Normal::standard().inverse_cdf(0.5 + level / 2.0);
        (self.beta[j] - q * self.se[j], self.beta[j] + q * self.se[j])
    }
}

struct ThetaFit {
    beta: Vec<f64>,
    w: Vec<f64>,
    ppl: f64,
    iterations: usize,
    gradient_norm: f64,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_direction(ev: &super::likelihood::Evaluation) -> Result<(Vec<f64>, Vec<f64>)> {
    match ev.hessian.as_ref().expect("hessian requested") {
        NegHessian::Dense(info) => {
            let chol = info
                .clone()
                .cholesky()
                .ok_or_else(|| Error::RankDeficient("information matrix is not positive definite".into()))?;
            let g = nalgebra::DVector::from_column_slice(&ev.grad_beta);
            Ok((chol.solve(&g).as_slice().to_vec(), Vec::new()))
        }
        NegHessian::Structured(h) => Ok(h
            .solve_many(&[(ev.grad_beta.clone(), ev.grad_w.clone())])?
            .remove(0)),
    }
}

fn eval_at(data: &CoxData, rs: &RiskSets, beta: &[f64], w: &[f64], theta: f64, ties: Ties, hess: bool) -> Result<super::likelihood::Evaluation> {
    let frailty = (theta > 0.0).then_some(Frailty { w, theta });
    evaluate(data, rs, beta, frailty, ties, hess)
}

/// Newton ascent on the penalized likelihood at fixed theta.
fn fit_at_theta(
    data: &CoxData,
    rs: &RiskSets,
    theta: f64,
    opts: &CoxOptions,
    beta0: &[f64],
    w0: &[f64],
) -> Result<ThetaFit> {
    let mut beta = beta0.to_vec();
    let mut w = if theta > 0.0 { w0.to_vec() } else { Vec::new() };
    let mut ev = eval_at(data, rs, &beta, &w, theta, opts.ties, true)?;
    let mut last_step = 0.0;
    // The frailty gradient carries (exp(w) - 1) / theta, so rounding noise
    // grows like 1/theta; it is measured on the w scale below theta = 1.
    let w_scale = theta.min(1.0);
    let norm = |ev: &super::likelihood::Evaluation| max_abs(&ev.grad_beta).max(w_scale * max_abs(&ev.grad_w));
    for iteration in 0..=opts.max_iterations {
        let gnorm = norm(&ev);
        if gnorm <= opts.tolerance {
            return Ok(ThetaFit {
                beta,
                w,
                ppl: ev.value,
                iterations: iteration,
                gradient_norm: gnorm,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let (db, dw) = newton_direction(&ev)?;
        let mut scale = 1.0;
        loop {
            let tb: Vec<f64> = beta.iter().zip(&db).map(|(b, d)| b + scale * d).collect();
            let tw: Vec<f64> = w.iter().zip(&dw).map(|(b, d)| b + scale * d).collect();
            let trial = eval_at(data, rs, &tb, &tw, theta, opts.ties, true);
            let ok = match &trial {
                Ok(t) => t.value.is_finite() && t.value >= ev.value - 1e-12 * ev.value.abs().max(1.0),
                Err(_) => false,
            };
            if ok || scale < 1e-12 {
                if let Ok(t) = trial {
                    last_step = scale * max_abs(&db).max(max_abs(&dw));
                    beta = tb;
                    w = tw;
                    ev = t;
                }
                break;
            }
            scale *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        gradient_norm: norm(&ev),
        last_step,
    })
}

/// Gamma-frailty marginal log-likelihood at a fitted `(beta, w)`, with the
/// Breslow baseline plugged in. `theta = 0` gives the plain Cox profile.
fn marginal_loglik(data: &CoxData, rs: &RiskSets, beta: &[f64], w: &[f64], theta: f64) -> f64 {
    let eta0 = linear_predictor(data, beta, None);
    let frail = |r: usize| if theta > 0.0 { w[data.group[r] as usize] } else { 0.0 };
    let mut cum = vec![0.0; data.n_groups];
    let mut deaths = vec![0u32; data.n_groups];
    let mut ll = 0.0;
    for k in 0..rs.len() {
        let risk = rs.at_risk(k);
        let d = rs.deaths(k).len() as f64;
        let m = risk.iter().map(|&r| eta0[r] + frail(r)).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = risk.iter().map(|&r| (eta0[r] + frail(r) - m).exp()).sum();
        let log_h0 = d.ln() - m - s.ln();
        for &r in rs.deaths(k) {
            ll += log_h0 + eta0[r];
            deaths[data.group[r] as usize] += 1;
        }
        for &r in risk {
            cum[data.group[r] as usize] += (log_h0 + eta0[r]).exp();
        }
    }
    for (i, &h) in cum.iter().enumerate() {
        if theta == 0.0 {
            ll -= h;
        } else {
            let di = deaths[i] as f64;
            // lnΓ(1/θ + D) − lnΓ(1/θ) + D ln θ, written as a finite sum
            ll += (0..deaths[i]).map(|j| (j as f64 * theta).ln_1p()).sum::<f64>();
            ll -= (1.0 / theta + di) * (theta * h).ln_1p();
        }
    }
    ll
}

struct Standardized {
    data: CoxData,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

fn standardize(data: &CoxData) -> Result<Standardized> {
    let n = data.rows();
    let p = data.p;
    let mut mean = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|r| data.x[r * p + j]).collect();
        mean[j] = crate::stats::mean(&col);
        scale[j] = crate::stats::variance(&col).sqrt();
        if !(scale[j] > 1e-12 * mean[j].abs().max(1.0)) {
            return Err(Error::RankDeficient(format!(
                "covariate {} is constant and cannot be separated from the baseline hazard",
                data.names[j]
            )));
        }
    }
    let mut out = data.clone();
    for r in 0..n {
        for j in 0..p {
            out.x[r * p + j] = (data.x[r * p + j] - mean[j]) / scale[j];
        }
    }
    // correlation matrix rank check
    let mut corr = DMatrix::<f64>::zeros(p, p);
    for r in 0..n {
        let x = out.row(r);
        for a in 0..p {
            for b in 0..p {
                corr[(a, b)] += x[a] * x[b];
            }
        }
    }
    corr /= (n.max(2) - 1) as f64;
    if p > 0 {
        let eig = corr.clone().symmetric_eigen();
        let (imin, min) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if min < 1e-10 {
            let v = eig.eigenvectors.column(imin);
            let involved: Vec<&str> = (0..p)
                .filter(|&j| v[j].abs() > 1e-3)
                .map(|j| data.names[j].as_str())
                .collect();
            return Err(Error::RankDeficient(format!(
                "collinear covariates: {}",
                involved.join(", ")
            )));
        }
    }
    Ok(Standardized { data: out, mean, scale })
}

/// Covariance of the coefficients from the inverse negative Hessian.
fn coefficient_covariance(data: &CoxData, rs: &RiskSets, fit: &ThetaFit, theta: f64, ties: Ties) -> Result<DMatrix<f64>> {
    let p = data.p;
    let ev = eval_at(data, rs, &fit.beta, &fit.w, theta, ties, true)?;
    match ev.hessian.expect("hessian requested") {
        NegHessian::Dense(info) => info
            .try_inverse()
            .ok_or_else(|| Error::RankDeficient("information matrix is singular".into())),
        NegHessian::Structured(h) => {
            let rhs: Vec<(Vec<f64>, Vec<f64>)> = (0..p)
                .map(|j| {
                    let mut e = vec![0.0; p];
                    e[j] = 1.0;
                    (e, vec![0.0; data.n_groups])
                })
                .collect();
            let cols = h.solve_many(&rhs)?;
            let mut cov = DMatrix::<f64>::zeros(p, p);
            for (j, (cb, _)) in cols.iter().enumerate() {
                for a in 0..p {
                    cov[(a, j)] = cb[a];
                }
            }
            Ok(cov)
        }
    }
}

/// Fits the Cox model with an optional gamma frailty per group.
pub fn fit_cox_data(data: &CoxData, options: &CoxOptions) -> Result<CoxFit> {
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let uses_frailty = !matches!(options.frailty, FrailtyMode::Disabled | FrailtyMode::Fixed(0.0));
    if uses_frailty && options.ties == Ties::Efron {
        return Err(Error::Unsupported("Efron ties are only available without frailty".into()));
    }
    let std = standardize(data)?;
    let sd = &std.data;
    let rs = RiskSets::new(sd);
    let p = sd.p;
    let zeros_b = vec![0.0; p];
    let zeros_w = vec![0.0; sd.n_groups];

    let mut profile = Vec::new();
    let mut evaluations = 0;
    let mut run = |theta: f64, b0: &[f64], w0: &[f64], profile: &mut Vec<(f64, f64)>| -> Result<(ThetaFit, f64)> {
        let f = fit_at_theta(sd, &rs, theta, options, b0, w0)?;
        let ll = marginal_loglik(sd, &rs, &f.beta, &f.w, theta);
        profile.push((theta, ll));
        evaluations += 1;
        Ok((f, ll))
    };

    let (theta, best) = match options.frailty {
        FrailtyMode::Disabled => (0.0, run(0.0, &zeros_b, &zeros_w, &mut profile)?.0),
        FrailtyMode::Fixed(t) => {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("frailty variance must be non-negative, got {t}")));
            }
            (t, run(t, &zeros_b, &zeros_w, &mut profile)?.0)
        }
        FrailtyMode::Profile => {
            let grid = &options.theta_grid;
            if grid.is_empty() || grid.iter().any(|&t| !(t > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("theta grid must be positive and increasing".into()));
            }
            let (plain, ll0) = run(0.0, &zeros_b, &zeros_w, &mut profile)?;
            let mut best = (0.0, ll0, plain.beta.clone(), zeros_w.clone());
            let mut warm = (plain.beta.clone(), zeros_w.clone());
            let mut grid_ll = Vec::with_capacity(grid.len());
            for &t in grid {
                let (f, ll) = run(t, &warm.0, &warm.1, &mut profile)?;
                grid_ll.push(ll);
                if ll > best.1 {
                    best = (t, ll, f.beta.clone(), f.w.clone());
                }
                warm = (f.beta, f.w);
            }
            if best.0 > 0.0 {
                let j = grid.iter().position(|&t| t == best.0).unwrap();
                let step = if grid.len() > 1 { (grid[1] / grid[0]).ln() } else { 1.0 };
                let mut lo = if j == 0 { grid[0].ln() - step } else { grid[j - 1].ln() };
                let mut hi = if j + 1 == grid.len() { grid[j].ln() } else { grid[j + 1].ln() };
                let phi = (5f64.sqrt() - 1.0) / 2.0;
                let mut x1 = hi - phi * (hi - lo);
                let mut x2 = lo + phi * (hi - lo);
                let start = (best.2.clone(), best.3.clone());
                let mut eval_log = |x: f64, profile: &mut Vec<(f64, f64)>, best: &mut (f64, f64, Vec<f64>, Vec<f64>)| -> Result<f64> {
                    let (f, ll) = run(x.exp(), &start.0, &start.1, profile)?;
                    if ll > best.1 {
                        *best = (x.exp(), ll, f.beta, f.w);
                    }
                    Ok(ll)
                };
                let mut f1 = eval_log(x1, &mut profile, &mut best)?;
                let mut f2 = eval_log(x2, &mut profile, &mut best)?;
                while hi - lo > options.theta_log_tolerance {
                    if f1 >= f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = eval_log(x1, &mut profile, &mut best)?;
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = eval_log(x2, &mut profile, &mut best)?;
                    }
                }
            }
            let theta = best.0;
            let (f, _) = run(theta, &best.2, &best.3, &mut profile)?;
            profile.pop();
            (theta, f)
        }
    };

    let ll = marginal_loglik(sd, &rs, &best.beta, &best.w, theta);
    let cov = coefficient_covariance(sd, &rs, &best, theta, options.ties)?;
    let mut beta = vec![0.0; p];
    let mut se = vec![0.0; p];
    for j in 0..p {
        if !(cov[(j, j)] > 0.0) {
            return Err(Error::RankDeficient(format!("non-positive variance for {}", sd.names[j])));
        }
        beta[j] = best.beta[j] / std.scale[j];
        se[j] = cov[(j, j)].sqrt() / std.scale[j];
    }
    let _ = &std.mean;
    profile.sort_by(|a, b| a.0.total_cmp(&b.0));
    profile.dedup_by(|a, b| a.0 == b.0);

    let mut fit = CoxFit {
        names: data.names.clone(),
        beta,
        se,
        theta,
        baseline_hazard: Vec::new(),
        loglik: ll,
        penalized_loglik: best.ppl,
        n_obs: data.rows(),
        n_events: data.n_events(),
        n_groups: data.n_groups,
        convergence: ConvergenceReport {
            iterations: best.iterations,
            gradient_norm: best.gradient_norm,
            theta_evaluations: evaluations,
        },
        log_frailty: best.w,
        theta_profile: profile,
        ties: options.ties,
    };
    fit.baseline_hazard = breslow_baseline(&fit, data)?;
    Ok(fit)
}

/// Breslow estimate `h0(t) = d_t / Σ_{risk set} α_i exp(x'β)` at each event
/// time, on the original covariate scale.
pub fn breslow_baseline(fit: &CoxFit, data: &CoxData) -> Result<Vec<BaselineStep>> {
    if fit.beta.len() != data.p {
        return Err(Error::Config("fit and design have different covariates".into()));
    }
    let w = (fit.theta > 0.0).then_some(fit.log_frailty.as_slice());
    if let Some(w) = w {
        if w.len() != data.n_groups {
            return Err(Error::Config("fit and design have different frailty groups".into()));
        }
    }
    let eta = linear_predictor(data, &fit.beta, w);
    let rs = RiskSets::new(data);
    Ok((0..rs.len())
        .map(|k| {
            let d = rs.deaths(k).len();
            let s: f64 = rs.at_risk(k).iter().map(|&r| eta[r].exp()).sum();
            BaselineStep {
                time: rs.times[k],
                events: d,
                hazard: d as f64 / s,
            }
        })
        .collect())
}

/// Martingale residuals `event - α exp(x'β) Σ h0` per row.
pub fn martingale_residuals(fit: &CoxFit, data: &CoxData) -> Result<Vec<f64>> {
    let w = (fit.theta > 0.0).then_some(fit.log_frailty.as_slice());
    let eta = linear_predictor(data, &fit.beta, w);
    Ok((0..data.rows())
        .map(|r| {
            let cum: f64 = fit
                .baseline_hazard
                .iter()
                .filter(|s| data.start[r] < s.time && s.time <= data.stop[r])
                .map(|s| s.hazard)
                .sum();
            data.event[r] as u8 as f64 - eta[r].exp() * cum
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> CoxData {
        CoxData::new(
            vec![0.0; 3],
            vec![1.0, 2.0, 2.0],
            vec![true, false, false],
            vec![0, 1, 2],
            vec![1.0, 0.0, 2.0],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn baseline_one_third() {
        let d = three();
        let fit = CoxFit {
            names: vec!["x".into()],
            beta: vec![0.0],
            se: vec![1.0],
            theta: 0.0,
            baseline_hazard: vec![],
            loglik: 0.0,
            penalized_loglik: 0.0,
            n_obs: 3,
            n_events: 1,
            n_groups: 3,
            convergence: ConvergenceReport {
                iterations: 0,
                gradient_norm: 0.0,
                theta_evaluations: 0,
            },
            log_frailty: vec![],
            theta_profile: vec![],
            ties: Ties::Breslow,
        };
        let h = breslow_baseline(&fit, &d).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].hazard - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn no_events_is_an_error() {
        let mut d = three();
        d.event = vec![false; 3];
        assert!(matches!(fit_cox_data(&d, &CoxOptions::default()), Err(Error::NoEvents)));
    }

    #[test]
    fn collinear_columns_are_rejected() {
        let d = CoxData::new(
            vec![0.0; 4],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true, true, false, true],
            vec![0, 1, 2, 3],
            vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 0.5, 1.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(matches!(fit_cox_data(&d, &CoxOptions::default()), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn efron_with_frailty_is_unsupported() {
        let opts = CoxOptions {
            ties: Ties::Efron,
            ..Default::default()
        };
        assert!(matches!(fit_cox_data(&three(), &opts), Err(Error::Unsupported(_))));
    }
}
