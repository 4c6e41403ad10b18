//! Partial likelihood for counting-process data with optional per-group
//! log-frailty terms under a gamma penalty.
//!
//! With frailties `w` and variance `theta` the objective is
//!
//! ```text
//! PPL(beta, w) = PL(beta, w) - (1/theta) * sum_i (exp(w_i) - w_i)
//! ```
//!
//! The negative Hessian in `(beta, w)` is an arrowhead matrix minus a
//! low-rank term with one column per distinct event time, which keeps the
//! Newton solve linear in the number of groups.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ties {
    #[default]
    Breslow,
    Efron,
}

/// Counting-process survival design: row `r` is at risk on `(start, stop]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxData {
    pub start: Vec<f64>,
    pub stop: Vec<f64>,
    pub event: Vec<bool>,
    /// Frailty group of each row, `0..n_groups`.
    pub group: Vec<u32>,
    pub n_groups: usize,
    /// Row-major `rows × p` covariates.
    pub x: Vec<f64>,
    pub p: usize,
    pub names: Vec<String>,
}

impl CoxData {
    pub fn new(
        start: Vec<f64>,
        stop: Vec<f64>,
        event: Vec<bool>,
        group: Vec<u32>,
        x: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = stop.len();
        let p = names.len();
        if start.len() != n || event.len() != n || group.len() != n || x.len() != n * p {
            return Err(Error::Config("inconsistent survival design dimensions".into()));
        }
        if start.iter().zip(&stop).any(|(a, b)| !(a < b)) {
            return Err(Error::Config("every row needs start < stop".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite covariate value".into()));
        }
        let n_groups = group.iter().map(|&g| g as usize + 1).max().unwrap_or(0);
        Ok(CoxData {
            start,
            stop,
            event,
            group,
            n_groups,
            x,
            p,
            names,
        })
    }

    pub fn rows(&self) -> usize {
        self.stop.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.p..(r + 1) * self.p]
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    /// Copy with column `j` replaced by `f(old)`.
    pub fn map_column(&self, j: usize, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows() {
            out.x[r * self.p + j] = f(out.x[r * self.p + j]);
        }
        out
    }
}

/// Rows at risk and rows failing at each distinct event time.
#[derive(Debug, Clone)]
pub(crate) struct RiskSets {
    pub times: Vec<f64>,
    risk_off: Vec<usize>,
    risk: Vec<usize>,
    death_off: Vec<usize>,
    deaths: Vec<usize>,
}

impl RiskSets {
    pub fn new(data: &CoxData) -> Self {
        let mut times: Vec<f64> = (0..data.rows())
            .filter(|&r| data.event[r])
            .map(|r| data.stop[r])
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut rs = RiskSets {
            times: times.clone(),
            risk_off: vec![0],
            risk: Vec::new(),
            death_off: vec![0],
            deaths: Vec::new(),
        };
        for &t in &times {
            for r in 0..data.rows() {
                if data.start[r] < t && t <= data.stop[r] {
                    rs.risk.push(r);
                    if data.event[r] && data.stop[r] == t {
                        rs.deaths.push(r);
                    }
                }
            }
            rs.risk_off.push(rs.risk.len());
            rs.death_off.push(rs.deaths.len());
        }
        rs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn at_risk(&self, k: usize) -> &[usize] {
        &self.risk[self.risk_off[k]..self.risk_off[k + 1]]
    }

    pub fn deaths(&self, k: usize) -> &[usize] {
        &self.deaths[self.death_off[k]..self.death_off[k + 1]]
    }
}

/// Pieces of the negative Hessian `B - M M^T` in `(beta, w)`.
#[derive(Debug, Clone)]
pub(crate) struct Structured {
    /// `p × p`.
    pub b_bb: DMatrix<f64>,
    /// `n_groups × p`, row `i` couples group `i` with the coefficients.
    pub c: Vec<f64>,
    /// Diagonal of the frailty block, penalty included.
    pub diag: Vec<f64>,
    /// `p × K`.
    pub m_b: DMatrix<f64>,
    /// `n_groups × K`, row-major.
    pub m_w: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum NegHessian {
    Dense(DMatrix<f64>),
    Structured(Structured),
}

#[derive(Debug, Clone)]
pub(crate) struct Evaluation {
    pub value: f64,
    pub grad_beta: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub hessian: Option<NegHessian>,
}

pub(crate) struct Frailty<'a> {
    pub w: &'a [f64],
    pub theta: f64,
}

pub(crate) fn linear_predictor(data: &CoxData, beta: &[f64], w: Option<&[f64]>) -> Vec<f64> {
    (0..data.rows())
        .map(|r| {
            let xb: f64 = data.row(r).iter().zip(beta).map(|(x, b)| x * b).sum();
            xb + w.map_or(0.0, |w| w[data.group[r] as usize])
        })
        .collect()
}

/// Penalized partial log-likelihood, gradient and optionally the negative
/// Hessian.
pub(crate) fn evaluate(
    data: &CoxData,
    rs: &RiskSets,
    beta: &[f64],
    frailty: Option<Frailty<'_>>,
    ties: Ties,
    want_hessian: bool,
) -> Result<Evaluation> {
    match (&frailty, ties) {
        (None, Ties::Breslow) | (None, Ties::Efron) => evaluate_plain(data, rs, beta, ties, want_hessian),
        (Some(f), Ties::Breslow) => Ok(evaluate_frailty(data, rs, beta, f, want_hessian)),
        (Some(_), Ties::Efron) => Err(Error::Unsupported(
            "Efron ties are only available without frailty".into(),
        )),
    }
}

fn evaluate_plain(data: &CoxData, rs: &RiskSets, beta: &[f64], ties: Ties, want_hessian: bool) -> Result<Evaluation> {
    let p = data.p;
    let eta = linear_predictor(data, beta, None);
    let mut value = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = DMatrix::<f64>::zeros(p, p);
    let mut s1 = vec![0.0; p];
    let mut s2 = DMatrix::<f64>::zeros(p, p);
    let mut d1 = vec![0.0; p];
    let mut d2 = DMatrix::<f64>::zeros(p, p);

    for k in 0..rs.len() {
        let risk = rs.at_risk(k);
        let deaths = rs.deaths(k);
        let d = deaths.len() as f64;
        let shift = risk.iter().map(|&r| eta[r]).fold(f64::NEG_INFINITY, f64::max);
        // risk-set sums, scaled by exp(-shift)
        let mut s0 = 0.0;
        s1.iter_mut().for_each(|v| *v = 0.0);
        if want_hessian {
            s2.fill(0.0);
        }
        for &r in risk {
            let e = (eta[r] - shift).exp();
            s0 += e;
            let x = data.row(r);
            for a in 0..p {
                s1[a] += e * x[a];
                if want_hessian {
                    for b in 0..=a {
                        s2[(a, b)] += e * x[a] * x[b];
                    }
                }
            }
        }
        for &r in deaths {
            value += eta[r];
            for a in 0..p {
                grad[a] += data.row(r)[a];
            }
        }
        // deaths' own sums, needed by Efron
        let mut ds0 = 0.0;
        if ties == Ties::Efron {
            d1.iter_mut().for_each(|v| *v = 0.0);
            if want_hessian {
                d2.fill(0.0);
            }
            for &r in deaths {
                let e = (eta[r] - shift).exp();
                ds0 += e;
                let x = data.row(r);
                for a in 0..p {
                    d1[a] += e * x[a];
                    if want_hessian {
                        for b in 0..=a {
                            d2[(a, b)] += e * x[a] * x[b];
                        }
                    }
                }
            }
        }
        let steps: Vec<f64> = match ties {
            Ties::Breslow => vec![0.0; 1],
            Ties::Efron => (0..deaths.len()).map(|l| l as f64 / d).collect(),
        };
        let weight = match ties {
            Ties::Breslow => d,
            Ties::Efron => 1.0,
        };
        for frac in steps {
            let den = s0 - frac * ds0;
            value -= weight * (shift + den.ln());
            for a in 0..p {
                let num_a = s1[a] - frac * d1[a];
                grad[a] -= weight * num_a / den;
                if want_hessian {
                    for b in 0..=a {
                        let num_b = s1[b] - frac * d1[b];
                        let second = s2[(a, b)] - frac * d2[(a, b)];
                        info[(a, b)] += weight * (second / den - num_a * num_b / (den * den));
                    }
                }
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    Ok(Evaluation {
        value,
        grad_beta: grad,
        grad_w: Vec::new(),
        hessian: want_hessian.then_some(NegHessian::Dense(info)),
    })
}

fn evaluate_frailty(data: &CoxData, rs: &RiskSets, beta: &[f64], f: &Frailty<'_>, want_hessian: bool) -> Evaluation {
    let p = data.p;
    let n = data.n_groups;
    let kk = rs.len();
    let eta = linear_predictor(data, beta, Some(f.w));
    let inv_theta = 1.0 / f.theta;

    let mut value = 0.0;
    let mut grad_b = vec![0.0; p];
    let mut grad_w = vec![0.0; n];
    let mut b_bb = DMatrix::<f64>::zeros(p, p);
    let mut c = vec![0.0; if want_hessian { n * p } else { 0 }];
    let mut diag = vec![0.0; n];
    let mut m_b = DMatrix::<f64>::zeros(p, kk);
    let mut m_w = vec![0.0; if want_hessian { n * kk } else { 0 }];
    let mut xbar = vec![0.0; p];

    for k in 0..kk {
        let risk = rs.at_risk(k);
        let deaths = rs.deaths(k);
        let d = deaths.len() as f64;
        let shift = risk.iter().map(|&r| eta[r]).fold(f64::NEG_INFINITY, f64::max);
        let s0: f64 = risk.iter().map(|&r| (eta[r] - shift).exp()).sum();
        value -= d * (shift + s0.ln());
        xbar.iter_mut().for_each(|v| *v = 0.0);
        let sqrt_d = d.sqrt();
        for &r in risk {
            let pi = (eta[r] - shift).exp() / s0;
            let g = data.group[r] as usize;
            let x = data.row(r);
            grad_w[g] -= d * pi;
            for a in 0..p {
                xbar[a] += pi * x[a];
            }
            if want_hessian {
                diag[g] += d * pi;
                m_w[g * kk + k] += sqrt_d * pi;
                for a in 0..p {
                    c[g * p + a] += d * pi * x[a];
                    for b in 0..=a {
                        b_bb[(a, b)] += d * pi * x[a] * x[b];
                    }
                }
            }
        }
        for a in 0..p {
            grad_b[a] -= d * xbar[a];
            m_b[(a, k)] = sqrt_d * xbar[a];
        }
        for &r in deaths {
            value += eta[r];
            grad_w[data.group[r] as usize] += 1.0;
            for a in 0..p {
                grad_b[a] += data.row(r)[a];
            }
        }
    }
    for (i, &wi) in f.w.iter().enumerate() {
        let e = wi.exp();
        value -= inv_theta * (e - wi);
        grad_w[i] -= inv_theta * (e - 1.0);
        diag[i] += inv_theta * e;
    }
    for a in 0..p {
        for b in 0..a {
            b_bb[(b, a)] = b_bb[(a, b)];
        }
    }
    Evaluation {
        value,
        grad_beta: grad_b,
        grad_w,
        hessian: want_hessian.then_some(NegHessian::Structured(Structured {
            b_bb,
            c,
            diag,
            m_b,
            m_w,
            k: kk,
        })),
    }
}

impl Structured {
    /// Solves `B y = v` for the arrowhead part.
    fn solve_b(&self, schur: &nalgebra::Cholesky<f64, nalgebra::Dyn>, vb: &[f64], vw: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let p = self.b_bb.nrows();
        let n = self.diag.len();
        let mut rhs = DVector::from_column_slice(vb);
        for i in 0..n {
            let s = vw[i] / self.diag[i];
            for a in 0..p {
                rhs[a] -= self.c[i * p + a] * s;
            }
        }
        let yb = schur.solve(&rhs);
        let yw: Vec<f64> = (0..n)
            .map(|i| {
                let cy: f64 = (0..p).map(|a| self.c[i * p + a] * yb[a]).sum();
                (vw[i] - cy) / self.diag[i]
            })
            .collect();
        (yb.as_slice().to_vec(), yw)
    }

    fn schur(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let p = self.b_bb.nrows();
        let mut s = self.b_bb.clone();
        for (i, &di) in self.diag.iter().enumerate() {
            let ci = &self.c[i * p..(i + 1) * p];
            for a in 0..p {
                for b in 0..p {
                    s[(a, b)] -= ci[a] * ci[b] / di;
                }
            }
        }
        s.cholesky()
            .ok_or_else(|| Error::RankDeficient("coefficient block is not positive definite".into()))
    }

    /// Solves `(B - M M^T) x = v` for every right-hand side in `rhs`.
    pub fn solve_many(&self, rhs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let p = self.b_bb.nrows();
        let n = self.diag.len();
        let kk = self.k;
        let schur = self.schur()?;
        // U = B^{-1} M, column by column
        let mut u: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(kk);
        for k in 0..kk {
            let mb: Vec<f64> = (0..p).map(|a| self.m_b[(a, k)]).collect();
            let mw: Vec<f64> = (0..n).map(|i| self.m_w[i * kk + k]).collect();
            u.push(self.solve_b(&schur, &mb, &mw));
        }
        let mt = |k: usize, y: &(Vec<f64>, Vec<f64>)| -> f64 {
            let a: f64 = (0..p).map(|j| self.m_b[(j, k)] * y.0[j]).sum();
            let b: f64 = (0..n).map(|i| self.m_w[i * kk + k] * y.1[i]).sum();
            a + b
        };
        let mut g = DMatrix::<f64>::identity(kk, kk);
        for (l, ul) in u.iter().enumerate() {
            for k in 0..kk {
                g[(k, l)] -= mt(k, ul);
            }
        }
        let g_lu = g.lu();
        rhs.iter()
            .map(|(vb, vw)| {
                let y = self.solve_b(&schur, vb, vw);
                let mty = DVector::from_iterator(kk, (0..kk).map(|k| mt(k, &y)));
                let z = g_lu
                    .solve(&mty)
                    .ok_or_else(|| Error::RankDeficient("low-rank correction is singular".into()))?;
                let (mut xb, mut xw) = y;
                for (k, uk) in u.iter().enumerate() {
                    for a in 0..p {
                        xb[a] += uk.0[a] * z[k];
                    }
                    for i in 0..n {
                        xw[i] += uk.1[i] * z[k];
                    }
                }
                Ok((xb, xw))
            })
            .collect()
    }

    /// Solves the frailty block alone, `(D - M_w M_w^T) x = v`.
    pub fn solve_frailty_block(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let kk = self.k;
        let y: Vec<f64> = (0..n).map(|i| v[i] / self.diag[i]).collect();
        let mut g = DMatrix::<f64>::identity(kk, kk);
        for i in 0..n {
            for k in 0..kk {
                for l in 0..kk {
                    g[(k, l)] -= self.m_w[i * kk + k] * self.m_w[i * kk + l] / self.diag[i];
                }
            }
        }
        let mty = DVector::from_iterator(kk, (0..kk).map(|k| (0..n).map(|i| self.m_w[i * kk + k] * y[i]).sum()));
        let z = g
            .lu()
            .solve(&mty)
            .ok_or_else(|| Error::RankDeficient("frailty block is singular".into()))?;
        Ok((0..n)
            .map(|i| y[i] + (0..kk).map(|k| self.m_w[i * kk + k] * z[k]).sum::<f64>() / self.diag[i])
            .collect())
    }

    /// Dense `(B - M M^T)` for small problems and tests.
    #[cfg(test)]
    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = self.b_bb.nrows();
        let n = self.diag.len();
        let mut a = DMatrix::<f64>::zeros(p + n, p + n);
        a.view_mut((0, 0), (p, p)).copy_from(&self.b_bb);
        for i in 0..n {
            for j in 0..p {
                a[(j, p + i)] = self.c[i * p + j];
                a[(p + i, j)] = self.c[i * p + j];
            }
            a[(p + i, p + i)] = self.diag[i];
        }
        for k in 0..self.k {
            let col: Vec<f64> = (0..p)
                .map(|j| self.m_b[(j, k)])
                .chain((0..n).map(|i| self.m_w[i * self.k + k]))
                .collect();
            for r in 0..p + n {
                for s in 0..p + n {
                    a[(r, s)] -= col[r] * col[s];
                }
            }
        }
        a
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximizes the penalized likelihood over the frailties alone.
pub(crate) fn solve_frailties(
    data: &CoxData,
    rs: &RiskSets,
    beta: &[f64],
    theta: f64,
    w0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, Evaluation)> {
    let mut w = w0.to_vec();
    let mut ev = evaluate(data, rs, beta, Some(Frailty { w: &w, theta }), Ties::Breslow, true)?;
    for it in 0..max_iter {
        if max_abs(&ev.grad_w) <= tol {
            return Ok((w, ev));
        }
        let Some(NegHessian::Structured(h)) = &ev.hessian else { unreachable!() };
        let step = h.solve_frailty_block(&ev.grad_w)?;
        let mut scale = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + scale * s).collect();
            let tev = evaluate(data, rs, beta, Some(Frailty { w: &trial, theta }), Ties::Breslow, true)?;
            if tev.value >= ev.value - 1e-12 * ev.value.abs().max(1.0) || scale < 1e-10 {
                w = trial;
                ev = tev;
                break;
            }
            scale *= 0.5;
        }
        if it + 1 == max_iter && max_abs(&ev.grad_w) > tol {
            return Err(Error::NonConvergence {
                iterations: max_iter,
                gradient_norm: max_abs(&ev.grad_w),
                last_step: scale * max_abs(&step),
            });
        }
    }
    Ok((w, ev))
}

/// Penalized partial log-likelihood profiled over the frailties, and its
/// gradient in `beta`. With `theta = 0` there are no frailties and this is
/// the ordinary partial likelihood.
pub fn partial_loglik_and_grad(beta: &[f64], theta: f64, data: &CoxData, ties: Ties) -> Result<(f64, Vec<f64>)> {
    if beta.len() != data.p {
        return Err(Error::Config(format!("expected {} coefficients, got {}", data.p, beta.len())));
    }
    if !(theta >= 0.0) || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Config("non-finite coefficients or negative theta".into()));
    }
    let rs = RiskSets::new(data);
    if theta == 0.0 {
        let ev = evaluate(data, &rs, beta, None, ties, false)?;
        return Ok((ev.value, ev.grad_beta));
    }
    let w0 = vec![0.0; data.n_groups];
    let (w, _) = solve_frailties(data, &rs, beta, theta, &w0, 1e-13, 200)?;
    // envelope: the frailty gradient is zero at the inner optimum
    let ev = evaluate(data, &rs, beta, Some(Frailty { w: &w, theta }), ties, false)?;
    Ok((ev.value, ev.grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CoxData {
        // three subjects, one covariate, distinct times
        CoxData::new(
            vec![0.0, 0.0, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![true, true, false],
            vec![0, 1, 2],
            vec![0.5, -1.0, 2.0],
            vec!["x".into()],
        )
        .unwrap()
    }

    #[test]
    fn beta_zero_is_minus_log_risk_set_sizes() {
        let (v, _) = partial_loglik_and_grad(&[0.0], 0.0, &tiny(), Ties::Breslow).unwrap();
        assert!((v - (-(3f64.ln()) - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn empty_covariates() {
        let d = CoxData::new(vec![0.0; 2], vec![1.0, 2.0], vec![true, false], vec![0, 1], vec![], vec![]).unwrap();
        let (v, g) = partial_loglik_and_grad(&[], 0.0, &d, Ties::Breslow).unwrap();
        assert!(g.is_empty());
        assert!((v + 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn efron_equals_breslow_without_ties() {
        let d = tiny();
        let a = partial_loglik_and_grad(&[0.3], 0.0, &d, Ties::Breslow).unwrap();
        let b = partial_loglik_and_grad(&[0.3], 0.0, &d, Ties::Efron).unwrap();
        assert!((a.0 - b.0).abs() < 1e-13 && (a.1[0] - b.1[0]).abs() < 1e-13);
    }

    #[test]
    fn efron_hand_value_with_a_tie() {
        // two deaths at t=1 among three at risk, beta = 0:
        // Breslow: -2 log 3; Efron: -log 3 - log(3 - 1)
        let d = CoxData::new(
            vec![0.0; 3],
            vec![1.0, 1.0, 2.0],
            vec![true, true, false],
            vec![0, 1, 2],
            vec![1.0, 0.0, 0.0],
            vec!["x".into()],
        )
        .unwrap();
        let b = partial_loglik_and_grad(&[0.0], 0.0, &d, Ties::Breslow).unwrap().0;
        let e = partial_loglik_and_grad(&[0.0], 0.0, &d, Ties::Efron).unwrap().0;
        assert!((b + 2.0 * 3f64.ln()).abs() < 1e-14);
        assert!((e + 3f64.ln() + 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn structured_solve_matches_dense() {
        let d = CoxData::new(
            vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0],
            vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0],
            vec![false, true, false, false, true, true],
            vec![0, 0, 1, 1, 2, 3],
            vec![0.1, 1.0, 0.3, -0.2, -0.5, 0.4, 1.2, 0.0, 0.7, -1.1, 0.2, 0.9],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let rs = RiskSets::new(&d);
        let w = [0.1, -0.2, 0.05, 0.3];
        let ev = evaluate(&d, &rs, &[0.2, -0.4], Some(Frailty { w: &w, theta: 0.7 }), Ties::Breslow, true).unwrap();
        let Some(NegHessian::Structured(h)) = ev.hessian else { panic!() };
        let dense = h.to_dense();
        let v = (vec![1.0, -2.0], vec![0.5, 0.25, -1.0, 2.0]);
        let x = h.solve_many(std::slice::from_ref(&v)).unwrap().remove(0);
        let full = DVector::from_iterator(6, x.0.iter().chain(&x.1).copied());
        let rhs = DVector::from_iterator(6, v.0.iter().chain(&v.1).copied());
        assert!((dense * full - rhs).amax() < 1e-10);
    }

    #[test]
    fn shift_invariance() {
        let d = tiny();
        let shifted = d.map_column(0, |x| x + 17.0);
        for theta in [0.0, 0.5] {
            let a = partial_loglik_and_grad(&[0.4], theta, &d, Ties::Breslow).unwrap();
            let b = partial_loglik_and_grad(&[0.4], theta, &shifted, Ties::Breslow).unwrap();
            assert!((a.0 - b.0).abs() < 1e-8, "{} vs {}", a.0, b.0);
        }
    }
}
