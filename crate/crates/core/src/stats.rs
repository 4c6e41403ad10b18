//! Small descriptive-statistics helpers shared by the estimators.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `NaN` for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation percentile (`q` in [0,1]) of an already sorted slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sort_floats(xs: &mut [f64]) {
    xs.sort_by(|a, b| a.total_cmp(b));
}

/// Two-sample t statistic with pooled variance, `a` minus `b`.
/// Returns `None` when the pooled variance is zero or a sample is too small.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    if a.is_empty() || b.is_empty() || a.len() + b.len() < 3 {
        return None;
    }
    let ssa: f64 = if a.len() > 1 { variance(a) * (na - 1.0) } else { 0.0 };
    let ssb: f64 = if b.len() > 1 { variance(b) * (nb - 1.0) } else { 0.0 };
    let pooled = (ssa + ssb) / (na + nb - 2.0);
    if pooled <= 0.0 {
        return None;
    }
    Some((mean(a) - mean(b)) / (pooled * (1.0 / na + 1.0 / nb)).sqrt())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Half-up rounding (ties away from zero) to `digits` decimals, for
/// serialization only.
pub fn round_half_up(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits);
    // 1e-9 absorbs representation error on exact ties such as 2.345
    let r = (x.abs() * scale + 0.5 + 1e-9).floor() / scale;
    r.copysign(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile_sorted(&v, 0.0), 1.0);
        assert_eq!(percentile_sorted(&v, 0.5), 3.0);
        assert_eq!(percentile_sorted(&v, 1.0), 5.0);
        assert!((percentile_sorted(&v, 0.025) - 1.1).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[7.0], 0.975), 7.0);
    }

    #[test]
    fn pooled_t_matches_hand_value() {
        // a: mean 2, ss 2; b: mean 5, ss 2; pooled var 1; se sqrt(2/3)
        let t = pooled_t(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((t - (-3.0 / (2.0f64 / 3.0).sqrt())).abs() < 1e-12);
        assert!(pooled_t(&[1.0, 1.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(2.345, 2), 2.35);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(4.0, 2), 4.0);
        assert_eq!(round_half_up(1.0 / 3.0, 2), 0.33);
        assert_eq!(round_half_up(-2.345, 2), -2.35);
    }

    #[test]
    fn expit_is_inverse_of_logit() {
        for p in [1e-6, 0.02, 0.5, 0.97] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
    }
}
