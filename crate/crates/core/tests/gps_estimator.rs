use peerchurn_core::gps::{
    balance_test, bootstrap_mte, compute_gps, fit_dose_response, fit_treatment_model, fit_treatment_units, gps_density,
    OutcomeLink, TreatmentFeatures,
};
use peerchurn_core::panel::GpsUnit;
use peerchurn_core::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

fn units_with(n: usize, seed: u64, treatment: impl Fn(&[f64; 5], &mut ChaCha8Rng) -> u32, outcome: impl Fn(u32, &mut ChaCha8Rng) -> bool) -> Vec<GpsUnit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let cov = [
                rng.random_range(1.0..60.0),
                (20.0 + 5.0 * z).max(1.0),
                30.0 + 3.0 * rng.random::<f64>(),
                rng.random_range(1..40) as f64,
                rng.random(),
            ];
            let t = treatment(&cov, &mut rng);
            GpsUnit {
                subscriber: i as u32,
                subscriber_id: format!("s{i:05}"),
                treatment: t,
                outcome: outcome(t, &mut rng),
                covariates: cov,
            }
        })
        .collect()
}

#[test]
fn intercept_only_is_log_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t: Vec<f64> = (0..500).map(|_| rng.random_range(0..7) as f64).collect();
    let m = fit_treatment_model(&t, &[], &[]).unwrap();
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    assert!((m.gamma[0] - mean.ln()).abs() <= 1e-10);
}

#[test]
fn slope_recovery_with_integer_treatment() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10_000;
    let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let t: Vec<f64> = x
        .iter()
        .map(|xi| {
            let mean = (1.5 + 0.5 * xi).exp();
            Exp::new(1.0 / mean).unwrap().sample(&mut rng).round()
        })
        .collect();
    let m = fit_treatment_model(&t, &x, &["x".into()]).unwrap();
    assert!((m.gamma[1] - 0.5).abs() <= 0.05, "slope {}", m.gamma[1]);
    assert!(m.gradient_norm <= 1e-8);
}

#[test]
fn stored_scores_match_recomputation() {
    let units = units_with(800, 5, |c, r| (c[3] / 10.0 + r.random_range(0.0..3.0)) as u32, |_, _| false);
    for features in [TreatmentFeatures::Raw, TreatmentFeatures::Log1p] {
        let m = fit_treatment_units(&units, features).unwrap();
        let gps = compute_gps(&m, &units);
        for (u, g) in units.iter().zip(&gps) {
            let mu = m.mean_at(&features.transform(&u.covariates));
            let r = gps_density(u.treatment as f64, mu);
            assert!((r - g.r).abs() <= 1e-12 * r.max(1.0));
            assert!(g.r > 0.0 && g.r <= 1.0 / g.mu + 1e-15);
        }
    }
}

#[test]
fn zero_coefficients_give_zero_effects() {
    let units = units_with(500, 6, |_, r| r.random_range(0..6), |_, _| false);
    let m = fit_treatment_units(&units, TreatmentFeatures::Log1p).unwrap();
    let d = fit_dose_response(&units, &m, OutcomeLink::Linear, 5).unwrap();
    assert!(d.coefficients.iter().all(|c| *c == 0.0));
    assert!(d.mte.iter().all(|v| *v == 0.0));
}

#[test]
fn linear_outcome_recovered_within_bands() {
    let units = units_with(
        4000,
        7,
        |_, r| r.random_range(0..9),
        |t, r| r.random::<f64>() < 0.1 + 0.05 * t as f64,
    );
    let m = fit_treatment_units(&units, TreatmentFeatures::Log1p).unwrap();
    let d = fit_dose_response(&units, &m, OutcomeLink::Linear, 5).unwrap();
    let b = bootstrap_mte(&units, TreatmentFeatures::Log1p, OutcomeLink::Linear, 5, 60, 1, Execution::Parallel).unwrap();
    assert_eq!(d.mte[0], 0.0);
    for t in 1..=5 {
        let truth = 0.05 * t as f64;
        assert!(b.ci_low[t] <= truth && truth <= b.ci_high[t], "t={t}: {} [{}, {}]", d.mte[t], b.ci_low[t], b.ci_high[t]);
    }
}

#[test]
fn probit_link_tracks_linear_effect() {
    let units = units_with(
        4000,
        8,
        |_, r| r.random_range(0..9),
        |t, r| r.random::<f64>() < 0.1 + 0.05 * t as f64,
    );
    let m = fit_treatment_units(&units, TreatmentFeatures::Log1p).unwrap();
    let d = fit_dose_response(&units, &m, OutcomeLink::Probit, 5).unwrap();
    assert!((d.mte[5] - 0.25).abs() < 0.06, "{:?}", d.mte);
}

#[test]
fn bootstrap_is_deterministic_and_thread_invariant() {
    let units = units_with(300, 9, |_, r| r.random_range(0..5), |t, r| r.random::<f64>() < 0.1 + 0.02 * t as f64);
    let a = bootstrap_mte(&units, TreatmentFeatures::Log1p, OutcomeLink::Linear, 5, 20, 42, Execution::Sequential).unwrap();
    let b = bootstrap_mte(&units, TreatmentFeatures::Log1p, OutcomeLink::Linear, 5, 20, 42, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    let single = bootstrap_mte(&units, TreatmentFeatures::Log1p, OutcomeLink::Linear, 5, 1, 42, Execution::Sequential).unwrap();
    assert_eq!(single.ci_low, single.ci_high);
    assert!(!single.warnings.is_empty());
}

#[test]
fn null_covariates_are_rarely_flagged() {
    // treatment independent of every covariate
    let mut flagged = 0;
    let mut total = 0;
    for seed in 0..10 {
        let units = units_with(600, 100 + seed, |_, r| r.random_range(0..7), |_, _| false);
        let m = fit_treatment_units(&units, TreatmentFeatures::Log1p).unwrap();
        let rep = balance_test(&units, &m, 5).unwrap();
        flagged += rep.cells.iter().filter(|c| c.flagged_before()).count();
        total += rep.cells.len();
    }
    let share = flagged as f64 / total as f64;
    assert!(share < 0.12, "{share}");
}

#[test]
fn confounded_covariate_is_balanced_after_blocking() {
    // treatment driven by degree; raw comparisons are unbalanced
    let units = units_with(
        3000,
        11,
        |c, r| Exp::new(1.0 / (0.3 + c[3] / 10.0)).unwrap().sample(r).round() as u32,
        |_, _| false,
    );
    let m = fit_treatment_units(&units, TreatmentFeatures::Raw).unwrap();
    let rep = balance_test(&units, &m, 5).unwrap();
    let frd: Vec<_> = rep.cells.iter().filter(|c| c.covariate == "frd").collect();
    assert!(frd.iter().all(|c| c.flagged_before()), "{frd:?}");
    assert!(frd.iter().all(|c| c.t_after.abs() < c.t_before.abs()));
}
