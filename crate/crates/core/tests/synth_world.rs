use std::collections::HashSet;

use peerchurn_core::cox::{CoxOptions, CovariateSpec};
use peerchurn_core::gps::GpsOptions;
use peerchurn_core::ingest::{aggregate_monthly, parse_cdr_file, parse_subscriber_file, parse_tariff_file, Roster};
use peerchurn_core::panel::Split;
use peerchurn_core::pipeline::{prepare, SampleOptions};
use peerchurn_core::synth::{generate_world, replay_ground_truth, EstimatorOutputs, GroundTruth, WorldConfig};
use peerchurn_core::{Error, Execution};

fn small(cfg: WorldConfig, seed: u64) -> WorldConfig {
    WorldConfig {
        n_subscribers: 1500,
        ..cfg.with_seed(seed)
    }
}

fn file_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut names: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn same_seed_gives_identical_files_under_any_execution() {
    let cfg = small(WorldConfig::default(), 7);
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    generate_world(&cfg, Execution::Sequential).unwrap().write_files(dirs[0].path()).unwrap();
    generate_world(&cfg, Execution::Parallel).unwrap().write_files(dirs[1].path()).unwrap();
    generate_world(&cfg.clone().with_seed(8), Execution::Parallel).unwrap().write_files(dirs[2].path()).unwrap();
    let a = file_bytes(dirs[0].path());
    assert_eq!(a.len(), 6);
    assert_eq!(a, file_bytes(dirs[1].path()));
    assert_ne!(a, file_bytes(dirs[2].path()));
}

#[test]
fn written_files_ingest_to_the_in_memory_aggregate() {
    let world = generate_world(&small(WorldConfig::default(), 3), Execution::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = world.write_files(dir.path()).unwrap();
    let parsed = parse_cdr_file(&files.cdr, world.window).unwrap();
    assert!(parsed.rejects.is_empty());
    assert_eq!(parsed.records.len(), world.n_calls());
    let roster = Roster::new(
        &parse_subscriber_file(&files.subscribers).unwrap(),
        &parse_tariff_file(&files.tariffs).unwrap(),
    )
    .unwrap();
    let from_files = aggregate_monthly(&parsed.records, roster, world.window).unwrap();
    let direct = world.aggregate().unwrap();
    assert_eq!(from_files.rows().collect::<Vec<_>>(), direct.rows().collect::<Vec<_>>());
    assert_eq!(from_files.pairs.sorted_pairs(), direct.pairs.sorted_pairs());

    let truth = GroundTruth::read(&files.trace, &files.edges, world.truth.seed, world.truth.n_months, world.truth.delta_true)
        .unwrap();
    assert_eq!(truth.ids, world.truth.ids);
    assert_eq!(truth.churn_month, world.truth.churn_month);
    assert_eq!(truth.mechanism, world.truth.mechanism);
    assert_eq!(truth.edges, world.truth.edges);
    assert_eq!(WorldConfig::load(&files.config).unwrap(), world.config);
}

#[test]
fn friends_and_churn_months_are_recovered() {
    let world = generate_world(&small(WorldConfig::contagion_world(0.3), 11), Execution::Parallel).unwrap();
    let truth = &world.truth;
    let p = prepare(world.aggregate().unwrap(), &SampleOptions::default(), Execution::Parallel).unwrap();

    // every subscriber churning by the last datable month is dated exactly
    for i in 0..truth.len() {
        assert_eq!(p.labels.churn_of(i as u32), truth.datable_churn(i), "subscriber {i}");
    }

    let recovered: HashSet<(u32, u32)> = p.graph.edges().into_iter().collect();
    let recoverable = truth.recoverable_edges();
    let hit = recoverable.iter().filter(|e| recovered.contains(e)).count();
    assert!(hit as f64 >= 0.99 * recoverable.len() as f64, "{hit} of {}", recoverable.len());
    assert!(recoverable.len() as f64 >= 0.9 * truth.edges.len() as f64);
}

#[test]
fn mechanisms_partition_churns() {
    let world = generate_world(&small(WorldConfig::contagion_world(0.4), 5), Execution::Parallel).unwrap();
    let t = &world.truth;
    assert!(t.mechanisms_partition_churns());
    assert!(t.n_contagion() > 0 && t.n_contagion() < t.n_churns());
    let null = generate_world(&small(WorldConfig::null_world(), 5), Execution::Parallel).unwrap();
    assert_eq!(null.truth.n_contagion(), 0);
    assert!(null.truth.mechanisms_partition_churns());
}

#[test]
fn homophily_correlates_friend_churn() {
    let world = generate_world(&small(WorldConfig::homophily_world(), 2), Execution::Parallel).unwrap();
    assert_eq!(world.truth.n_contagion(), 0);
    assert!(world.truth.friend_churn_correlation() > 0.0, "{}", world.truth.friend_churn_correlation());
}

#[test]
fn generator_exposure_is_the_panel_covariate() {
    let world = generate_world(&small(WorldConfig::contagion_world(0.4), 9), Execution::Parallel).unwrap();
    let p = prepare(world.aggregate().unwrap(), &SampleOptions::default(), Execution::Parallel).unwrap();
    let panel = p.survival_panel(1).unwrap();
    let mut checked = 0;
    for row in panel.rows.iter().filter(|r| r.event) {
        let exposure = world.truth.exposure_at_churn[row.subscriber as usize].unwrap();
        assert_eq!(row.frd_churn, exposure as f64, "{}", row.subscriber_id);
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn churner_friend_thresholds_are_monotone() {
    let world = generate_world(&small(WorldConfig::default(), 4), Execution::Parallel).unwrap();
    let p = prepare(world.aggregate().unwrap(), &SampleOptions::default(), Execution::Parallel).unwrap();
    let t = &p.churner_friends;
    for ego in 0..p.graph.len() as u32 {
        for m in 1..=t.months() {
            let (a, b, c) = (t.get(ego, m, 1).unwrap(), t.get(ego, m, 3).unwrap(), t.get(ego, m, 5).unwrap());
            assert!(c <= b && b <= a && a <= p.graph.degree(ego));
        }
    }
}

#[test]
fn scorecard_bias_and_mismatch_errors() {
    let cfg = small(WorldConfig::contagion_world(0.4), 21);
    let world = generate_world(&cfg, Execution::Parallel).unwrap();
    let p = prepare(world.aggregate().unwrap(), &SampleOptions::default(), Execution::Parallel).unwrap();
    let cox = p.fit_cox(1, CovariateSpec::Calls, &CoxOptions::default()).unwrap();
    let gps_opts = GpsOptions {
        n_reps: 20,
        seed: cfg.seed,
        ..GpsOptions::default()
    };
    let gps = p.run_gps(&Split::primary(), 1, &gps_opts, Execution::Parallel).unwrap();
    let ids = p.usage.roster.ids().to_vec();
    let out = EstimatorOutputs {
        seed: cfg.seed,
        subscriber_ids: &ids,
        cox: &cox,
        gps: &gps,
    };
    let card = replay_ground_truth(&world.truth, out).unwrap();
    assert_eq!(card.delta_true, 0.4);
    assert_eq!(card.delta_bias, card.delta_hat - 0.4);
    assert_eq!(card.mte[0], 0.0);
    assert_eq!(card.naive_overestimates, card.naive_gap - card.mte[1] > 0.0);
    assert!(card.delta_ci_low <= card.delta_hat && card.delta_hat <= card.delta_ci_high);
    assert!(card.to_toml().contains("delta_bias"));

    let wrong_seed = EstimatorOutputs { seed: 22, ..out };
    assert!(matches!(replay_ground_truth(&world.truth, wrong_seed), Err(Error::GroundTruth(_))));
    let mut other_ids = ids.clone();
    other_ids[0] = "Z999999".into();
    let wrong_ids = EstimatorOutputs {
        subscriber_ids: &other_ids,
        ..out
    };
    assert!(matches!(replay_ground_truth(&world.truth, wrong_ids), Err(Error::GroundTruth(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let too_dense = WorldConfig {
        n_subscribers: 10,
        mean_degree: 30.0,
        ..WorldConfig::default()
    };
    assert!(matches!(generate_world(&too_dense, Execution::Sequential), Err(Error::Config(_))));
    assert!(WorldConfig::from_toml("baseline_hazard = 1.5").is_err());
    assert!(WorldConfig::from_toml("no_such_key = 1").is_err());
    let cfg = WorldConfig::from_toml("n_subscribers = 300\nseed = 4").unwrap();
    assert_eq!((cfg.n_subscribers, cfg.seed), (300, 4));
}
