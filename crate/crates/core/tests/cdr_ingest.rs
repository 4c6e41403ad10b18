use std::io::Write;

use chrono::NaiveDate;
use peerchurn_core::calendar::{Window, YearMonth};
use peerchurn_core::ingest::{
    aggregate_monthly, compute_expenditure, parse_cdr_file, parse_cdr_reader, write_subscriber_months, CdrRecord,
    OutboundAirtime, RejectReason, Roster, Subscriber, TariffPlan,
};
use peerchurn_core::Error;
use proptest::prelude::*;

const HEADER: &str = "timestamp,caller_id,callee_id,duration_sec,cell_id,caller_on_net,callee_on_net\n";

fn window() -> Window {
    Window::new(YearMonth::new(2008, 8).unwrap(), 10)
}

fn plan(id: &str, fee: f64, on: f64, off: f64) -> TariffPlan {
    TariffPlan {
        plan_id: id.into(),
        monthly_fee: fee,
        rate_on_net: on,
        rate_off_net: off,
    }
}

fn roster(ids: &[&str]) -> Roster {
    let subs: Vec<Subscriber> = ids
        .iter()
        .map(|id| Subscriber {
            subscriber_id: id.to_string(),
            plan_id: "basic".into(),
            join_month: YearMonth::new(2007, 1).unwrap(),
        })
        .collect();
    Roster::new(&subs, &[plan("basic", 5.0, 0.1, 0.3)]).unwrap()
}

fn call(month: u32, day: u32, caller: &str, callee: &str, secs: u32, caller_on: bool, callee_on: bool) -> CdrRecord {
    let ym = window().month_at(month);
    CdrRecord {
        timestamp: NaiveDate::from_ymd_opt(ym.year, ym.month, day).unwrap().and_hms_opt(12, 30, 0).unwrap(),
        caller_id: caller.into(),
        callee_id: callee.into(),
        duration_sec: secs,
        cell_id: "c1".into(),
        caller_on_net: caller_on,
        callee_on_net: callee_on,
    }
}

#[test]
fn well_formed_three_rows() {
    let text = format!(
        "{HEADER}2008-08-01T10:00,a,b,60,c1,1,1\n2008-08-02T11:15,b,a,30,c2,1,1\n2008-09-03T09:05,a,x,120,c1,1,0\n"
    );
    let parsed = parse_cdr_reader(text.as_bytes(), window()).unwrap();
    assert_eq!(parsed.records.len(), 3);
    assert!(parsed.rejects.is_empty());
    assert_eq!(parsed.records[2].callee_id, "x");
    assert!(!parsed.records[2].callee_on_net);
}

#[test]
fn negative_duration_is_rejected() {
    let text = format!("{HEADER}2008-08-01T10:00,a,b,-1,c1,1,1\n");
    let parsed = parse_cdr_reader(text.as_bytes(), window()).unwrap();
    assert!(parsed.records.is_empty());
    assert_eq!(parsed.rejects.len(), 1);
    assert_eq!(parsed.rejects[0].reason, RejectReason::NegativeDuration);
}

#[test]
fn twenty_row_fixture_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cdr.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(HEADER.as_bytes()).unwrap();
    for i in 0..20u32 {
        let row = match i {
            // file lines 8 and 16 (the header is line 1)
            6 => "2008-08-07T10:00,a,b,sixty,c1,1,1".to_string(),
            14 => "2008-13-40T10:00,a,b,60,c1,1,1".to_string(),
            _ => format!("2008-{:02}-{:02}T10:{:02},a,b,{},c1,1,1", 8 + i % 5, 1 + i, i, 30 + i),
        };
        writeln!(f, "{row}").unwrap();
    }
    drop(f);
    let parsed = parse_cdr_file(&path, window()).unwrap();
    assert_eq!(parsed.records.len(), 18);
    let lines: Vec<u64> = parsed.rejects.iter().map(|r| r.line).collect();
    assert_eq!(lines, vec![8, 16]);
    assert_eq!(parsed.rejects[0].reason, RejectReason::BadDuration);
    assert_eq!(parsed.rejects[1].reason, RejectReason::BadTimestamp);
}

#[test]
fn header_mismatch_is_a_schema_error() {
    let text = "time,caller_id,callee_id,duration_sec,cell_id,caller_on_net,callee_on_net\n";
    assert!(matches!(parse_cdr_reader(text.as_bytes(), window()), Err(Error::Schema { .. })));
}

#[test]
fn missing_file_is_an_error() {
    assert!(parse_cdr_file("/nonexistent/cdr.csv", window()).is_err());
}

#[test]
fn out_of_window_and_self_calls_are_rejected() {
    let text = format!("{HEADER}2009-06-01T10:00,a,b,60,c1,1,1\n2008-08-01T10:00,a,a,60,c1,1,1\n2008-08-01T10:00,a,b,60,c1,1,2\n");
    let parsed = parse_cdr_reader(text.as_bytes(), window()).unwrap();
    let reasons: Vec<RejectReason> = parsed.rejects.iter().map(|r| r.reason).collect();
    assert_eq!(reasons, vec![RejectReason::OutsideWindow, RejectReason::SelfCall, RejectReason::BadFlag]);
}

#[test]
fn three_call_month_aggregates_by_hand() {
    let records = vec![
        call(1, 2, "a", "b", 60, true, true),
        call(1, 9, "a", "b", 60, true, true),
        call(1, 20, "a", "z", 120, true, false),
    ];
    let agg = aggregate_monthly(&records, roster(&["a", "b"]), window()).unwrap();
    let a = agg.get(agg.roster.index_of("a").unwrap(), 1).unwrap();
    assert_eq!(a.n_calls_out, 3);
    assert_eq!(a.airtime_out(), 4.0);
    assert_eq!(a.pct_calls_out_other(), 1.0 / 3.0);
    assert_eq!(a.pct_calls_in_other(), 0.0);
    // 2 on-net minutes at 0.1 and 2 off-net minutes at 0.3
    assert!((a.expenditure - (5.0 + 0.2 + 0.6)).abs() < 1e-12);
    let b = agg.get(agg.roster.index_of("b").unwrap(), 1).unwrap();
    assert_eq!((b.n_calls_in, b.n_calls_out), (2, 0));
    assert_eq!(b.pct_calls_out_other(), 0.0);
    // months without calls have no row
    assert!(agg.get(0, 2).is_none());
    assert_eq!(agg.rows().count(), 2);
}

#[test]
fn expenditure_arithmetic() {
    let p = plan("p", 5.0, 0.1, 0.3);
    let air = OutboundAirtime {
        on_net_sec: 600,
        off_net_sec: 300,
    };
    assert!((compute_expenditure(air, &p) - 7.5).abs() < 1e-12);
    assert_eq!(compute_expenditure(OutboundAirtime::default(), &p), 5.0);
}

#[test]
fn on_net_party_without_plan_is_a_hard_error() {
    let records = vec![call(1, 2, "a", "ghost", 60, true, true)];
    match aggregate_monthly(&records, roster(&["a"]), window()) {
        Err(Error::MissingPlan(id)) => assert_eq!(id, "ghost"),
        other => panic!("expected a missing plan error, got {other:?}"),
    }
    let subs = [Subscriber {
        subscriber_id: "a".into(),
        plan_id: "gold".into(),
        join_month: YearMonth::new(2007, 1).unwrap(),
    }];
    assert!(matches!(Roster::new(&subs, &[plan("basic", 1.0, 0.0, 0.0)]), Err(Error::MissingPlan(_))));
}

const IDS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];

fn arb_record() -> impl Strategy<Value = CdrRecord> {
    (1u32..=10, 1u32..=28, 0usize..6, 1usize..6, 0u32..900, any::<bool>(), any::<bool>()).prop_map(
        |(m, day, caller, shift, secs, off_caller, off_callee)| {
            let callee = (caller + shift) % IDS.len();
            // at least one side is on-net
            let caller_on = !off_caller || !off_callee;
            call(m, day, IDS[caller], IDS[callee], secs, caller_on, !off_callee)
        },
    )
}

fn usage_csv(records: &[CdrRecord]) -> Vec<u8> {
    let agg = aggregate_monthly(records, roster(&IDS), window()).unwrap();
    let mut buf = Vec::new();
    write_subscriber_months(&mut buf, agg.rows()).unwrap();
    buf
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_ignores_record_order(records in prop::collection::vec(arb_record(), 0..80), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = aggregate_monthly(&records, roster(&IDS), window()).unwrap();
        let b = aggregate_monthly(&shuffled, roster(&IDS), window()).unwrap();
        prop_assert_eq!(a.rows().cloned().collect::<Vec<_>>(), b.rows().cloned().collect::<Vec<_>>());
        prop_assert_eq!(a.pairs.sorted_pairs(), b.pairs.sorted_pairs());
    }

    #[test]
    fn outbound_calls_are_conserved(records in prop::collection::vec(arb_record(), 0..80)) {
        let agg = aggregate_monthly(&records, roster(&IDS), window()).unwrap();
        let out: u64 = agg.rows().map(|r| r.n_calls_out as u64).sum();
        let on_net_callers = records.iter().filter(|r| r.caller_on_net).count() as u64;
        prop_assert_eq!(out, on_net_callers);
        let inbound: u64 = agg.rows().map(|r| r.n_calls_in as u64).sum();
        prop_assert_eq!(inbound, records.iter().filter(|r| r.callee_on_net).count() as u64);
        for r in agg.rows() {
            prop_assert!((0.0..=1.0).contains(&r.pct_calls_out_other()));
            prop_assert!((0.0..=1.0).contains(&r.pct_calls_in_other()));
            prop_assert!(r.n_calls_out + r.n_calls_in > 0);
        }
    }

    #[test]
    fn output_is_byte_identical_across_runs(records in prop::collection::vec(arb_record(), 0..60)) {
        prop_assert_eq!(usage_csv(&records), usage_csv(&records));
    }
}
