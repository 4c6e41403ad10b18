use peerchurn_core::churn::{churn_month, ChurnEvent, ChurnLabels, Presence};
use peerchurn_core::graph::{
    build_friendships, count_churner_friends_idx, trim_sample, ChurnerFriendTable, FriendGraph, MIN_COPRESENT_MONTHS,
};
use peerchurn_core::ingest::PairMonthCounts;
use peerchurn_core::Execution;
use proptest::prelude::*;

const MONTHS: u32 = 10;

/// Labels from per-subscriber outbound activity.
fn labels(activity: &[Vec<bool>]) -> ChurnLabels {
    let events = activity
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let cm = churn_month(a).unwrap();
            ChurnEvent {
                subscriber_id: format!("s{i:03}"),
                churn_month: cm,
                censored: cm.is_none(),
            }
        })
        .collect();
    let presence = activity.iter().map(|a| Presence::from_activity(a)).collect();
    ChurnLabels::from_events(MONTHS, events, presence)
}

fn always_active(n: usize) -> Vec<Vec<bool>> {
    vec![vec![true; MONTHS as usize]; n]
}

#[test]
fn calling_every_month_makes_friends() {
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in 1..=MONTHS {
        pairs.add(0, 1, m, 1);
    }
    let g = build_friendships(&pairs, &labels(&always_active(2)), 2);
    assert!(g.are_friends(0, 1) && g.are_friends(1, 0));
    assert_eq!(g.degree(0), 1);
}

#[test]
fn one_missed_month_breaks_friendship() {
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in (1..=MONTHS).filter(|&m| m != 6) {
        pairs.add(0, 1, m, 3);
    }
    let g = build_friendships(&pairs, &labels(&always_active(2)), 2);
    assert!(!g.are_friends(0, 1));
    assert_eq!(g.num_edges(), 0);
}

#[test]
fn churner_friendship_only_needs_copresent_months() {
    // subscriber 1 calls out in months 1..=4 then falls silent
    let mut act = always_active(2);
    act[1] = (1..=MONTHS).map(|m| m <= 4).collect();
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in 1..=4 {
        pairs.add(0, 1, m, 2);
    }
    let l = labels(&act);
    assert_eq!(l.churn_of(1), Some(5));
    assert!(build_friendships(&pairs, &l, 2).are_friends(0, 1));
}

#[test]
fn single_copresent_month_is_not_enough() {
    let mut act = always_active(2);
    act[1] = (1..=MONTHS).map(|m| m == 7).collect();
    let mut pairs = PairMonthCounts::new(MONTHS);
    pairs.add(0, 1, 7, 9);
    assert_eq!(MIN_COPRESENT_MONTHS, 2);
    assert!(!build_friendships(&pairs, &labels(&act), 2).are_friends(0, 1));
}

/// Friend test written straight from the rule, month by month.
fn brute_force_friends(activity: &[Vec<bool>], pairs: &PairMonthCounts) -> Vec<(u32, u32)> {
    let n = activity.len() as u32;
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let present = |s: u32, m: u32| {
                let act = &activity[s as usize];
                let first = act.iter().position(|&x| x);
                let last = act.iter().rposition(|&x| x);
                matches!((first, last), (Some(f), Some(l)) if f as u32 + 1 <= m && m <= l as u32 + 1)
            };
            let mut co = 0;
            let mut ok = true;
            for m in 1..=MONTHS {
                if present(a, m) && present(b, m) {
                    co += 1;
                    ok &= pairs.calls(a, b, m) >= 1;
                }
            }
            if ok && co >= 2 {
                out.push((a, b));
            }
        }
    }
    out
}

#[test]
fn six_subscriber_fixture_matches_exhaustive_check() {
    let act: Vec<Vec<bool>> = vec![
        vec![true; 10],
        vec![true, true, true, true, true, false, false, false, false, false],
        vec![false, false, true, true, true, true, true, true, true, true],
        vec![true; 10],
        vec![true, false, true, true, false, true, true, true, true, true],
        vec![false; 10],
    ];
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in 1..=10 {
        pairs.add(0, 3, m, 2);
        if m <= 5 {
            pairs.add(0, 1, m, 1);
        }
        if m >= 3 {
            pairs.add(2, 3, m, 1);
        }
        if m != 4 {
            pairs.add(3, 4, m, 1);
        }
        pairs.add(4, 5, m, 1);
    }
    pairs.add(1, 2, 3, 4);
    pairs.add(1, 2, 4, 4);
    pairs.add(1, 2, 5, 1);
    let g = build_friendships(&pairs, &labels(&act), 6);
    let expected = brute_force_friends(&act, &pairs);
    assert_eq!(g.edges(), expected);
    assert_eq!(expected, vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
}

#[test]
fn trim_reports_reasons() {
    // a star with 5 leaves plus an isolated subscriber
    let g = FriendGraph::from_edges(7, (1..=5).map(|k| (0, k)));
    let r = trim_sample(&g, 4, true).unwrap();
    assert_eq!(r.removed_high_degree, vec![0]);
    assert_eq!(r.removed_no_degree, vec![6]);
    assert_eq!(r.retained, vec![1, 2, 3, 4, 5]);
    let keep_isolated = trim_sample(&g, 4, false).unwrap();
    assert_eq!(keep_isolated.retained, vec![1, 2, 3, 4, 5, 6]);
    assert!(trim_sample(&g, 0, true).is_err());
    // 500 friends against a cap of 100
    let hub = FriendGraph::from_edges(501, (1..=500).map(|k| (0, k)));
    assert_eq!(trim_sample(&hub, 100, true).unwrap().removed_high_degree, vec![0]);
}

#[test]
fn churner_friend_threshold_example() {
    let mut act = always_active(2);
    act[1] = (1..=MONTHS).map(|m| m <= 3).collect();
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in 1..=3 {
        pairs.add(0, 1, m, 1);
    }
    // friend's churn month is 4; four calls were exchanged in it
    pairs.add(0, 1, 4, 4);
    let l = labels(&act);
    assert_eq!(l.churn_of(1), Some(4));
    let g = build_friendships(&pairs, &l, 2);
    assert!(g.are_friends(0, 1));
    let count = |n| count_churner_friends_idx(0, 4, n, &l, &g, &pairs);
    assert_eq!((count(1), count(3), count(5)), (1, 1, 0));
    assert_eq!(count_churner_friends_idx(0, 3, 1, &l, &g, &pairs), 0);
    let t = ChurnerFriendTable::compute(&[1, 3, 5], &l, &g, &pairs, Execution::Sequential);
    assert_eq!(t.get(0, 4, 3).unwrap(), 1);
    assert_eq!(t.get(0, 4, 5).unwrap(), 0);
    assert!(t.get(0, 4, 2).is_err());
}

#[test]
fn no_churning_friends_gives_zero() {
    let mut pairs = PairMonthCounts::new(MONTHS);
    for m in 1..=MONTHS {
        pairs.add(0, 1, m, 7);
        pairs.add(1, 2, m, 7);
    }
    let l = labels(&always_active(3));
    let g = build_friendships(&pairs, &l, 3);
    let t = ChurnerFriendTable::compute(&[1, 3, 5], &l, &g, &pairs, Execution::Sequential);
    assert!(t.nonzero().is_empty());
}

/// Random world of at most 50 subscribers: activity series and pair calls.
fn arb_world() -> impl Strategy<Value = (Vec<Vec<bool>>, Vec<(u32, u32, u32, u32)>)> {
    (4usize..=50).prop_flat_map(|n| {
        let activity = prop::collection::vec(
            (0u32..=MONTHS, 0u32..=MONTHS, prop::collection::vec(prop::bool::weighted(0.9), MONTHS as usize)).prop_map(
                |(a, b, mut v)| {
                    // blank out months before entry and after exit
                    let (lo, hi) = (a.min(b), a.max(b));
                    for (k, x) in v.iter_mut().enumerate() {
                        let m = k as u32 + 1;
                        if m < lo.max(1) || m > hi {
                            *x = false;
                        }
                    }
                    v
                },
            ),
            n,
        );
        let calls = prop::collection::vec((0..n as u32, 0..n as u32, 1..=MONTHS, 1u32..7), 0..n * 12);
        (activity, calls)
    })
}

fn build(activity: &[Vec<bool>], calls: &[(u32, u32, u32, u32)]) -> (ChurnLabels, PairMonthCounts, FriendGraph) {
    let l = labels(activity);
    let mut pairs = PairMonthCounts::new(MONTHS);
    for &(a, b, m, c) in calls {
        if a != b {
            pairs.add(a, b, m, c);
        }
    }
    // dense pairs: repeat each pair's calls across its whole span so friendships occur
    for &(a, b, _, c) in calls.iter().take(calls.len() / 2) {
        if a != b {
            for m in 1..=MONTHS {
                pairs.add(a, b, m, c);
            }
        }
    }
    let g = build_friendships(&pairs, &l, activity.len());
    (l, pairs, g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn friendship_matches_brute_force_and_is_symmetric((activity, calls) in arb_world()) {
        let (_, pairs, g) = build(&activity, &calls);
        prop_assert_eq!(g.edges(), brute_force_friends(&activity, &pairs));
        for a in 0..g.len() as u32 {
            prop_assert_eq!(g.degree(a) as usize, g.friends(a).len());
            for &b in g.friends(a) {
                prop_assert!(g.friends(b).contains(&a));
            }
        }
    }

    #[test]
    fn churner_counts_match_double_loop_and_are_monotone((activity, calls) in arb_world()) {
        let (l, pairs, g) = build(&activity, &calls);
        let thresholds = [1, 3, 5];
        let seq = ChurnerFriendTable::compute(&thresholds, &l, &g, &pairs, Execution::Sequential);
        let par = ChurnerFriendTable::compute(&thresholds, &l, &g, &pairs, Execution::Parallel);
        prop_assert_eq!(&seq, &par);
        for ego in 0..g.len() as u32 {
            for m in 1..=MONTHS {
                for n in thresholds {
                    let mut brute = 0;
                    for f in 0..g.len() as u32 {
                        if f != ego && g.are_friends(ego, f) && l.churn_of(f) == Some(m) && pairs.calls(ego, f, m) >= n {
                            brute += 1;
                        }
                    }
                    prop_assert_eq!(seq.get(ego, m, n).unwrap(), brute);
                }
                let c = |n| seq.get(ego, m, n).unwrap();
                prop_assert!(c(5) <= c(3) && c(3) <= c(1) && c(1) <= g.degree(ego));
            }
            prop_assert!(seq.cumulative(ego, MONTHS, 1).unwrap() <= g.degree(ego));
        }
    }
}
