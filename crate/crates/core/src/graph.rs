//! Friendship graph and churner-friend exposure counts.
//!
//! Two on-net subscribers are friends when they exchange at least one call
//! in every month both are present, over at least two such months.
//! Presence runs from a subscriber's first to last month with outbound
//! calls, so a friend who churns stops constraining the pair once silent.

use std::io::Write;
use std::path::Path;

use crate::churn::{ChurnLabels, Presence};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::{PairMonthCounts, Roster};

pub const DEFAULT_THRESHOLDS: [u32; 3] = [1, 3, 5];
pub const DEFAULT_DEGREE_CAP: u32 = 50;
/// Co-present months required before a pair can qualify as friends.
pub const MIN_COPRESENT_MONTHS: u32 = 2;

/// One stored `(pair, month)` cell of the call graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeMonth {
    pub a: u32,
    pub b: u32,
    pub month_index: u32,
    pub calls_exchanged: u32,
}

/// Symmetric friendship adjacency over dense roster indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FriendGraph {
    adjacency: Vec<Vec<u32>>,
}

impl FriendGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in edges {
            if a != b {
                adjacency[a as usize].push(b);
                adjacency[b as usize].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        FriendGraph { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn friends(&self, idx: u32) -> &[u32] {
        &self.adjacency[idx as usize]
    }

    pub fn degree(&self, idx: u32) -> u32 {
        self.adjacency[idx as usize].len() as u32
    }

    pub fn are_friends(&self, a: u32, b: u32) -> bool {
        self.adjacency[a as usize].binary_search(&b).is_ok()
    }

    /// Edges with `a < b`, ascending.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| b > a as u32).map(|&b| (a as u32, b)));
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.adjacency.is_empty() {
            return 0.0;
        }
        2.0 * self.num_edges() as f64 / self.adjacency.len() as f64
    }
}

/// Months both subscribers are present, if any.
pub fn copresence(a: Option<Presence>, b: Option<Presence>) -> Option<(u32, u32)> {
    let (a, b) = (a?, b?);
    let lo = a.first.max(b.first);
    let hi = a.last.min(b.last);
    (lo <= hi).then_some((lo, hi))
}

/// Whether a pair's monthly call series satisfies the friend rule.
pub fn qualifies(series: &[u32], co: Option<(u32, u32)>) -> bool {
    match co {
        Some((lo, hi)) if hi - lo + 1 >= MIN_COPRESENT_MONTHS => {
            (lo..=hi).all(|m| series[m as usize - 1] >= 1)
        }
        _ => false,
    }
}

pub fn build_friendships(pairs: &PairMonthCounts, labels: &ChurnLabels, n: usize) -> FriendGraph {
    let edges = pairs.sorted_pairs().into_iter().filter_map(|((a, b), series)| {
        let co = copresence(labels.presence_of(a), labels.presence_of(b));
        qualifies(series, co).then_some((a, b))
    });
    FriendGraph::from_edges(n, edges)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimReport {
    pub retained: Vec<u32>,
    pub removed_no_degree: Vec<u32>,
    pub removed_high_degree: Vec<u32>,
}

impl TrimReport {
    pub fn retention_ratio(&self) -> f64 {
        let total = self.retained.len() + self.removed_no_degree.len() + self.removed_high_degree.len();
        if total == 0 {
            0.0
        } else {
            self.retained.len() as f64 / total as f64
        }
    }
}

/// Drops likely switchboards (degree above the cap) and, optionally,
/// subscribers without any friend.
pub fn trim_sample(graph: &FriendGraph, degree_cap: u32, require_degree_ge_1: bool) -> Result<TrimReport> {
    if degree_cap == 0 {
        return Err(Error::Config("degree_cap must be positive".into()));
    }
    let mut report = TrimReport {
        retained: Vec::new(),
        removed_no_degree: Vec::new(),
        removed_high_degree: Vec::new(),
    };
    for i in 0..graph.len() as u32 {
        let d = graph.degree(i);
        if d == 0 && require_degree_ge_1 {
            report.removed_no_degree.push(i);
        } else if d > degree_cap {
            report.removed_high_degree.push(i);
        } else {
            report.retained.push(i);
        }
    }
    Ok(report)
}

/// Friends of `ego` who churned in `month` after exchanging at least
/// `n_threshold` calls with the ego in that same month.
pub fn count_churner_friends_idx(
    ego: u32,
    month: u32,
    n_threshold: u32,
    labels: &ChurnLabels,
    graph: &FriendGraph,
    pairs: &PairMonthCounts,
) -> u32 {
    graph
        .friends(ego)
        .iter()
        .filter(|&&f| labels.churn_of(f) == Some(month) && pairs.calls(ego, f, month) >= n_threshold)
        .count() as u32
}

pub fn count_churner_friends(
    ego: &str,
    month: u32,
    n_threshold: u32,
    roster: &Roster,
    labels: &ChurnLabels,
    graph: &FriendGraph,
    pairs: &PairMonthCounts,
) -> Result<u32> {
    let idx = roster
        .index_of(ego)
        .ok_or_else(|| Error::UnknownSubscriber(ego.to_string()))?;
    Ok(count_churner_friends_idx(idx, month, n_threshold, labels, graph, pairs))
}

/// Per-month churner-friend counts for every subscriber and threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChurnerFriendTable {
    thresholds: Vec<u32>,
    months: u32,
    n: usize,
    counts: Vec<u32>,
}

impl ChurnerFriendTable {
    pub fn compute(
        thresholds: &[u32],
        labels: &ChurnLabels,
        graph: &FriendGraph,
        pairs: &PairMonthCounts,
        exec: Execution,
    ) -> Self {
        let months = pairs.months();
        let k = thresholds.len();
        let per_ego = exec.map_range(graph.len(), |ego| {
            let mut row = vec![0u32; months as usize * k];
            for &f in graph.friends(ego as u32) {
                let Some(cm) = labels.churn_of(f) else { continue };
                let calls = pairs.calls(ego as u32, f, cm);
                for (j, &n) in thresholds.iter().enumerate() {
                    if calls >= n {
                        row[(cm as usize - 1) * k + j] += 1;
                    }
                }
            }
            row
        });
        ChurnerFriendTable {
            thresholds: thresholds.to_vec(),
            months,
            n: graph.len(),
            counts: per_ego.concat(),
        }
    }

    pub fn from_rows(
        thresholds: &[u32],
        months: u32,
        n: usize,
        rows: impl IntoIterator<Item = (u32, u32, u32, u32)>,
    ) -> Result<Self> {
        let mut t = ChurnerFriendTable {
            thresholds: thresholds.to_vec(),
            months,
            n,
            counts: vec![0; n * months as usize * thresholds.len()],
        };
        for (ego, month, thr, count) in rows {
            let j = t.threshold_slot(thr)?;
            if ego as usize >= n || month == 0 || month > months {
                return Err(Error::Config(format!("churner-friend row ({ego}, {month}) out of range")));
            }
            let k = t.thresholds.len();
            t.counts[(ego as usize * months as usize + month as usize - 1) * k + j] = count;
        }
        Ok(t)
    }

    fn threshold_slot(&self, n_threshold: u32) -> Result<usize> {
        self.thresholds
            .iter()
            .position(|&t| t == n_threshold)
            .ok_or_else(|| Error::Config(format!("threshold {n_threshold} was not computed")))
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    pub fn months(&self) -> u32 {
        self.months
    }

    pub fn get(&self, ego: u32, month: u32, n_threshold: u32) -> Result<u32> {
        let j = self.threshold_slot(n_threshold)?;
        let k = self.thresholds.len();
        Ok(self.counts[(ego as usize * self.months as usize + month as usize - 1) * k + j])
    }

    /// Sum over months `1..=through`.
    pub fn cumulative(&self, ego: u32, through: u32, n_threshold: u32) -> Result<u32> {
        (1..=through).map(|m| self.get(ego, m, n_threshold)).sum()
    }

    /// Non-zero cells as `(ego, month, threshold, count)`.
    pub fn nonzero(&self) -> Vec<(u32, u32, u32, u32)> {
        let k = self.thresholds.len();
        let mut out = Vec::new();
        for ego in 0..self.n {
            for m in 0..self.months as usize {
                for (j, &thr) in self.thresholds.iter().enumerate() {
                    let c = self.counts[(ego * self.months as usize + m) * k + j];
                    if c > 0 {
                        out.push((ego as u32, m as u32 + 1, thr, c));
                    }
                }
            }
        }
        out
    }
}

pub fn write_edges<W: Write>(out: W, graph: &FriendGraph, roster: &Roster) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_a", "subscriber_b"])?;
    for (a, b) in graph.edges() {
        w.write_record([roster.id(a), roster.id(b)])?;
    }
    w.flush().map_err(|e| Error::io("<edges>", e))?;
    Ok(())
}

/// Monthly call counts restricted to friend pairs.
pub fn friend_edge_months(graph: &FriendGraph, pairs: &PairMonthCounts) -> Vec<EdgeMonth> {
    let mut out = Vec::new();
    for (a, b) in graph.edges() {
        if let Some(series) = pairs.series(a, b) {
            for (m, &c) in series.iter().enumerate() {
                if c > 0 {
                    out.push(EdgeMonth {
                        a,
                        b,
                        month_index: m as u32 + 1,
                        calls_exchanged: c,
                    });
                }
            }
        }
    }
    out
}

pub fn write_edge_months<W: Write>(out: W, rows: &[EdgeMonth], roster: &Roster) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_a", "subscriber_b", "month_index", "calls_exchanged"])?;
    for e in rows {
        w.write_record([
            roster.id(e.a),
            roster.id(e.b),
            &e.month_index.to_string(),
            &e.calls_exchanged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<edge months>", e))?;
    Ok(())
}

pub fn read_edges(path: impl AsRef<Path>, roster: &Roster) -> Result<FriendGraph> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = |i: usize| -> Result<u32> {
            let s = rec.get(i).unwrap_or("");
            roster.index_of(s).ok_or_else(|| Error::UnknownSubscriber(s.to_string()))
        };
        edges.push((id(0)?, id(1)?));
    }
    Ok(FriendGraph::from_edges(roster.len(), edges))
}

pub fn write_churner_friends<W: Write>(out: W, table: &ChurnerFriendTable, roster: &Roster) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_id", "month_index", "n_threshold", "frd_churn"])?;
    for (ego, m, thr, c) in table.nonzero() {
        w.write_record([roster.id(ego), &m.to_string(), &thr.to_string(), &c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<churner friends>", e))?;
    Ok(())
}

pub fn read_churner_friends(
    path: impl AsRef<Path>,
    roster: &Roster,
    thresholds: &[u32],
    months: u32,
) -> Result<ChurnerFriendTable> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = || Error::Parse {
            file: path.display().to_string(),
            line: rec.position().map_or(0, |p| p.line()),
            reason: "malformed churner-friend row".into(),
        };
        let id = rec.get(0).ok_or_else(bad)?;
        let ego = roster.index_of(id).ok_or_else(|| Error::UnknownSubscriber(id.to_string()))?;
        let num = |i: usize| -> Result<u32> { rec.get(i).ok_or_else(bad)?.trim().parse().map_err(|_| bad()) };
        rows.push((ego, num(1)?, num(2)?, num(3)?));
    }
    ChurnerFriendTable::from_rows(thresholds, months, roster.len(), rows)
}
