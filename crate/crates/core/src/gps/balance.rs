use std::io::Write;

use serde::{Deserialize, Serialize};

use super::treatment::{gps_density, TreatmentModel};
use crate::error::{Error, Result};
use crate::panel::{GpsUnit, GPS_COVARIATES};
use crate::stats::{mean, pooled_t};

/// Treatment-intensity groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreatmentGroup {
    /// At most one churner friend.
    T1,
    /// Two or three.
    T2,
    /// More than three.
    T3,
}

impl TreatmentGroup {
    pub const ALL: [TreatmentGroup; 3] = [TreatmentGroup::T1, TreatmentGroup::T2, TreatmentGroup::T3];

    pub fn contains(self, t: u32) -> bool {
        match self {
            TreatmentGroup::T1 => t <= 1,
            TreatmentGroup::T2 => (2..=3).contains(&t),
            TreatmentGroup::T3 => t > 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TreatmentGroup::T1 => "T1",
            TreatmentGroup::T2 => "T2",
            TreatmentGroup::T3 => "T3",
        }
    }
}

pub const CRITICAL_T: f64 = 1.96;
pub const DEFAULT_BLOCKS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCell {
    pub covariate: String,
    pub group: TreatmentGroup,
    pub t_before: f64,
    pub t_after: f64,
    pub note: Option<String>,
}

impl BalanceCell {
    pub fn flagged_before(&self) -> bool {
        self.t_before.abs() > CRITICAL_T
    }

    pub fn flagged_after(&self) -> bool {
        self.t_after.abs() > CRITICAL_T
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub cells: Vec<BalanceCell>,
    /// Blocks merged into a neighbour because one side was empty, per group.
    pub merged_blocks: Vec<(TreatmentGroup, usize)>,
}

impl BalanceReport {
    pub fn cell(&self, covariate: &str, group: TreatmentGroup) -> Option<&BalanceCell> {
        self.cells.iter().find(|c| c.covariate == covariate && c.group == group)
    }

    /// Fraction of cells flagged before adjustment that are unflagged after.
    pub fn cleared_fraction(&self) -> Option<f64> {
        let before: Vec<&BalanceCell> = self.cells.iter().filter(|c| c.flagged_before()).collect();
        if before.is_empty() {
            return None;
        }
        Some(before.iter().filter(|c| !c.flagged_after()).count() as f64 / before.len() as f64)
    }
}

/// Cuts the group's own score distribution into `n_blocks` quantile
/// intervals and places every subscriber whose score lies inside the
/// group's range into its interval; subscribers outside that range are off
/// common support and left out. Blocks lacking either side of the
/// comparison are merged into a neighbour. Returns the blocks and the number
/// of merges.
fn blocks(score: &[f64], in_group: &[bool], n_blocks: usize) -> (Vec<Vec<usize>>, usize) {
    let mut own: Vec<f64> = score.iter().zip(in_group).filter(|(_, &g)| g).map(|(&s, _)| s).collect();
    own.sort_by(f64::total_cmp);
    let (lo, hi) = (own[0], own[own.len() - 1]);
    // upper edges of the first n_blocks - 1 intervals
    let cuts: Vec<f64> = (1..n_blocks)
        .map(|k| crate::stats::percentile_sorted(&own, k as f64 / n_blocks as f64))
        .collect();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
    for (i, &s) in score.iter().enumerate() {
        if s < lo || s > hi {
            continue;
        }
        let k = cuts.partition_point(|&c| c < s);
        out[k].push(i);
    }
    out.retain(|b| !b.is_empty());
    let valid = |b: &Vec<usize>| b.iter().any(|&i| in_group[i]) && b.iter().any(|&i| !in_group[i]);
    let mut merges = 0;
    while out.len() > 1 {
        let Some(k) = out.iter().position(|b| !valid(b)) else { break };
        let block = out.remove(k);
        let target = if k < out.len() { k } else { k - 1 };
        out[target].extend(block);
        merges += 1;
    }
    (out, merges)
}

/// Blocked difference in means, group minus complement, weighted by the
/// group's count per block, over its pooled standard error.
fn blocked_t(values: &[f64], in_group: &[bool], blocks: &[Vec<usize>]) -> Option<f64> {
    let n_group: usize = in_group.iter().filter(|&&g| g).count();
    let mut diff = 0.0;
    let mut var = 0.0;
    for b in blocks {
        let g: Vec<f64> = b.iter().filter(|&&i| in_group[i]).map(|&i| values[i]).collect();
        let c: Vec<f64> = b.iter().filter(|&&i| !in_group[i]).map(|&i| values[i]).collect();
        if g.is_empty() || c.is_empty() {
            return None;
        }
        let w = g.len() as f64 / n_group as f64;
        let (mg, mc) = (mean(&g), mean(&c));
        let ss: f64 = g.iter().map(|v| (v - mg).powi(2)).sum::<f64>() + c.iter().map(|v| (v - mc).powi(2)).sum::<f64>();
        let dof = (g.len() + c.len()).saturating_sub(2).max(1) as f64;
        diff += w * (mg - mc);
        var += w * w * (ss / dof) * (1.0 / g.len() as f64 + 1.0 / c.len() as f64);
    }
    (var > 0.0).then(|| diff / var.sqrt())
}

/// Covariate balance of each treatment group against its complement, before
/// and after conditioning on the propensity score at the group's median
/// treatment.
pub fn balance_test(units: &[GpsUnit], model: &TreatmentModel, n_blocks: usize) -> Result<BalanceReport> {
    if n_blocks == 0 {
        return Err(Error::Config("at least one balance block is required".into()));
    }
    let mut cells = Vec::new();
    let mut merged_blocks = Vec::new();
    for group in TreatmentGroup::ALL {
        let in_group: Vec<bool> = units.iter().map(|u| group.contains(u.treatment)).collect();
        let mut treat: Vec<u32> = units.iter().filter(|u| group.contains(u.treatment)).map(|u| u.treatment).collect();
        if treat.is_empty() || treat.len() == units.len() {
            return Err(Error::EmptyGroup(format!(
                "{} has {} of {} subscribers",
                group.label(),
                treat.len(),
                units.len()
            )));
        }
        treat.sort_unstable();
        let median = crate::stats::percentile_sorted(&treat.iter().map(|&t| t as f64).collect::<Vec<_>>(), 0.5);
        let score: Vec<f64> = model.mu.iter().map(|&mu| gps_density(median, mu)).collect();
        let (blk, merges) = blocks(&score, &in_group, n_blocks);
        merged_blocks.push((group, merges));
        for (j, name) in GPS_COVARIATES.iter().enumerate() {
            let values: Vec<f64> = units.iter().map(|u| u.covariates[j]).collect();
            let (g, c): (Vec<f64>, Vec<f64>) = {
                let g = values.iter().zip(&in_group).filter(|(_, &f)| f).map(|(v, _)| *v).collect();
                let c = values.iter().zip(&in_group).filter(|(_, &f)| !f).map(|(v, _)| *v).collect();
                (g, c)
            };
            let before = pooled_t(&g, &c);
            let after = blocked_t(&values, &in_group, &blk);
            let note = (before.is_none() || after.is_none()).then(|| "degenerate variance, t reported as 0".to_string());
            cells.push(BalanceCell {
                covariate: name.to_string(),
                group,
                t_before: before.unwrap_or(0.0),
                t_after: after.unwrap_or(0.0),
                note,
            });
        }
    }
    Ok(BalanceReport { cells, merged_blocks })
}

/// Table-shaped export: one row per covariate, before/after columns per group.
pub fn write_balance<W: Write>(out: W, report: &BalanceReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["covariate".to_string()];
    for g in TreatmentGroup::ALL {
        for phase in ["before", "after"] {
            header.push(format!("{}_{}", g.label(), phase));
            header.push(format!("{}_{}_flag", g.label(), phase));
        }
    }
    w.write_record(&header)?;
    for name in GPS_COVARIATES {
        let mut row = vec![name.to_string()];
        for g in TreatmentGroup::ALL {
            let c = report.cell(name, g).expect("every covariate has a cell per group");
            row.push(format!("{:.4}", c.t_before));
            row.push((c.flagged_before() as u8).to_string());
            row.push(format!("{:.4}", c.t_after));
            row.push((c.flagged_after() as u8).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<balance>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_boundaries() {
        assert!(TreatmentGroup::T1.contains(0) && TreatmentGroup::T1.contains(1));
        assert!(TreatmentGroup::T2.contains(2) && TreatmentGroup::T2.contains(3));
        assert!(TreatmentGroup::T3.contains(4) && !TreatmentGroup::T3.contains(3));
    }

    #[test]
    fn subscribers_off_the_group_range_are_left_out() {
        // group scores span 4..=8; 0..4 and 9 lie outside
        let score: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let in_group: Vec<bool> = (0..10).map(|i| i % 2 == 0 && (4..=8).contains(&i)).collect();
        let (b, _) = blocks(&score, &in_group, 2);
        let mut kept: Vec<usize> = b.concat();
        kept.sort_unstable();
        assert_eq!(kept, vec![4, 5, 6, 7, 8]);
    }

    #[test]
    fn one_sided_blocks_are_merged() {
        // the two lowest group scores have no complement member beside them
        let score = vec![0.0, 1.0, 2.0, 3.0, 4.0, 4.5, 5.0, 5.5];
        let in_group = vec![true, true, true, true, true, false, true, false];
        let (b, merges) = blocks(&score, &in_group, 4);
        assert!(merges > 0);
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 7);
        assert!(b.iter().all(|blk| blk.iter().any(|&i| in_group[i]) && blk.iter().any(|&i| !in_group[i])));
    }

    #[test]
    fn constant_covariate_gives_zero() {
        let v = vec![1.0; 6];
        let g = vec![true, false, true, false, true, false];
        assert_eq!(blocked_t(&v, &g, &[vec![0, 1, 2, 3, 4, 5]]), None);
    }
}
