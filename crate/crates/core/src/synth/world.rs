use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};

use super::config::{ExposureMode, WorldConfig};
use super::truth::{GroundTruth, Mechanism};
use crate::calendar::{Window, YearMonth};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::graph::MIN_COPRESENT_MONTHS;
use crate::ingest::{self, aggregate_monthly, CdrRecord, MonthlyAggregate, Roster, Subscriber, TariffPlan};
use crate::stats::{expit, logit};

const OFF_NET: u32 = 1 << 31;

/// One generated call. Parties below `OFF_NET` are roster indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Call {
    month: u8,
    day: u8,
    hour: u8,
    minute: u8,
    caller: u32,
    callee: u32,
    duration: u32,
    cell: u16,
}

/// Purposes of independent random streams.
#[derive(Clone, Copy)]
enum Purpose {
    Trait = 1,
    Join,
    Edge,
    Churn,
    Usage,
    EdgeCalls,
    Sociability,
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based streams: the draws for `(purpose, a, b)` never depend on
/// how many other streams were consumed, or on which thread.
struct Streams {
    key: [u8; 32],
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
        }
    }

    fn rng(&self, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(mix(mix(mix(purpose as u64) ^ a) ^ b));
        rng
    }
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive finite rate").sample(rng) as u32
}

/// A generated operator: roster, tariffs, calls and the truth behind them.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub window: Window,
    pub subscribers: Vec<Subscriber>,
    pub tariffs: Vec<TariffPlan>,
    pub truth: GroundTruth,
    calls: Vec<Call>,
}

/// Paths written by [`World::write_files`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldFiles {
    pub cdr: PathBuf,
    pub subscribers: PathBuf,
    pub tariffs: PathBuf,
    pub trace: PathBuf,
    pub edges: PathBuf,
    pub config: PathBuf,
}

impl WorldFiles {
    pub fn in_dir(dir: &Path) -> Self {
        WorldFiles {
            cdr: dir.join("cdr.csv"),
            subscribers: dir.join("subscribers.csv"),
            tariffs: dir.join("tariffs.csv"),
            trace: dir.join("truth_trace.csv"),
            edges: dir.join("truth_edges.csv"),
            config: dir.join("world.toml"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [&self.cdr, &self.subscribers, &self.tariffs, &self.trace, &self.edges, &self.config]
    }
}

pub fn subscriber_id(idx: u32) -> String {
    format!("S{idx:06}")
}

fn party_id(p: u32) -> String {
    if p & OFF_NET != 0 {
        format!("X{:07}", p & !OFF_NET)
    } else {
        subscriber_id(p)
    }
}

impl World {
    pub fn n_calls(&self) -> usize {
        self.calls.len()
    }

    /// Calls in the CDR layout, in file order.
    pub fn cdr_records(&self) -> impl Iterator<Item = CdrRecord> + '_ {
        self.calls.iter().map(move |c| {
            let ym = self.window.month_at(c.month as u32);
            let timestamp = NaiveDate::from_ymd_opt(ym.year, ym.month, c.day as u32)
                .and_then(|d| d.and_hms_opt(c.hour as u32, c.minute as u32, 0))
                .expect("generated timestamps are valid");
            CdrRecord {
                timestamp,
                caller_id: party_id(c.caller),
                callee_id: party_id(c.callee),
                duration_sec: c.duration,
                cell_id: format!("C{:03}", c.cell),
                caller_on_net: c.caller & OFF_NET == 0,
                callee_on_net: c.callee & OFF_NET == 0,
            }
        })
    }

    pub fn roster(&self) -> Result<Roster> {
        Roster::new(&self.subscribers, &self.tariffs)
    }

    /// Monthly usage straight from the generated calls, identical to
    /// ingesting the written files.
    pub fn aggregate(&self) -> Result<MonthlyAggregate> {
        aggregate_monthly(self.cdr_records(), self.roster()?, self.window)
    }

    pub fn write_files(&self, dir: &Path) -> Result<WorldFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = WorldFiles::in_dir(dir);
        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        let records: Vec<CdrRecord> = self.cdr_records().collect();
        ingest::write_cdr(create(&files.cdr)?, &records)?;
        ingest::write_subscribers(create(&files.subscribers)?, &self.subscribers)?;
        ingest::write_tariffs(create(&files.tariffs)?, &self.tariffs)?;
        self.truth.write_trace(create(&files.trace)?)?;
        self.truth.write_edges(create(&files.edges)?)?;
        std::fs::write(&files.config, self.config.to_toml()).map_err(|e| Error::io(&files.config, e))?;
        Ok(files)
    }
}

/// Sum over pairs `i < j` of `s_i s_j exp(-|z_i - z_j| / scale)` for
/// scalar traits, in `O(n log n)` after sorting.
fn pair_weight_total_1d(z: &[f64], s: &[f64], scale: f64) -> f64 {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let mut acc = 0.0;
    let mut total = 0.0;
    for k in 1..order.len() {
        let (prev, cur) = (order[k - 1], order[k]);
        acc = (-(z[cur] - z[prev]) / scale).exp() * (acc + s[prev]);
        total += s[cur] * acc;
    }
    total
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn weight(distance: f64, scale: f64) -> f64 {
    if scale.is_infinite() {
        1.0
    } else if scale == 0.0 {
        (distance == 0.0) as u8 as f64
    } else {
        (-distance / scale).exp()
    }
}

/// Links pairs independently with probability `min(1, c s_i s_j w_ij)`,
/// `c` chosen so the unclamped expectation meets the degree target.
fn form_edges(
    cfg: &WorldConfig,
    traits: &[Vec<f64>],
    sociability: &[f64],
    streams: &Streams,
    exec: Execution,
) -> Result<Vec<(u32, u32)>> {
    let n = cfg.n_subscribers;
    let scale = cfg.homophily_strength;
    let s = sociability;
    let total = if scale.is_infinite() {
        let sum: f64 = s.iter().sum();
        let sq: f64 = s.iter().map(|v| v * v).sum();
        (sum * sum - sq) / 2.0
    } else if cfg.latent_trait_dim == 1 && scale > 0.0 {
        let z: Vec<f64> = traits.iter().map(|t| t[0]).collect();
        pair_weight_total_1d(&z, s, scale)
    } else {
        exec.map_range(n, |i| {
            (i + 1..n)
                .map(|j| s[i] * s[j] * weight(distance(&traits[i], &traits[j]), scale))
                .sum::<f64>()
        })
        .iter()
        .sum()
    };
    let target = cfg.mean_degree * n as f64 / 2.0;
    let c = target / total;
    let infeasible = || {
        Error::Config(format!(
            "mean degree {} is infeasible for {} subscribers at homophily strength {}",
            cfg.mean_degree, n, scale
        ))
    };
    if !c.is_finite() {
        return Err(infeasible());
    }
    let rows = exec.map_range(n, |i| {
        let mut rng = streams.rng(Purpose::Edge, i as u64, 0);
        let mut out = Vec::new();
        let mut expected = 0.0;
        for j in i + 1..n {
            let p = (c * s[i] * s[j] * weight(distance(&traits[i], &traits[j]), scale)).min(1.0);
            expected += p;
            let u: f64 = rng.random();
            if u < p {
                out.push((i as u32, j as u32));
            }
        }
        (out, expected)
    });
    // clamping at probability one loses mass; beyond a tenth the target is out of reach
    let expected: f64 = rows.iter().map(|r| r.1).sum();
    if expected < 0.9 * target {
        return Err(infeasible());
    }
    Ok(rows.into_iter().flat_map(|r| r.0).collect())
}

fn stamp(rng: &mut ChaCha8Rng, month: u32, duration: &Exp<f64>, cells: u32) -> Call {
    Call {
        month: month as u8,
        day: rng.random_range(1..=28),
        hour: rng.random_range(0..24),
        minute: rng.random_range(0..60),
        caller: 0,
        callee: 0,
        duration: (duration.sample(rng).ceil() as u32).max(1),
        cell: rng.random_range(0..cells) as u16,
    }
}

/// Simulates the operator month by month.
///
/// In month `m` every subscriber at risk first draws churn from a logistic
/// hazard in its trait and its exposure through `m - 1`; then the month's
/// calls are placed. A friend who goes silent in `m` still receives calls
/// from active friends that month, which is what makes the churn visible to
/// them as a 1-call churner friend.
pub fn generate_world(config: &WorldConfig, exec: Execution) -> Result<World> {
    config.validate()?;
    let cfg = config;
    let n = cfg.n_subscribers;
    let months = cfg.n_months;
    let streams = Streams::new(cfg.seed);
    let window = Window::new(cfg.start_month, months);

    let traits: Vec<Vec<f64>> = exec.map_range(n, |i| {
        let mut rng = streams.rng(Purpose::Trait, i as u64, 0);
        (0..cfg.latent_trait_dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    });

    let last_join = cfg.last_risk_month().max(2);
    let entry: Vec<(u32, YearMonth, usize)> = exec.map_range(n, |i| {
        let mut rng = streams.rng(Purpose::Join, i as u64, 0);
        let plan = rng.random_range(0..cfg.tariffs.len());
        if rng.random::<f64>() < cfg.late_joiner_share {
            let j = rng.random_range(2..=last_join);
            (j, window.month_at(j), plan)
        } else {
            let back = rng.random_range(0..cfg.max_tenure_months.max(1)) as i64;
            (1, cfg.start_month.plus(-back), plan)
        }
    });
    let join: Vec<u32> = entry.iter().map(|e| e.0).collect();
    let subscribers: Vec<Subscriber> = entry
        .iter()
        .enumerate()
        .map(|(i, &(_, ym, plan))| Subscriber {
            subscriber_id: subscriber_id(i as u32),
            plan_id: cfg.tariffs[plan].plan_id.clone(),
            join_month: ym,
        })
        .collect();

    let spread = cfg.degree_dispersion;
    let sociability: Vec<f64> = exec.map_range(n, |i| {
        let mut rng = streams.rng(Purpose::Sociability, i as u64, 0);
        let xi: f64 = StandardNormal.sample(&mut rng);
        (spread * xi - spread * spread / 2.0).exp()
    });
    let edges = form_edges(cfg, &traits, &sociability, &streams, exec)?;

    let base_eta: Vec<f64> = traits
        .iter()
        .map(|t| logit(cfg.baseline_hazard) + cfg.trait_hazard_slope * t[0])
        .collect();
    let offnet_rate: Vec<f64> = traits
        .iter()
        .map(|t| cfg.offnet_call_rate * (cfg.trait_call_loading * t[0]).exp())
        .collect();
    let duration = Exp::new(1.0 / cfg.mean_call_duration_sec).expect("positive mean duration");
    let friend_extra = cfg.edge_call_rate - 1.0;
    let churn_month_rate = cfg.edge_call_rate * cfg.churn_month_call_share;

    let mut churn: Vec<Option<u32>> = vec![None; n];
    let mut mechanism: Vec<Option<Mechanism>> = vec![None; n];
    let mut exposure = vec![0u32; n];
    let mut exposure_at_churn: Vec<Option<u32>> = vec![None; n];
    let mut calls: Vec<Call> = Vec::new();

    for m in 1..=months {
        let draws = exec.map_range(n, |i| {
            if churn[i].is_some() || join[i] >= m {
                return None;
            }
            let mut rng = streams.rng(Purpose::Churn, i as u64, m as u64);
            let u: f64 = rng.random();
            let p = expit(base_eta[i] + cfg.contagion_log_hazard * exposure[i] as f64);
            (u < p).then(|| {
                if u < expit(base_eta[i]) {
                    Mechanism::Baseline
                } else {
                    Mechanism::Contagion
                }
            })
        });
        for (i, d) in draws.into_iter().enumerate() {
            if let Some(mech) = d {
                churn[i] = Some(m);
                mechanism[i] = Some(mech);
                exposure_at_churn[i] = Some(exposure[i]);
            }
        }
        let active = |i: usize| join[i] <= m && churn[i].is_none_or(|c| c > m);

        let own = exec.map_range(n, |i| {
            let mut out = Vec::new();
            if !active(i) {
                return out;
            }
            let mut rng = streams.rng(Purpose::Usage, i as u64, m as u64);
            let n_out = 1 + poisson(&mut rng, offnet_rate[i]);
            let n_in = poisson(&mut rng, cfg.offnet_incoming_rate);
            let pool = (4 * n) as u32;
            for k in 0..n_out + n_in {
                let mut c = stamp(&mut rng, m, &duration, cfg.n_cells);
                let other = OFF_NET | rng.random_range(0..pool);
                if k < n_out {
                    (c.caller, c.callee) = (i as u32, other);
                } else {
                    (c.caller, c.callee) = (other, i as u32);
                }
                out.push(c);
            }
            out
        });

        // (calls on the edge, ego who reached a friend in the friend's churn month)
        let on_edges = exec.map_range(edges.len(), |e| {
            let (a, b) = edges[e];
            let (ai, bi) = (a as usize, b as usize);
            let mut out = Vec::new();
            let mut rng = streams.rng(Purpose::EdgeCalls, e as u64, m as u64);
            if active(ai) && active(bi) {
                let k = 1 + poisson(&mut rng, friend_extra);
                for _ in 0..k {
                    let mut c = stamp(&mut rng, m, &duration, cfg.n_cells);
                    (c.caller, c.callee) = if rng.random::<bool>() { (a, b) } else { (b, a) };
                    out.push(c);
                }
                return (out, None);
            }
            let (ego, gone) = if active(ai) && churn[bi] == Some(m) {
                (a, b)
            } else if active(bi) && churn[ai] == Some(m) {
                (b, a)
            } else {
                return (out, None);
            };
            let k = poisson(&mut rng, churn_month_rate);
            for _ in 0..k {
                let mut c = stamp(&mut rng, m, &duration, cfg.n_cells);
                (c.caller, c.callee) = (ego, gone);
                out.push(c);
            }
            (out, (k >= 1).then_some((ego, gone)))
        });

        if cfg.exposure == ExposureMode::LastMonth {
            exposure.iter_mut().for_each(|x| *x = 0);
        }
        let mut month_calls: Vec<Call> = own.into_iter().flatten().collect();
        for (edge_calls, reached) in on_edges {
            month_calls.extend(edge_calls);
            if let Some((ego, gone)) = reached {
                // only friendships the graph builder can see carry exposure
                let first = join[ego as usize].max(join[gone as usize]);
                if m >= first + MIN_COPRESENT_MONTHS {
                    exposure[ego as usize] += 1;
                }
            }
        }
        month_calls.sort_by_key(|c| (c.day, c.hour, c.minute));
        calls.extend(month_calls);
    }

    let truth = GroundTruth {
        seed: cfg.seed,
        n_months: months,
        delta_true: cfg.contagion_log_hazard,
        ids: subscribers.iter().map(|s| s.subscriber_id.clone()).collect(),
        traits,
        join_index: join,
        churn_month: churn,
        mechanism,
        exposure_at_churn,
        edges,
    };
    Ok(World {
        config: cfg.clone(),
        window,
        subscribers,
        tariffs: cfg.tariffs.clone(),
        truth,
        calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_weight_sum_matches_brute_force() {
        let z: [f64; 6] = [0.3, -1.2, 0.9, 0.0, 2.5, -0.4];
        let s: [f64; 6] = [1.0, 0.5, 2.0, 1.5, 0.3, 0.9];
        let brute: f64 = (0..z.len())
            .flat_map(|i| (i + 1..z.len()).map(move |j| (i, j)))
            .map(|(i, j)| s[i] * s[j] * (-(z[i] - z[j]).abs() / 0.7f64).exp())
            .sum();
        assert!((pair_weight_total_1d(&z, &s, 0.7) - brute).abs() < 1e-12);
    }

    #[test]
    fn streams_are_independent_of_consumption_order() {
        let s = Streams::new(5);
        let mut a = s.rng(Purpose::Churn, 3, 4);
        let _ = s.rng(Purpose::Churn, 3, 5).random::<u64>();
        let mut b = s.rng(Purpose::Churn, 3, 4);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        assert_ne!(s.rng(Purpose::Churn, 3, 4).random::<u64>(), s.rng(Purpose::Churn, 4, 3).random::<u64>());
    }

    #[test]
    fn infeasible_degree_is_reported() {
        let cfg = WorldConfig {
            n_subscribers: 50,
            mean_degree: 20.0,
            homophily_strength: 0.01,
            ..Default::default()
        };
        let err = generate_world(&cfg, Execution::Sequential).unwrap_err();
        assert!(err.to_string().contains("infeasible"), "{err}");
    }
}
