//! One function per subcommand. Each reads its upstream artifacts through
//! the manifest checks and writes a fresh stage directory.

use std::io::Write;

use anyhow::{bail, Context, Result};
use peerchurn_core::churn::{read_churn, write_churn, ChurnLabels, Presence};
use peerchurn_core::cox::{fit_cox, format_fit_table, mc_relative_hazard, write_fit_csv, write_hazard_curves, CoxFit, CovariateSpec};
use peerchurn_core::gps::{run_gps, write_balance, write_mte, GpsAnalysis};
use peerchurn_core::graph::{read_churner_friends, read_edges, trim_sample, write_churner_friends, write_edges};
use peerchurn_core::ingest::{
    aggregate_monthly, parse_cdr_file, parse_subscriber_file, parse_tariff_file, read_pair_months, read_subscriber_months,
    write_pair_months, write_rejects, write_subscriber_months, write_subscribers, write_tariffs, MonthlyAggregate, Roster,
};
use peerchurn_core::panel::{read_cross_section, read_panel, write_cross_section, write_panel};
use peerchurn_core::pipeline::{prepare, Prepared};
use peerchurn_core::synth::{generate_world, replay_ground_truth, EstimatorOutputs, GroundTruth, WorldConfig, WorldFiles};
use peerchurn_core::Execution;

use crate::config::RunConfig;
use crate::manifest::{read_json, StageWriter, Workspace};

pub const STAGES: [&str; 8] = ["simulate", "ingest", "graph", "panel", "cox", "mc-hazard", "gps", "scorecard"];

/// Configuration keys each stage depends on.
fn keys(stage: &str) -> &'static [&'static str] {
    match stage {
        "simulate" => &["world"],
        "ingest" => &["inputs", "window"],
        "graph" => &["sample"],
        "panel" => &["sample", "splits"],
        "cox" => &["cox"],
        "mc-hazard" => &["hazard", "seed"],
        "gps" => &["gps", "splits"],
        "scorecard" => &["seed"],
        other => unreachable!("unknown stage {other}"),
    }
}

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub ws: &'a Workspace,
    pub exec: Execution,
}

impl Ctx<'_> {
    fn require(&self, stage: &str) -> Result<()> {
        self.ws.require(stage, &self.cfg.slice(keys(stage))).map(|_| ())
    }

    fn finish(&self, w: StageWriter<'_>, stage: &str) -> Result<()> {
        w.finish(self.cfg.seed, self.cfg.slice(keys(stage)))?;
        println!("{stage}: wrote {}", self.ws.stage_dir(stage).display());
        Ok(())
    }

    fn thresholds(&self) -> &[u32] {
        &self.cfg.sample.thresholds
    }
}

pub fn run_stage(ctx: &Ctx<'_>, stage: &str) -> Result<()> {
    match stage {
        "simulate" => simulate(ctx),
        "ingest" => ingest(ctx),
        "graph" => graph(ctx),
        "panel" => panel(ctx),
        "cox" => cox(ctx),
        "mc-hazard" => hazard(ctx),
        "gps" => gps(ctx),
        "scorecard" => scorecard(ctx),
        other => bail!("unknown subcommand {other}"),
    }
}

/// Every analysis stage in order, ending with the scorecard when the inputs
/// are simulated.
pub fn run_all(ctx: &Ctx<'_>) -> Result<()> {
    for stage in &STAGES[1..7] {
        run_stage(ctx, stage)?;
    }
    if ctx.cfg.uses_simulated_inputs() {
        run_stage(ctx, "scorecard")?;
    } else {
        println!("scorecard: skipped, inputs are not simulated");
    }
    Ok(())
}

fn simulate(ctx: &Ctx<'_>) -> Result<()> {
    let mut w = StageWriter::begin(ctx.ws, "simulate")?;
    let world = generate_world(&ctx.cfg.world, ctx.exec)?;
    let files = world.write_files(w.dir())?;
    for path in files.all() {
        w.adopt(&path.file_name().expect("file name").to_string_lossy());
    }
    w.write_text(
        "summary.toml",
        &format!(
            "subscribers = {}\ncalls = {}\nchurns = {}\ncontagion_churns = {}\nfriendships = {}\n",
            world.subscribers.len(),
            world.n_calls(),
            world.truth.n_churns(),
            world.truth.n_contagion(),
            world.truth.edges.len()
        ),
    )?;
    ctx.finish(w, "simulate")
}

fn ingest(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    let mut w = StageWriter::begin(ctx.ws, "ingest")?;
    let (cdr, subs, tariffs) = if cfg.uses_simulated_inputs() {
        ctx.require("simulate")?;
        let files = WorldFiles::in_dir(&ctx.ws.stage_dir("simulate"));
        (w.input(&files.cdr)?, w.input(&files.subscribers)?, w.input(&files.tariffs)?)
    } else {
        let i = &cfg.inputs;
        let get = |p: &Option<std::path::PathBuf>| p.clone().expect("checked at load");
        (w.input(&get(&i.cdr))?, w.input(&get(&i.subscribers))?, w.input(&get(&i.tariffs))?)
    };
    let subscribers = parse_subscriber_file(&subs)?;
    let plans = parse_tariff_file(&tariffs)?;
    let roster = Roster::new(&subscribers, &plans)?;
    let window = cfg.window();
    let parsed = parse_cdr_file(&cdr, window)?;
    if parsed.records.is_empty() {
        bail!(
            "no call record in {} falls inside the {}-month window starting {} ({} rejected)",
            cdr.display(),
            window.months,
            window.start,
            parsed.rejects.len()
        );
    }
    let usage = aggregate_monthly(&parsed.records, roster, window)?;

    write_subscribers(w.create("subscribers.csv")?, &subscribers)?;
    write_tariffs(w.create("tariffs.csv")?, &plans)?;
    write_subscriber_months(w.create("subscriber_months.csv")?, usage.rows())?;
    write_pair_months(w.create("pair_months.csv")?, &usage.pairs, &usage.roster)?;
    write_rejects(w.create("rejects.csv")?, &parsed.rejects)?;
    w.write_text(
        "summary.toml",
        &format!(
            "accepted_records = {}\nrejected_records = {}\nsubscribers = {}\nsubscriber_months = {}\ncalling_pairs = {}\n",
            parsed.records.len(),
            parsed.rejects.len(),
            usage.roster.len(),
            usage.rows().count(),
            usage.pairs.num_pairs()
        ),
    )?;
    ctx.finish(w, "ingest")
}

/// Monthly usage rebuilt from the ingest stage's tables.
fn load_usage(ctx: &Ctx<'_>, w: &mut StageWriter<'_>) -> Result<MonthlyAggregate> {
    ctx.require("ingest")?;
    let subscribers = parse_subscriber_file(w.upstream("ingest", "subscribers.csv")?)?;
    let plans = parse_tariff_file(w.upstream("ingest", "tariffs.csv")?)?;
    let roster = Roster::new(&subscribers, &plans)?;
    let window = ctx.cfg.window();
    let rows = read_subscriber_months(w.upstream("ingest", "subscriber_months.csv")?)?;
    let pairs = read_pair_months(w.upstream("ingest", "pair_months.csv")?, &roster, window.months)?;
    Ok(MonthlyAggregate::from_parts(window, roster, rows, pairs)?)
}

fn graph(ctx: &Ctx<'_>) -> Result<()> {
    let mut w = StageWriter::begin(ctx.ws, "graph")?;
    let usage = load_usage(ctx, &mut w)?;
    let p = prepare(usage, &ctx.cfg.sample, ctx.exec)?;
    let roster = &p.usage.roster;
    write_churn(w.create("churn.csv")?, &p.labels)?;
    write_edges(w.create("edges.csv")?, &p.graph, roster)?;
    write_churner_friends(w.create("churner_friends.csv")?, &p.churner_friends, roster)?;
    w.write_text(
        "summary.toml",
        &format!(
            "churners = {}\nfriendships = {}\nmean_degree = {}\nretained = {}\nremoved_no_degree = {}\nremoved_high_degree = {}\n",
            p.labels.n_churners(),
            p.graph.num_edges(),
            p.graph.mean_degree(),
            p.trim.retained.len(),
            p.trim.removed_no_degree.len(),
            p.trim.removed_high_degree.len()
        ),
    )?;
    ctx.finish(w, "graph")
}

/// Everything the panel builders need, read back from ingest and graph.
fn load_prepared(ctx: &Ctx<'_>, w: &mut StageWriter<'_>) -> Result<Prepared> {
    let usage = load_usage(ctx, w)?;
    ctx.require("graph")?;
    let options = ctx.cfg.sample.clone();
    let events = read_churn(w.upstream("graph", "churn.csv")?)?;
    if events.len() != usage.roster.len()
        || events.iter().zip(usage.roster.ids()).any(|(e, id)| &e.subscriber_id != id)
    {
        bail!("graph/churn.csv does not list the ingested roster in order");
    }
    let presence = (0..usage.roster.len() as u32)
        .map(|i| {
            let active: Vec<bool> = usage.outbound_activity(i).iter().map(|&c| c > 0).collect();
            Presence::from_activity(&active)
        })
        .collect();
    let labels = ChurnLabels::from_events(usage.months(), events, presence);
    let graph = read_edges(w.upstream("graph", "edges.csv")?, &usage.roster)?;
    let churner_friends = read_churner_friends(
        w.upstream("graph", "churner_friends.csv")?,
        &usage.roster,
        &options.thresholds,
        usage.months(),
    )?;
    let trim = trim_sample(&graph, options.degree_cap, options.require_degree)?;
    Ok(Prepared {
        usage,
        labels,
        graph,
        trim,
        churner_friends,
        options,
    })
}

fn panel_name(n: u32) -> String {
    format!("panel_n{n}.csv")
}

fn cross_section_name(split: &str, n: u32) -> String {
    format!("cross_section_{split}_n{n}.csv")
}

fn panel(ctx: &Ctx<'_>) -> Result<()> {
    let mut w = StageWriter::begin(ctx.ws, "panel")?;
    let p = load_prepared(ctx, &mut w)?;
    let mut summary = String::new();
    for &n in ctx.thresholds() {
        let panel = p.survival_panel(n)?;
        write_panel(w.create(&panel_name(n))?, &panel)?;
        summary += &format!("[n{n}]\nrows = {}\nsubjects = {}\nevents = {}\n", panel.rows.len(), panel.n_subjects(), panel.n_events());
        for (name, split) in ctx.cfg.splits.named() {
            let cs = p.cross_section(split, n)?;
            write_cross_section(w.create(&cross_section_name(name, n))?, &cs)?;
            summary += &format!("{name}_units = {}\n", cs.units.len());
        }
        summary += "\n";
    }
    w.write_text("summary.toml", &summary)?;
    ctx.finish(w, "panel")
}

fn fit_name(n: u32, spec: CovariateSpec) -> String {
    format!("fit_n{n}_{}.json", spec.label())
}

fn cox(ctx: &Ctx<'_>) -> Result<()> {
    ctx.require("panel")?;
    let mut w = StageWriter::begin(ctx.ws, "cox")?;
    let mut fits: Vec<(String, CoxFit)> = Vec::new();
    for &n in ctx.thresholds() {
        let panel = read_panel(w.upstream("panel", &panel_name(n))?, n, ctx.cfg.sample.frd_churn_mode)?;
        for spec in CovariateSpec::ALL {
            let fit = fit_cox(&panel, spec, &ctx.cfg.cox).with_context(|| format!("Cox fit n={n} {}", spec.label()))?;
            w.write_json(&fit_name(n, spec), &fit)?;
            fits.push((format!("n{n}_{}", spec.label()), fit));
        }
    }
    let models: Vec<(String, &CoxFit)> = fits.iter().map(|(name, f)| (name.clone(), f)).collect();
    write_fit_csv(w.create("fits.csv")?, &models)?;
    let table = format_fit_table(&models);
    w.write_text("fit_table.txt", &table)?;
    print!("{table}");
    ctx.finish(w, "cox")
}

fn hazard(ctx: &Ctx<'_>) -> Result<()> {
    ctx.require("cox")?;
    let mut w = StageWriter::begin(ctx.ws, "mc-hazard")?;
    let h = &ctx.cfg.hazard;
    for &n in ctx.thresholds() {
        let fit: CoxFit = read_json(&w.upstream("cox", &fit_name(n, CovariateSpec::Calls))?)?;
        let curves = mc_relative_hazard(&fit, "frd_churn", h.k_max, h.n_sims, ctx.cfg.seed, ctx.exec)?;
        write_hazard_curves(w.create(&format!("hazard_n{n}.csv"))?, &curves)?;
    }
    ctx.finish(w, "mc-hazard")
}

fn gps_name(split: &str, n: u32) -> String {
    format!("gps_{split}_n{n}.json")
}

fn gps(ctx: &Ctx<'_>) -> Result<()> {
    ctx.require("panel")?;
    let mut w = StageWriter::begin(ctx.ws, "gps")?;
    let mut summary = String::new();
    let first = ctx.thresholds().first().copied();
    for (name, split) in ctx.cfg.splits.named() {
        let mut series = Vec::new();
        for &n in ctx.thresholds() {
            let cs = read_cross_section(w.upstream("panel", &cross_section_name(name, n))?, split.clone(), n)?;
            let g = match run_gps(&cs, &ctx.cfg.gps, ctx.exec) {
                Ok(g) => g,
                // only the primary fit at the first threshold feeds the scorecard;
                // sparse higher thresholds and the alternate split are reported instead
                Err(e) if name != "primary" || Some(n) != first => {
                    eprintln!("warning: GPS on the {name} split, n={n}: {e}");
                    summary += &format!("[{name}.n{n}]\nerror = {:?}\n\n", e.to_string());
                    continue;
                }
                Err(e) => return Err(anyhow::Error::new(e).context(format!("GPS on the {name} split, n={n}"))),
            };
            if let Some(b) = &g.balance {
                write_balance(w.create(&format!("balance_{name}_n{n}.csv"))?, b)?;
            }
            summary += &format!("[{name}.n{n}]\nunits = {}\n", g.n_units);
            if let Some(nv) = g.naive {
                summary += &format!("naive_gap = {}\nnaive_se = {}\n", nv.gap, nv.se);
            }
            if let Some(frac) = g.balance.as_ref().and_then(|b| b.cleared_fraction()) {
                summary += &format!("balance_cleared_fraction = {frac}\n");
            }
            summary += "\n";
            w.write_json(&gps_name(name, n), &g)?;
            series.push(g.series());
        }
        if !series.is_empty() {
            write_mte(w.create(&format!("mte_{name}.csv"))?, &series)?;
        }
    }
    w.write_text("summary.toml", &summary)?;
    ctx.finish(w, "gps")
}

fn scorecard(ctx: &Ctx<'_>) -> Result<()> {
    let cfg = ctx.cfg;
    for stage in ["simulate", "ingest", "cox", "gps"] {
        ctx.require(stage)?;
    }
    let n = *ctx.thresholds().first().context("no churner-friend thresholds configured")?;
    let mut w = StageWriter::begin(ctx.ws, "scorecard")?;
    let world = WorldConfig::load(w.upstream("simulate", "world.toml")?)?;
    let truth = GroundTruth::read(
        &w.upstream("simulate", "truth_trace.csv")?,
        &w.upstream("simulate", "truth_edges.csv")?,
        world.seed,
        world.n_months,
        world.contagion_log_hazard,
    )?;
    let subscribers = parse_subscriber_file(w.upstream("ingest", "subscribers.csv")?)?;
    let plans = parse_tariff_file(w.upstream("ingest", "tariffs.csv")?)?;
    let roster = Roster::new(&subscribers, &plans)?;
    let fit: CoxFit = read_json(&w.upstream("cox", &fit_name(n, CovariateSpec::Calls))?)?;
    let analysis: GpsAnalysis = read_json(&w.upstream("gps", &gps_name("primary", n))?)?;
    let card = replay_ground_truth(
        &truth,
        EstimatorOutputs {
            seed: cfg.seed,
            subscriber_ids: roster.ids(),
            cox: &fit,
            gps: &analysis,
        },
    )?;
    let text = card.to_toml();
    let mut out = w.create("scorecard.toml")?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    drop(out);
    println!(
        "scorecard: delta_true {} delta_hat {:.4} (se {:.4}) covered {}; naive gap {:.4} vs mte(1) {:.4}",
        card.delta_true, card.delta_hat, card.delta_se, card.delta_covered, card.naive_gap, card.mte[1]
    );
    ctx.finish(w, "scorecard")
}
