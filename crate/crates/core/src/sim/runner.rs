//! One variant over the full horizon.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::click::DrawKey;
use super::platform::{retrain_with_feedback, run_epoch, run_warmup, train_on_warmup, EpochContext, PlatformState, Warmup};
use super::select::{select_publishers, select_users};
use super::variant::{VariantName, VariantSpec};
use super::world::{generate_world, World};
use super::SimError;
use crate::config::ExperimentConfig;
use crate::embedding::{pool_into, ItemEmbeddingTable};
use crate::ids::{ItemId, PublisherId, UserId};
use crate::interactions::{InteractionLog, Source};
use crate::invr::{run_tick, ExposureLedger, OrderingMode, TickInput, ASSIGNMENT_CSV_HEADER};
use crate::metrics::{bottom_share, cohort_ctr_clicks, ewma, gini, psei, top_share, ExposureDistribution, PSEI_EWMA_ALPHA};
use crate::mips::MipsIndex;
use crate::report::{MetricReport, RunSummary};
use crate::rng::{mix, Stream};

/// The world, its warm-up traffic and the trained main model: everything
/// variants share before they diverge.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub world: World,
    pub warmup: Warmup,
    pub table: ItemEmbeddingTable,
    pub selected_publishers: BTreeSet<PublisherId>,
    /// Items of the selected publishers available from the first tick; PSEI
    /// is tracked over this fixed set.
    pub cohort: BTreeSet<ItemId>,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, SimError> {
    let world = generate_world(&config.world)?;
    let warmup = run_warmup(&world, config)?;
    let table = train_on_warmup(&world, &warmup, &config.train)?;
    finish_prepare(config, world, warmup, table)
}

/// Like [`prepare`] but with an already trained table.
pub fn prepare_with_table(config: &ExperimentConfig, table: ItemEmbeddingTable) -> Result<Prepared, SimError> {
    let world = generate_world(&config.world)?;
    let warmup = run_warmup(&world, config)?;
    finish_prepare(config, world, warmup, table)
}

fn finish_prepare(
    config: &ExperimentConfig,
    world: World,
    warmup: Warmup,
    table: ItemEmbeddingTable,
) -> Result<Prepared, SimError> {
    let dense = table.len() == world.items.len() && table.ids().iter().enumerate().all(|(k, id)| id.index() == k);
    if !dense {
        return Err(SimError::InvalidConfig("embedding table does not cover the catalog".into()));
    }
    let thresholds = config.selection.thresholds(&warmup.publisher_stats);
    let selected_publishers = select_publishers(&warmup.publisher_stats, &thresholds);
    let cohort = world
        .items
        .iter()
        .filter(|i| i.release == 0 && selected_publishers.contains(&i.publisher))
        .map(|i| i.id)
        .collect();
    Ok(Prepared { config: config.clone(), world, warmup, table, selected_publishers, cohort })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub keep_log: bool,
    pub keep_assignments: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub ledger: ExposureLedger,
    pub log: Option<InteractionLog>,
    /// Assignment CSV with header, when kept.
    pub assignments: Option<String>,
}

fn user_index(users: &[UserId], state: &PlatformState, table: &ItemEmbeddingTable) -> Result<MipsIndex<UserId>, SimError> {
    let entries = users.iter().map(|&u| {
        let mut v = vec![0.0; table.dim()];
        pool_into(state.histories[u.index()].items(), table, &mut v).expect("every catalog item has a row");
        (u, v)
    });
    Ok(MipsIndex::build(entries)?)
}

pub fn run_variant(prep: &Prepared, spec: &VariantSpec, sim_seed: u64, options: RunOptions) -> Result<RunResult, SimError> {
    let c = &prep.config;
    let world = &prep.world;
    let mut invr = spec.invr_config(&c.invr);
    invr.seed = mix(c.invr.seed, Stream::Allocation, &[sim_seed]);
    invr.validate()?;
    let mode = spec.name.ordering_mode();

    let mut state = prep.warmup.state.clone();
    let mut table = Cow::Borrowed(&prep.table);
    let mut ledger = ExposureLedger::new(world.items.iter().map(|i| i.id), invr.min_exposure);
    let mut pending = vec![Vec::new(); world.users.len()];
    let mut log = InteractionLog::new();
    let mut assignments = options.keep_assignments.then(|| format!("{ASSIGNMENT_CSV_HEADER}\n"));
    let mut assigned_pairs = 0u64;
    let mut psei_series = Vec::with_capacity(world.config.ticks as usize);
    let mut retrained_upto = 0usize;

    for t in 0..world.config.ticks {
        if let Some(mode) = mode {
            if t % invr.recompute_period == 0 {
                let sel = &c.selection;
                let eligible = select_users(
                    &state.user_stats(world, sel.recent_window),
                    sel.min_history_len,
                    sel.min_recent_visits,
                );
                let index = if mode != OrderingMode::RandomUsers && !eligible.is_empty() {
                    Some(user_index(&eligible, &state, &table)?)
                } else {
                    None
                };
                let catalog: Vec<(ItemId, PublisherId)> =
                    world.items.iter().filter(|i| i.release <= t).map(|i| (i.id, i.publisher)).collect();
                let out = run_tick(
                    &TickInput {
                        tick: t,
                        ledger: &ledger,
                        catalog: &catalog,
                        selected_publishers: &prep.selected_publishers,
                        item_table: &table,
                        user_index: index.as_ref(),
                        eligible_users: &eligible,
                        seen: &state.seen,
                    },
                    &invr,
                )?;
                pending.iter_mut().for_each(Vec::clear);
                for (u, list) in &out.assignment.per_user {
                    pending[u.index()] = list.iter().map(|p| p.item).collect();
                }
                assigned_pairs += out.assignment.total_assigned() as u64;
                if let Some(buf) = assignments.as_mut() {
                    let mut bytes = Vec::new();
                    out.assignment.write_csv(t, mode, &mut bytes).expect("writing to memory");
                    buf.push_str(std::str::from_utf8(&bytes).expect("ascii"));
                }
            }
        }
        let ctx = EpochContext {
            world,
            config: c,
            table: &table,
            max_seen: invr.max_impressions_per_user_item,
            key: DrawKey::run(sim_seed, t),
            snapshots: c.feedback.enabled,
        };
        run_epoch(&ctx, &mut state, &mut pending, &mut ledger, &mut log)?;
        if !prep.cohort.is_empty() {
            psei_series.push(psei(&prep.cohort, &ledger).expect("non-empty cohort"));
        }
        if c.feedback.enabled && (t + 1) % c.feedback.period == 0 {
            let train = crate::embedding::TrainConfig { epochs: c.feedback.epochs, ..c.train.clone() };
            table = Cow::Owned(retrain_with_feedback(&table, &log, retrained_upto, &train)?);
            retrained_upto = log.len();
        }
    }

    let metrics = summarize(&ledger, &log, &prep.cohort, assigned_pairs);
    let summary = RunSummary {
        variant: spec.name,
        world_seed: world.config.seed,
        sim_seed,
        ticks: world.config.ticks,
        metrics,
        psei_series,
    };
    Ok(RunResult { summary, ledger, log: options.keep_log.then_some(log), assignments })
}

fn summarize(ledger: &ExposureLedger, log: &InteractionLog, cohort: &BTreeSet<ItemId>, assigned_pairs: u64) -> MetricReport {
    let dist = ExposureDistribution::from_ledger(ledger);
    let invr = cohort_ctr_clicks(&log.records, Some(Source::Invr), None);
    let all = cohort_ctr_clicks(&log.records, None, None);
    let visible = log.records.iter().filter(|r| r.visible);
    let unique = |organic_only: bool| {
        let mut seen = vec![false; ledger.len()];
        for r in log.records.iter().filter(|r| r.visible && (!organic_only || r.source == Source::Organic)) {
            seen[r.item.index()] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    MetricReport {
        b50ps: bottom_share(&dist, 0.5).ok(),
        psei: psei(cohort, ledger).ok(),
        t1ps: top_share(&dist, 0.01).ok(),
        gini: gini(&dist).ok(),
        ctr_invr: (!invr.empty).then_some(invr.ctr),
        clicks_invr: (!invr.empty).then_some(invr.clicks_per_user),
        ctr_overall: (!all.empty).then_some(all.ctr),
        clicks_overall: (!all.empty).then_some(all.clicks_per_user),
        invr_share_at_shutoff: ledger.invr_share_at_shutoff(cohort),
        visible_impressions: visible.clone().count() as u64,
        invr_visible_impressions: visible.filter(|r| r.source == Source::Invr).count() as u64,
        unique_items: unique(false),
        unique_organic_items: unique(true),
        cohort_items: cohort.len(),
        assigned_pairs,
    }
}

impl RunResult {
    /// Writes `summary.json`, `ledger.csv`, `psei.csv` and, when kept,
    /// `interactions.csv` and `assignments.csv`.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.summary).map_err(std::io::Error::other)?;
        std::fs::write(dir.join("summary.json"), json + "\n")?;
        self.ledger.write_csv(BufWriter::new(File::create(dir.join("ledger.csv"))?))?;
        let mut psei = BufWriter::new(File::create(dir.join("psei.csv"))?);
        writeln!(psei, "tick,psei,psei_ewma")?;
        let series = &self.summary.psei_series;
        for (t, (p, e)) in series.iter().zip(ewma(series, PSEI_EWMA_ALPHA).unwrap_or_default()).enumerate() {
            writeln!(psei, "{t},{p},{e}")?;
        }
        psei.flush()?;
        if let Some(log) = &self.log {
            let mut out = BufWriter::new(File::create(dir.join("interactions.csv"))?);
            log.write_csv(&mut out)?;
            out.flush()?;
        }
        if let Some(a) = &self.assignments {
            std::fs::write(dir.join("assignments.csv"), a)?;
        }
        Ok(())
    }
}

impl Prepared {
    pub fn run(&self, name: VariantName, sim_seed: u64, options: RunOptions) -> Result<RunResult, SimError> {
        run_variant(self, &self.config.variant(name), sim_seed, options)
    }
}
