//! Platform state that persists across ticks, the warm-up logging policy and
//! the per-tick serving loop.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::click::{ClickModel, DrawKey, WARMUP_DOMAIN};
use super::recommender::{insert_cold_start, Recommender};
use super::select::{PublisherStats, UserStats};
use super::slate::{assemble_slate, Slot};
use super::world::World;
use super::SimError;
use crate::config::ExperimentConfig;
use crate::embedding::{pool_into, train, ItemEmbeddingTable, TrainConfig, TrainingExample, UserHistory};
use crate::ids::{ItemId, Tick, UserId};
use crate::interactions::{ImpressionHistory, InteractionLog, InteractionRecord, Source, NO_SNAPSHOT};
use crate::invr::{cold_start_pool, ExposureLedger};
use crate::rng::{mix, stream_rng, unit_uniform, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmupConfig {
    /// Ticks of logging-policy traffic before the run; they produce the
    /// training data, the initial click counts and the publisher statistics.
    pub ticks: u32,
    /// Share of logging-policy slots filled uniformly instead of by popularity.
    pub exploration: f64,
}

impl Default for WarmupConfig {
    fn default() -> Self {
        Self { ticks: 15, exploration: 0.2 }
    }
}

impl WarmupConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(SimError::InvalidConfig("warmup: exploration must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Periodic incremental retraining of the main model on newly logged traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub enabled: bool,
    pub period: u32,
    pub epochs: u32,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self { enabled: false, period: 10, epochs: 1 }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.period == 0 {
            return Err(SimError::InvalidConfig("feedback: period must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformState {
    /// Clicked items per user, most recent last.
    pub histories: Vec<UserHistory>,
    pub seen: ImpressionHistory,
    /// Clicks per item since the start of warm-up.
    pub clicks: Vec<u64>,
    /// Visible impressions per item since the start of warm-up.
    pub impressions: Vec<u64>,
    /// Bit `k` set when the user visited `k` ticks before the latest one.
    pub visit_mask: Vec<u64>,
}

impl PlatformState {
    pub fn new(world: &World, history_max_len: usize) -> Self {
        Self {
            histories: world
                .users
                .iter()
                .map(|u| UserHistory::from_items(u.id, u.initial_history.clone(), history_max_len))
                .collect(),
            seen: ImpressionHistory::new(),
            clicks: vec![0; world.items.len()],
            impressions: vec![0; world.items.len()],
            visit_mask: vec![0; world.users.len()],
        }
    }

    pub fn recent_visits(&self, user: UserId, window: u32) -> u32 {
        let mask = if window >= 64 { u64::MAX } else { (1u64 << window) - 1 };
        (self.visit_mask[user.index()] & mask).count_ones()
    }

    pub fn user_stats(&self, world: &World, window: u32) -> Vec<UserStats> {
        world
            .users
            .iter()
            .map(|u| UserStats {
                user: u.id,
                history_len: self.histories[u.id.index()].len(),
                recent_visits: self.recent_visits(u.id, window),
                consent: u.consent,
            })
            .collect()
    }

    /// Folds one tick's records into the state.
    fn apply(&mut self, visitors: &[UserId], records: &[InteractionRecord]) {
        for m in &mut self.visit_mask {
            *m <<= 1;
        }
        for u in visitors {
            self.visit_mask[u.index()] |= 1;
        }
        for r in records.iter().filter(|r| r.visible) {
            self.seen.record(r.user, r.item);
            self.impressions[r.item.index()] += 1;
            if r.clicked {
                self.clicks[r.item.index()] += 1;
                self.histories[r.user.index()].push(r.item);
            }
        }
    }
}

/// Per-position outcomes for one shown slate.
fn evaluate_slate(
    world: &World,
    model: &ClickModel,
    key: DrawKey,
    user: UserId,
    slate: &[Slot],
    slate_size: usize,
) -> Vec<InteractionRecord> {
    let depth = key.depth(model, user, slate_size);
    let u = &world.user(user).latent;
    slate
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let position = k + 1;
            let visible = position <= depth;
            let clicked = visible && key.click_draw(user, s.item) < model.click_probability(u, &world.item(s.item).latent);
            InteractionRecord {
                tick: key.tick,
                user,
                item: s.item,
                position: position as u8,
                visible,
                clicked,
                source: s.source,
                history: NO_SNAPSHOT,
            }
        })
        .collect()
}

fn visitors(world: &World, key: DrawKey) -> Vec<UserId> {
    world.users.iter().filter(|u| key.visits(u.id, u.activity)).map(|u| u.id).collect()
}

fn push_visit(log: &mut InteractionLog, history: &UserHistory, snapshots: bool, records: Vec<InteractionRecord>) {
    let handle = if snapshots && !history.is_empty() { log.add_snapshot(history.items()) } else { NO_SNAPSHOT };
    for mut r in records {
        r.history = handle;
        log.push(r);
    }
}

#[derive(Debug, Clone)]
pub struct Warmup {
    pub state: PlatformState,
    /// Logging-policy traffic with per-visit history snapshots.
    pub log: InteractionLog,
    pub publisher_stats: Vec<PublisherStats>,
}

/// Logging-policy slate: each slot is a popularity draw, or a uniform draw
/// with probability `exploration`, without repeats.
fn logging_slate<R: Rng>(
    rng: &mut R,
    popular: &WeightedIndex<f64>,
    pool: &[ItemId],
    exploration: f64,
    slate_size: usize,
) -> Vec<Slot> {
    let mut slate: Vec<Slot> = Vec::with_capacity(slate_size);
    let n = pool.len();
    while slate.len() < slate_size.min(n) {
        let explore = rng.random::<f64>() < exploration;
        let mut pick = None;
        for _ in 0..64 {
            let k = if explore { rng.random_range(0..n) } else { popular.sample(rng) };
            if !slate.iter().any(|s| s.item == pool[k]) {
                pick = Some(pool[k]);
                break;
            }
        }
        let item = pick.unwrap_or_else(|| *pool.iter().find(|i| !slate.iter().any(|s| s.item == **i)).expect("pool larger than slate"));
        slate.push(Slot { item, source: Source::Organic });
    }
    slate
}

/// Runs `warmup.ticks` of logging-policy traffic on the world's own seed.
pub fn run_warmup(world: &World, config: &ExperimentConfig) -> Result<Warmup, SimError> {
    let wc = &config.warmup;
    let slate_size = config.slate.slate_size;
    let model = ClickModel::from_world(world);
    let pool: Vec<ItemId> = world.items.iter().filter(|i| i.release == 0).map(|i| i.id).collect();
    if pool.is_empty() {
        return Err(SimError::InvalidConfig("no items are available before the run".into()));
    }
    let popular = WeightedIndex::new(pool.iter().map(|&i| world.item(i).prior))
        .map_err(|e| SimError::InvalidConfig(format!("popularity priors: {e}")))?;
    let mut state = PlatformState::new(world, config.recommender.history_max_len);
    let mut log = InteractionLog::new();
    for t in 0..wc.ticks {
        let key = DrawKey { seed: world.config.seed, domain: WARMUP_DOMAIN, tick: t };
        let who = visitors(world, key);
        let start = log.len();
        for &u in &who {
            let mut rng = stream_rng(world.config.seed, Stream::Warmup, &[u64::from(t), u64::from(u.0)]);
            let slate = logging_slate(&mut rng, &popular, &pool, wc.exploration, slate_size);
            let records = evaluate_slate(world, &model, key, u, &slate, slate_size);
            push_visit(&mut log, &state.histories[u.index()], true, records);
        }
        state.apply(&who, &log.records[start..]);
    }

    let mut publisher_stats: Vec<PublisherStats> = world
        .publishers
        .iter()
        .map(|p| PublisherStats { publisher: p.id, niche: p.niche, items: 0, visible: 0, clicks: 0, revenue: 0.0 })
        .collect();
    for &i in &pool {
        publisher_stats[world.item(i).publisher.index()].items += 1;
    }
    for r in log.records.iter().filter(|r| r.visible) {
        let s = &mut publisher_stats[world.item(r.item).publisher.index()];
        s.visible += 1;
        s.clicks += u64::from(r.clicked);
    }
    for s in &mut publisher_stats {
        s.revenue = s.clicks as f64 * world.publisher(s.publisher).revenue_per_click;
    }
    Ok(Warmup { state, log, publisher_stats })
}

/// Visible records with a non-empty history become training examples.
fn examples(log: &InteractionLog, from: usize) -> Vec<TrainingExample<'_>> {
    log.records[from..]
        .iter()
        .filter(|r| r.visible && r.history != NO_SNAPSHOT)
        .map(|r| TrainingExample { history: log.snapshot(r.history), item: r.item, clicked: r.clicked })
        .collect()
}

/// Trains the main model on warm-up traffic, starting from a seeded random
/// table over the whole catalog so items without traffic still have a row.
pub fn train_on_warmup(world: &World, warmup: &Warmup, config: &TrainConfig) -> Result<ItemEmbeddingTable, SimError> {
    config.validate()?;
    let initial = ItemEmbeddingTable::random(world.items.iter().map(|i| i.id), config.dim, config.init_scale, config.seed)?;
    Ok(train(&examples(&warmup.log, 0), config, Some(initial))?)
}

/// Continues training `table` on the records logged since `from`.
pub fn retrain_with_feedback(
    table: &ItemEmbeddingTable,
    log: &InteractionLog,
    from: usize,
    config: &TrainConfig,
) -> Result<ItemEmbeddingTable, SimError> {
    Ok(train(&examples(log, from), config, Some(table.clone()))?)
}

/// What one serving tick reads.
pub struct EpochContext<'a> {
    pub world: &'a World,
    pub config: &'a ExperimentConfig,
    pub table: &'a ItemEmbeddingTable,
    /// Visible impressions after which a (user, item) pair is never shown again.
    pub max_seen: u32,
    pub key: DrawKey,
    /// Store per-visit history snapshots, needed for retraining.
    pub snapshots: bool,
}

/// Serves one tick: every visiting user gets one slate from the main
/// recommender with their pending InvR items inserted, outcomes are drawn,
/// and the state and ledger are updated. A visit consumes the user's whole
/// pending list. Returns the number
/// of records appended to `log`.
pub fn run_epoch(
    ctx: &EpochContext<'_>,
    state: &mut PlatformState,
    pending: &mut [Vec<ItemId>],
    ledger: &mut ExposureLedger,
    log: &mut InteractionLog,
) -> Result<usize, SimError> {
    let world = ctx.world;
    let cfg = ctx.config;
    let tick = ctx.key.tick;
    let slate_size = cfg.slate.slate_size;
    let model = ClickModel::from_world(world);
    let n_items = world.items.len();
    let available: Vec<bool> = world.items.iter().map(|i| i.release <= tick).collect();
    let recommender =
        Recommender::new(ctx.table, &state.clicks, cfg.recommender.popularity_weight, available, slate_size)?;
    let rc = &cfg.recommender;
    let clock = |release: Tick| cfg.warmup.ticks + release;
    let cold_pool = cold_start_pool(
        world.items.iter().map(|i| (i.id, clock(i.release))),
        |i| state.impressions[i.index()],
        clock(tick),
        rc.cold_start_min_interactions,
        rc.cold_start_age_limit,
    );
    let who = visitors(world, ctx.key);
    let key = ctx.key;
    let coords = |u: UserId| [key.domain, u64::from(tick), u64::from(u.0)];

    let visits: Vec<Vec<InteractionRecord>> = {
        let state = &*state;
        let pending = &*pending;
        let ledger = &*ledger;
        who.par_iter()
            .map(|&u| {
                let history = state.histories[u.index()].items();
                let user_vec = (!history.is_empty()).then(|| {
                    let mut v = vec![0.0; ctx.table.dim()];
                    pool_into(history, ctx.table, &mut v).expect("every catalog item has a row");
                    v
                });
                let mut excluded = vec![false; n_items];
                for &(i, c) in state.seen.seen_by(u) {
                    if c >= ctx.max_seen {
                        excluded[i.index()] = true;
                    }
                }
                let base = recommender.recommend(
                    user_vec.as_deref(),
                    |i| excluded[i.index()],
                    &cold_pool,
                    mix(key.seed, Stream::Backfill, &coords(u)),
                );
                let mut base: Vec<Slot> = base.into_iter().map(|item| Slot { item, source: Source::Organic }).collect();
                if !cold_pool.is_empty() && unit_uniform(key.seed, Stream::ColdStart, &coords(u)) < rc.cold_start_rate {
                    let mut crng = stream_rng(key.seed, Stream::ColdStart, &[key.domain, u64::from(tick), u64::from(u.0), 1]);
                    let pick = cold_pool[crng.random_range(0..cold_pool.len())];
                    if !excluded[pick.index()] {
                        insert_cold_start(&mut base, pick, rc.cold_start_position, slate_size);
                    }
                }
                let queued = &pending[u.index()];
                let invr: Vec<ItemId> = queued
                    .iter()
                    .copied()
                    .filter(|&i| {
                        ledger.is_active(i) && recommender.is_available(i) && state.seen.count(u, i) < ctx.max_seen
                    })
                    .take(cfg.slate.invr_slots_max)
                    .collect();
                let slate = assemble_slate(&base, &invr, &cfg.slate);
                evaluate_slate(world, &model, key, u, &slate, slate_size)
            })
            .collect()
    };

    let start = log.len();
    for (&u, records) in who.iter().zip(visits) {
        pending[u.index()].clear();
        push_visit(log, &state.histories[u.index()], ctx.snapshots, records);
    }
    let records = &log.records[start..];
    state.apply(&who, records);
    ledger.record_impressions(records)?;
    Ok(records.len())
}
