use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::flow::FlowGraph;
use super::{Assignment, CandidatePair, InvrConfig, InvrError, OrderingMode};
use crate::ids::{ItemId, UserId};
use crate::mips::{MipsError, MipsIndex};
use crate::rng::{stream_rng, Stream};

/// The top `ceil(k * overfetch_factor)` users for one item, clamped to the
/// index size, ranked 1.. in retrieval order.
pub fn retrieve_candidates(
    item: ItemId,
    item_embedding: &[f64],
    user_index: &MipsIndex<UserId>,
    users_per_item: usize,
    overfetch_factor: f64,
) -> Result<Vec<CandidatePair>, MipsError> {
    let want = (users_per_item as f64 * overfetch_factor).ceil() as usize;
    let top = user_index.top_n(item_embedding, want.min(user_index.len()))?;
    Ok(top
        .into_iter()
        .enumerate()
        .map(|(r, s)| CandidatePair { item, user: s.id, score: s.score, user_rank: r + 1 })
        .collect())
}

fn by_score(a: &CandidatePair, b: &CandidatePair) -> Ordering {
    b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)).then(a.user.cmp(&b.user))
}

fn by_rank(a: &CandidatePair, b: &CandidatePair) -> Ordering {
    a.user_rank.cmp(&b.user_rank).then_with(|| by_score(a, b))
}

/// Greedy single-pass allocation state; a second pass continues from the
/// loads left by the first.
#[derive(Debug)]
pub(crate) struct Allocator {
    users_per_item: usize,
    cap: usize,
    per_item: BTreeMap<ItemId, Vec<CandidatePair>>,
    load: HashMap<UserId, usize>,
    taken: HashSet<(ItemId, UserId)>,
}

impl Allocator {
    pub(crate) fn new<I: IntoIterator<Item = ItemId>>(items: I, users_per_item: usize, cap: usize) -> Self {
        Self {
            users_per_item,
            cap,
            per_item: items.into_iter().map(|i| (i, Vec::new())).collect(),
            load: HashMap::new(),
            taken: HashSet::new(),
        }
    }

    pub(crate) fn deficit(&self, item: ItemId) -> usize {
        self.per_item.get(&item).map_or(0, |v| self.users_per_item - v.len())
    }

    fn admit(&mut self, p: CandidatePair) -> bool {
        let Some(list) = self.per_item.get_mut(&p.item) else {
            return false;
        };
        let load = self.load.entry(p.user).or_insert(0);
        if list.len() >= self.users_per_item || *load >= self.cap || self.taken.contains(&(p.item, p.user)) {
            return false;
        }
        *load += 1;
        self.taken.insert((p.item, p.user));
        list.push(p);
        true
    }

    /// Sorts `pairs` by the mode's allocation key and assigns greedily.
    pub(crate) fn offer(&mut self, mut pairs: Vec<CandidatePair>, mode: OrderingMode) {
        match mode {
            OrderingMode::InvrUserRank => pairs.sort_by(by_rank),
            _ => pairs.sort_by(by_score),
        }
        for p in pairs {
            self.admit(p);
        }
    }

    /// Fills remaining deficits along augmenting paths through `pairs`
    /// (a max-flow seeded with the current assignment). An item may move
    /// from one user to another candidate user to free capacity; no item
    /// ever loses an assignment and no cap is exceeded.
    pub(crate) fn complete(&mut self, pairs: &[CandidatePair]) {
        let short: usize = self.per_item.keys().map(|&i| self.deficit(i)).sum();
        if short == 0 || pairs.is_empty() {
            return;
        }
        let items: Vec<ItemId> = self.per_item.keys().copied().collect();
        let item_node: HashMap<ItemId, usize> = items.iter().enumerate().map(|(n, i)| (*i, n + 1)).collect();
        let mut users: Vec<UserId> = pairs.iter().map(|p| p.user).chain(self.load.keys().copied()).collect();
        users.sort_unstable();
        users.dedup();
        let user_node: HashMap<UserId, usize> =
            users.iter().enumerate().map(|(n, u)| (*u, n + 1 + items.len())).collect();
        let (source, sink) = (0, items.len() + users.len() + 1);
        let mut g = FlowGraph::new(sink + 1);
        for (&i, list) in &self.per_item {
            g.add_edge(source, item_node[&i], self.users_per_item as i64, list.len() as i64);
        }
        let mut pair_edges: Vec<(usize, CandidatePair)> = Vec::new();
        let mut seen: HashSet<(ItemId, UserId)> = HashSet::new();
        let held = self.per_item.values().flatten().copied();
        for p in held.chain(pairs.iter().copied()) {
            let Some(&inode) = item_node.get(&p.item) else { continue };
            if !seen.insert((p.item, p.user)) {
                continue;
            }
            let flow = i64::from(self.taken.contains(&(p.item, p.user)));
            pair_edges.push((g.add_edge(inode, user_node[&p.user], 1, flow), p));
        }
        for &u in &users {
            let load = self.load.get(&u).copied().unwrap_or(0);
            g.add_edge(user_node[&u], sink, self.cap as i64, load as i64);
        }
        if g.max_flow(source, sink) == 0 {
            return;
        }
        let mut per_item: BTreeMap<ItemId, Vec<CandidatePair>> = items.iter().map(|i| (*i, Vec::new())).collect();
        self.load.clear();
        self.taken.clear();
        for (e, p) in pair_edges {
            if g.flow(e) == 1 {
                per_item.get_mut(&p.item).expect("known item").push(p);
                *self.load.entry(p.user).or_insert(0) += 1;
                self.taken.insert((p.item, p.user));
            }
        }
        self.per_item = per_item;
    }

    pub(crate) fn finish(self, mode: OrderingMode, seed: u64) -> Assignment {
        let mut per_user: BTreeMap<UserId, Vec<CandidatePair>> = BTreeMap::new();
        let mut per_item = BTreeMap::new();
        let mut shortfalls = BTreeMap::new();
        for (item, list) in self.per_item {
            shortfalls.insert(item, self.users_per_item - list.len());
            per_item.insert(item, list.iter().map(|p| p.user).collect::<BTreeSet<_>>());
            for p in list {
                per_user.entry(p.user).or_default().push(p);
            }
        }
        for (user, list) in per_user.iter_mut() {
            *list = order_items_for_user(*user, list, mode, seed);
        }
        Assignment { per_user, per_item, shortfalls }
    }
}

/// Transposes item -> users candidate lists into per-user item lists.
///
/// All pairs are sorted once (score descending for the score-keyed modes,
/// user rank ascending for `INVR_USER_RANK`) and assigned in a single pass:
/// a pair is taken iff its item still needs users and its user is below the
/// cap. Whatever the pass leaves unfilled is then completed along
/// augmenting paths over the same candidate pairs, so an item falls short
/// only when no re-routing of candidates can serve it; that deficit is
/// recorded in `shortfalls`.
///
/// `RANDOM_USERS` does not use retrieval; see [`allocate_random_users`].
pub fn transpose_and_allocate(
    candidates: &BTreeMap<ItemId, Vec<CandidatePair>>,
    config: &InvrConfig,
) -> Result<Assignment, InvrError> {
    config.validate()?;
    if config.ordering_mode == OrderingMode::RandomUsers {
        return Err(InvrError::InvalidConfig(
            "RANDOM_USERS ignores retrieval; allocate with allocate_random_users".into(),
        ));
    }
    let mut alloc = Allocator::new(candidates.keys().copied(), config.users_per_item, config.items_per_user_cap);
    let pairs: Vec<CandidatePair> = candidates.values().flatten().copied().collect();
    alloc.offer(pairs.clone(), config.ordering_mode);
    alloc.complete(&pairs);
    Ok(alloc.finish(config.ordering_mode, config.seed))
}

/// The random-targeting ablation: each item gets K distinct users drawn
/// uniformly from `users`, never pushing a user past the cap and never
/// picking a user for whom `admissible(item, user)` is false.
///
/// Draws are rejection-sampled; when rejection keeps failing (the pool is
/// nearly exhausted) the remaining slots are sampled without replacement
/// from the users still admissible.
pub fn allocate_random_users<F>(
    items: &[ItemId],
    users: &[UserId],
    config: &InvrConfig,
    seed: u64,
    admissible: F,
) -> Result<Assignment, InvrError>
where
    F: Fn(ItemId, UserId) -> bool,
{
    config.validate()?;
    let k = config.users_per_item;
    let cap = config.items_per_user_cap;
    let mut pool = users.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let mut items = items.to_vec();
    items.sort_unstable();
    items.dedup();

    let mut alloc = Allocator::new(items.iter().copied(), k, cap);
    let mut rng = stream_rng(seed, Stream::Allocation, &[]);
    for &item in &items {
        let mut chosen: Vec<UserId> = Vec::with_capacity(k);
        let ok = |u: UserId, chosen: &[UserId], alloc: &Allocator| {
            alloc.load.get(&u).copied().unwrap_or(0) < cap && !chosen.contains(&u) && admissible(item, u)
        };
        let mut attempts = 0;
        while chosen.len() < k && attempts < 8 * k && !pool.is_empty() {
            attempts += 1;
            let u = pool[rng.random_range(0..pool.len())];
            if ok(u, &chosen, &alloc) {
                chosen.push(u);
                alloc.admit(CandidatePair { item, user: u, score: 0.0, user_rank: chosen.len() });
            }
        }
        if chosen.len() < k {
            let rest: Vec<UserId> = pool.iter().copied().filter(|&u| ok(u, &chosen, &alloc)).collect();
            let need = (k - chosen.len()).min(rest.len());
            for idx in sample(&mut rng, rest.len(), need).into_iter() {
                chosen.push(rest[idx]);
                alloc.admit(CandidatePair { item, user: rest[idx], score: 0.0, user_rank: chosen.len() });
            }
        }
    }
    Ok(alloc.finish(OrderingMode::RandomUsers, seed))
}

/// Presentation order of one user's assigned items.
///
/// Score mode sorts by score, user-rank mode by the user's rank for each
/// item (ignoring score), and the random modes apply a shuffle seeded by
/// `(seed, user)`. Ties fall back to item id.
pub fn order_items_for_user(
    user: UserId,
    pairs: &[CandidatePair],
    mode: OrderingMode,
    seed: u64,
) -> Vec<CandidatePair> {
    let mut out = pairs.to_vec();
    match mode {
        OrderingMode::InvrScore => {
            out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item.cmp(&b.item)));
        }
        OrderingMode::InvrUserRank => {
            out.sort_by(|a, b| a.user_rank.cmp(&b.user_rank).then(a.item.cmp(&b.item)));
        }
        OrderingMode::InvrRandom | OrderingMode::RandomUsers => {
            out.sort_by_key(|p| p.item);
            let mut rng = stream_rng(seed, Stream::Ordering, &[u64::from(user.0)]);
            out.shuffle(&mut rng);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(item: u32, user: u32, score: f64, rank: usize) -> CandidatePair {
        CandidatePair { item: ItemId(item), user: UserId(user), score, user_rank: rank }
    }

    fn cfg(k: usize, c: usize, mode: OrderingMode) -> InvrConfig {
        InvrConfig { users_per_item: k, items_per_user_cap: c, ordering_mode: mode, ..InvrConfig::default() }
    }

    fn group(pairs: Vec<CandidatePair>) -> BTreeMap<ItemId, Vec<CandidatePair>> {
        let mut m: BTreeMap<ItemId, Vec<CandidatePair>> = BTreeMap::new();
        for p in pairs {
            m.entry(p.item).or_default().push(p);
        }
        m
    }

    fn users_of(a: &Assignment, item: u32) -> Vec<u32> {
        a.per_item[&ItemId(item)].iter().map(|u| u.0).collect()
    }

    #[test]
    fn hand_simulated_two_item_pass() {
        // X = 0, Y = 1. Sorted: (X,u1,.9) (Y,u1,.85) (X,u2,.8) (X,u3,.7) (Y,u3,.6) (Y,u4,.5).
        // (Y,u1) is skipped because u1 is full; (X,u3) because X is full.
        let c = group(vec![
            pair(0, 1, 0.9, 1),
            pair(0, 2, 0.8, 2),
            pair(0, 3, 0.7, 3),
            pair(1, 1, 0.85, 1),
            pair(1, 3, 0.6, 2),
            pair(1, 4, 0.5, 3),
        ]);
        let a = transpose_and_allocate(&c, &cfg(2, 1, OrderingMode::InvrScore)).unwrap();
        assert_eq!(users_of(&a, 0), vec![1, 2]);
        assert_eq!(users_of(&a, 1), vec![3, 4]);
        assert_eq!(a.total_shortfall(), 0);
        a.check(2, 1).unwrap();
    }

    #[test]
    fn deficit_is_recorded() {
        let c = group(vec![pair(0, 1, 0.9, 1), pair(0, 2, 0.8, 2)]);
        let a = transpose_and_allocate(&c, &cfg(3, 1, OrderingMode::InvrScore)).unwrap();
        assert_eq!(a.shortfalls[&ItemId(0)], 1);
        a.check(3, 1).unwrap();
    }

    #[test]
    fn rank_key_gives_every_item_its_best_user_first() {
        // User 2 is item 1's best user but item 0's second best, and item 0
        // scores higher overall. K = 2, C = 1.
        let c = group(vec![pair(0, 1, 0.95, 1), pair(0, 2, 0.94, 2), pair(1, 2, 0.5, 1), pair(1, 3, 0.4, 2)]);
        let score = transpose_and_allocate(&c, &cfg(2, 1, OrderingMode::InvrScore)).unwrap();
        assert_eq!((users_of(&score, 0), users_of(&score, 1)), (vec![1, 2], vec![3]));
        let rank = transpose_and_allocate(&c, &cfg(2, 1, OrderingMode::InvrUserRank)).unwrap();
        assert_eq!((users_of(&rank, 0), users_of(&rank, 1)), (vec![1], vec![2, 3]));
        assert_eq!(rank.shortfalls[&ItemId(0)], 1);
    }

    #[test]
    fn random_users_mode_rejected_by_keyed_allocation() {
        let c = group(vec![pair(0, 1, 0.9, 1)]);
        assert!(matches!(
            transpose_and_allocate(&c, &cfg(1, 1, OrderingMode::RandomUsers)),
            Err(InvrError::InvalidConfig(_))
        ));
    }

    #[test]
    fn ordering_examples() {
        let pairs = [pair(10, 0, 0.9, 40), pair(11, 0, 0.7, 2)];
        let items = |v: Vec<CandidatePair>| v.iter().map(|p| p.item.0).collect::<Vec<_>>();
        assert_eq!(items(order_items_for_user(UserId(0), &pairs, OrderingMode::InvrScore, 0)), vec![10, 11]);
        assert_eq!(items(order_items_for_user(UserId(0), &pairs, OrderingMode::InvrUserRank, 0)), vec![11, 10]);
        for mode in OrderingMode::ALL {
            assert_eq!(items(order_items_for_user(UserId(0), &pairs[..1], mode, 3)), vec![10]);
        }
        let tied = [pair(7, 0, 0.5, 3), pair(4, 0, 0.5, 3), pair(5, 0, 0.5, 3)];
        assert_eq!(items(order_items_for_user(UserId(0), &tied, OrderingMode::InvrScore, 0)), vec![4, 5, 7]);
        assert_eq!(items(order_items_for_user(UserId(0), &tied, OrderingMode::InvrUserRank, 0)), vec![4, 5, 7]);
        let a = order_items_for_user(UserId(3), &tied, OrderingMode::InvrRandom, 9);
        let b = order_items_for_user(UserId(3), &tied, OrderingMode::InvrRandom, 9);
        assert_eq!(a, b);
    }

    #[test]
    fn random_allocation_respects_cap_and_admissibility() {
        let items: Vec<ItemId> = (0..20).map(ItemId).collect();
        let users: Vec<UserId> = (0..30).map(UserId).collect();
        let c = cfg(4, 3, OrderingMode::RandomUsers);
        let a = allocate_random_users(&items, &users, &c, 1, |i, u| (i.0 + u.0) % 7 != 0).unwrap();
        a.check(4, 3).unwrap();
        assert_eq!(a.total_shortfall(), 0);
        for (i, us) in &a.per_item {
            assert!(us.iter().all(|u| (i.0 + u.0) % 7 != 0));
        }
        // 30 users * cap 3 = 90 slots < 20 * 5 = 100 demanded.
        let c = cfg(5, 3, OrderingMode::RandomUsers);
        let a = allocate_random_users(&items, &users, &c, 1, |_, _| true).unwrap();
        assert_eq!(a.total_shortfall(), 10);
        a.check(5, 3).unwrap();
        let b = allocate_random_users(&items, &users, &c, 1, |_, _| true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn retrieval_clamps_and_ranks() {
        let idx = MipsIndex::build(vec![
            (UserId(0), vec![1.0, 0.0, 0.0]),
            (UserId(1), vec![0.0, 1.0, 0.0]),
            (UserId(2), vec![0.0, 0.0, 1.0]),
        ])
        .unwrap();
        let c = retrieve_candidates(ItemId(0), &[0.0, 1.0, 0.0], &idx, 2, 2.0).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.iter().map(|p| p.user_rank).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(c[0].user, UserId(1));
        let c = retrieve_candidates(ItemId(0), &[0.2, 0.1, 0.9], &idx, 1, 1.0).unwrap();
        assert_eq!((c.len(), c[0].user), (1, UserId(2)));
    }

    /// Random instance: `n_items` items, each with candidates drawn from `n_users`.
    fn random_candidates(seed: u64, n_items: u32, n_users: u32, per_item: usize) -> BTreeMap<ItemId, Vec<CandidatePair>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = BTreeMap::new();
        for i in 0..n_items {
            let mut users: Vec<u32> = (0..n_users).collect();
            users.shuffle(&mut rng);
            let mut scored: Vec<(f64, u32)> =
                users.into_iter().take(per_item).map(|u| ((rng.random_range(0..20) as f64) / 10.0, u)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let pairs = scored.into_iter().enumerate().map(|(r, (s, u))| pair(i, u, s, r + 1)).collect();
            out.insert(ItemId(i), pairs);
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn caps_and_quotas_hold(seed in 0u64..10_000, n_items in 1u32..15, n_users in 1u32..25,
                                k in 1usize..6, c in 1usize..4, rank_mode in any::<bool>()) {
            let per_item = (n_users as usize).min(k * 2);
            let cands = random_candidates(seed, n_items, n_users, per_item);
            let mode = if rank_mode { OrderingMode::InvrUserRank } else { OrderingMode::InvrScore };
            let a = transpose_and_allocate(&cands, &cfg(k, c, mode)).unwrap();
            prop_assert!(a.check(k, c).is_ok(), "{:?}", a.check(k, c));
        }

        #[test]
        fn exhaustive_candidates_with_capacity_never_fall_short(seed in 0u64..10_000, n_items in 1u32..10,
                                                                k in 1usize..5, c in 1usize..4) {
            let n_users = ((n_items as usize * k).div_ceil(c)).max(k) as u32;
            let cands = random_candidates(seed, n_items, n_users, n_users as usize);
            for mode in [OrderingMode::InvrScore, OrderingMode::InvrUserRank] {
                let a = transpose_and_allocate(&cands, &cfg(k, c, mode)).unwrap();
                prop_assert_eq!(a.total_shortfall(), 0);
            }
        }

        #[test]
        fn uncapped_allocation_is_per_item_top_k(seed in 0u64..10_000, n_items in 1u32..10, k in 1usize..5) {
            let cands = random_candidates(seed, n_items, 12, 8);
            let a = transpose_and_allocate(&cands, &cfg(k, n_items as usize, OrderingMode::InvrScore)).unwrap();
            for (item, list) in &cands {
                let expect: BTreeSet<UserId> = list.iter().take(k).map(|p| p.user).collect();
                prop_assert_eq!(&a.per_item[item], &expect);
            }
        }

        #[test]
        fn cap_one_spreads_over_distinct_users(seed in 0u64..10_000, n_items in 1u32..8, k in 1usize..4) {
            let n_users = 10u32;
            let cands = random_candidates(seed, n_items, n_users, n_users as usize);
            let a = transpose_and_allocate(&cands, &cfg(k, 1, OrderingMode::InvrScore)).unwrap();
            let distinct: BTreeSet<UserId> = a.per_item.values().flatten().copied().collect();
            prop_assert_eq!(distinct.len(), a.total_assigned());
            prop_assert_eq!(a.total_assigned(), (n_items as usize * k).min(n_users as usize));
        }
    }
}
