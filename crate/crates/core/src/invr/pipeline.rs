use std::collections::BTreeSet;

use rayon::prelude::*;

use super::allocate::Allocator;
use super::{
    allocate_random_users, retrieve_candidates, select_treated_items, Assignment, CandidatePair, ExposureLedger,
    InvrConfig, InvrError, OrderingMode,
};
use crate::embedding::ItemEmbeddingTable;
use crate::ids::{ItemId, PublisherId, Tick, UserId};
use crate::interactions::ImpressionHistory;
use crate::mips::MipsIndex;
use crate::rng::{mix, Stream};

/// Everything one batch recomputation reads. Nothing here is mutated.
pub struct TickInput<'a> {
    pub tick: Tick,
    pub ledger: &'a ExposureLedger,
    /// Items that may be treated right now, with their publishers.
    pub catalog: &'a [(ItemId, PublisherId)],
    pub selected_publishers: &'a BTreeSet<PublisherId>,
    pub item_table: &'a ItemEmbeddingTable,
    /// Index over eligible users' embeddings; `None` when no user qualifies.
    pub user_index: Option<&'a MipsIndex<UserId>>,
    /// Pool for the random-targeting ablation.
    pub eligible_users: &'a [UserId],
    pub seen: &'a ImpressionHistory,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    pub treated: Vec<ItemId>,
    pub assignment: Assignment,
}

/// One InvR batch: select under-exposed items, retrieve and filter candidate
/// users, allocate under the per-user cap and order each user's list.
///
/// Pairs whose user has already hit the per-(user, item) impression limit
/// are dropped before allocation so the item's quota goes to users who can
/// still be shown it.
pub fn run_tick(input: &TickInput<'_>, config: &InvrConfig) -> Result<TickOutput, InvrError> {
    config.validate()?;
    let treated = select_treated_items(input.ledger, input.catalog.iter().copied(), input.selected_publishers);
    let seed = mix(config.seed, Stream::Allocation, &[u64::from(input.tick)]);
    let max_seen = config.max_impressions_per_user_item;
    let admissible = |i: ItemId, u: UserId| input.seen.count(u, i) < max_seen;

    if config.ordering_mode == OrderingMode::RandomUsers {
        let assignment = allocate_random_users(&treated, input.eligible_users, config, seed, admissible)?;
        return Ok(TickOutput { treated, assignment });
    }

    let mut alloc = Allocator::new(treated.iter().copied(), config.users_per_item, config.items_per_user_cap);
    if let Some(index) = input.user_index {
        let retrieve = |items: &[ItemId], factor: f64| -> Result<Vec<CandidatePair>, InvrError> {
            let lists = items
                .par_iter()
                .map(|&i| {
                    let emb = input.item_table.get(i).ok_or(InvrError::UnknownItem(i))?;
                    let mut c = retrieve_candidates(i, emb, index, config.users_per_item, factor)?;
                    c.retain(|p| admissible(p.item, p.user));
                    Ok(c)
                })
                .collect::<Result<Vec<_>, InvrError>>()?;
            Ok(lists.into_iter().flatten().collect())
        };
        let mut pairs = retrieve(&treated, config.overfetch_factor)?;
        alloc.offer(pairs.clone(), config.ordering_mode);
        alloc.complete(&pairs);
        if let Some(wider) = config.second_round_overfetch {
            let short: Vec<ItemId> = treated.iter().copied().filter(|&i| alloc.deficit(i) > 0).collect();
            if !short.is_empty() {
                let extra = retrieve(&short, wider)?;
                alloc.offer(extra.clone(), config.ordering_mode);
                pairs.extend(extra);
                alloc.complete(&pairs);
            }
        }
    }
    Ok(TickOutput { treated, assignment: alloc.finish(config.ordering_mode, seed) })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixture {
        ledger: ExposureLedger,
        catalog: Vec<(ItemId, PublisherId)>,
        selected: BTreeSet<PublisherId>,
        table: ItemEmbeddingTable,
        index: MipsIndex<UserId>,
        users: Vec<UserId>,
    }

    /// Items 0..4 (publisher 0, selected) and 4..6 (publisher 1). Ten users
    /// on the unit circle.
    fn fixture() -> Fixture {
        let items: Vec<ItemId> = (0..6).map(ItemId).collect();
        let table = ItemEmbeddingTable::from_rows(
            2,
            items.iter().map(|i| {
                let a = i.0 as f64 * 0.5;
                (*i, vec![a.cos(), a.sin()])
            }),
        )
        .unwrap();
        let users: Vec<UserId> = (0..10).map(UserId).collect();
        let index = MipsIndex::build(users.iter().map(|u| {
            let a = u.0 as f64 * 0.3;
            (*u, vec![a.cos(), a.sin()])
        }))
        .unwrap();
        Fixture {
            ledger: ExposureLedger::new(items.iter().copied(), 5),
            catalog: items.iter().map(|i| (*i, PublisherId(u32::from(i.0 >= 4)))).collect(),
            selected: BTreeSet::from([PublisherId(0)]),
            table,
            index,
            users,
        }
    }

    fn input<'a>(f: &'a Fixture, seen: &'a ImpressionHistory) -> TickInput<'a> {
        TickInput {
            tick: 0,
            ledger: &f.ledger,
            catalog: &f.catalog,
            selected_publishers: &f.selected,
            item_table: &f.table,
            user_index: Some(&f.index),
            eligible_users: &f.users,
            seen,
        }
    }

    #[test]
    fn every_mode_treats_only_selected_items() {
        let f = fixture();
        let seen = ImpressionHistory::new();
        for mode in OrderingMode::ALL {
            let cfg = InvrConfig { users_per_item: 2, items_per_user_cap: 1, ordering_mode: mode, ..Default::default() };
            let out = run_tick(&input(&f, &seen), &cfg).unwrap();
            assert_eq!(out.treated, (0..4).map(ItemId).collect::<Vec<_>>());
            out.assignment.check(2, 1).unwrap();
            assert_eq!(out.assignment.total_shortfall(), 0, "{mode}");
        }
    }

    #[test]
    fn exhausted_pairs_are_not_assigned() {
        let f = fixture();
        let mut seen = ImpressionHistory::new();
        for u in 0..10 {
            seen.record(UserId(u), ItemId(0));
            seen.record(UserId(u), ItemId(0));
        }
        for mode in OrderingMode::ALL {
            let cfg = InvrConfig { users_per_item: 2, ordering_mode: mode, ..Default::default() };
            let out = run_tick(&input(&f, &seen), &cfg).unwrap();
            assert_eq!(out.assignment.shortfalls[&ItemId(0)], 2, "{mode}");
        }
    }

    #[test]
    fn second_round_fills_shortfall() {
        let f = fixture();
        let seen = ImpressionHistory::new();
        let base = InvrConfig {
            users_per_item: 2,
            items_per_user_cap: 1,
            overfetch_factor: 1.0,
            ordering_mode: OrderingMode::InvrScore,
            ..Default::default()
        };
        let first = run_tick(&input(&f, &seen), &base).unwrap();
        assert!(first.assignment.total_shortfall() > 0);
        let widened = InvrConfig { second_round_overfetch: Some(5.0), ..base };
        let second = run_tick(&input(&f, &seen), &widened).unwrap();
        assert_eq!(second.assignment.total_shortfall(), 0);
        second.assignment.check(2, 1).unwrap();
    }

    #[test]
    fn no_user_index_means_full_shortfall() {
        let f = fixture();
        let seen = ImpressionHistory::new();
        let mut inp = input(&f, &seen);
        inp.user_index = None;
        let out = run_tick(&inp, &InvrConfig { users_per_item: 3, ..Default::default() }).unwrap();
        assert_eq!(out.assignment.total_shortfall(), 12);
    }

    #[test]
    fn tick_is_deterministic() {
        let f = fixture();
        let seen = ImpressionHistory::new();
        for mode in OrderingMode::ALL {
            let cfg = InvrConfig { users_per_item: 3, items_per_user_cap: 2, ordering_mode: mode, ..Default::default() };
            assert_eq!(run_tick(&input(&f, &seen), &cfg).unwrap(), run_tick(&input(&f, &seen), &cfg).unwrap());
        }
    }
}
