use crate::ids::{ItemId, Tick, UserId};
use crate::interactions::ImpressionHistory;

/// Drops items the user has already seen visibly `max_impressions` times.
pub fn dedup_filter(user: UserId, items: &[ItemId], seen: &ImpressionHistory, max_impressions: u32) -> Vec<ItemId> {
    items.iter().copied().filter(|&i| seen.count(user, i) < max_impressions).collect()
}

/// New items that still need random exposure: released, younger than
/// `age_limit` ticks, and with fewer than `min_interactions` interactions.
pub fn cold_start_pool<I, F>(catalog: I, interactions: F, now: Tick, min_interactions: u64, age_limit: Tick) -> Vec<ItemId>
where
    I: IntoIterator<Item = (ItemId, Tick)>,
    F: Fn(ItemId) -> u64,
{
    let mut out: Vec<ItemId> = catalog
        .into_iter()
        .filter(|&(i, released)| {
            released <= now && now - released < age_limit && interactions(i) < min_interactions
        })
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    out
}
