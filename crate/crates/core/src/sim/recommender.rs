//! The popularity-biased main recommender the simulated platform runs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::slate::Slot;
use super::SimError;
use crate::embedding::ItemEmbeddingTable;
use crate::ids::{ItemId, Tick};
use crate::interactions::Source;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    /// Weight of `log(1 + clicks)` in the score.
    pub popularity_weight: f64,
    /// Clicked items kept per user history.
    pub history_max_len: usize,
    /// Probability that a visit gets one cold-start item.
    pub cold_start_rate: f64,
    /// 1-based slate position of the cold-start item.
    pub cold_start_position: usize,
    pub cold_start_min_interactions: u64,
    pub cold_start_age_limit: Tick,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            popularity_weight: 0.1,
            history_max_len: 50,
            cold_start_rate: 0.1,
            cold_start_position: 4,
            cold_start_min_interactions: 20,
            cold_start_age_limit: 10,
        }
    }
}

impl RecommenderConfig {
    pub fn validate(&self, slate_size: usize) -> Result<(), SimError> {
        if !(self.popularity_weight.is_finite() && self.popularity_weight >= 0.0) {
            return Err(SimError::InvalidConfig("recommender: popularity_weight must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.cold_start_rate) {
            return Err(SimError::InvalidConfig("recommender: cold_start_rate must lie in [0, 1]".into()));
        }
        if self.cold_start_position == 0 || self.cold_start_position > slate_size {
            return Err(SimError::InvalidConfig("recommender: cold_start_position must fall inside the slate".into()));
        }
        if self.history_max_len == 0 {
            return Err(SimError::InvalidConfig("recommender: history_max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Scoring state for one tick: the learned table plus per-item popularity
/// and availability. Table row `k` must hold item `k`.
pub struct Recommender<'a> {
    table: &'a ItemEmbeddingTable,
    popularity: Vec<f64>,
    available: Vec<bool>,
    slate_size: usize,
}

impl<'a> Recommender<'a> {
    pub fn new(
        table: &'a ItemEmbeddingTable,
        clicks: &[u64],
        popularity_weight: f64,
        available: Vec<bool>,
        slate_size: usize,
    ) -> Result<Self, SimError> {
        let dense = table.ids().iter().enumerate().all(|(k, id)| id.index() == k);
        if !dense || table.len() != clicks.len() || available.len() != clicks.len() {
            return Err(SimError::InvalidConfig("embedding table must cover the catalog with dense ids".into()));
        }
        let popularity = clicks.iter().map(|&c| popularity_weight * (c as f64).ln_1p()).collect();
        Ok(Self { table, popularity, available, slate_size })
    }

    pub fn popularity(&self, item: ItemId) -> f64 {
        self.popularity[item.index()]
    }

    pub fn is_available(&self, item: ItemId) -> bool {
        self.available[item.index()]
    }

    /// Top `slate_size` available, non-excluded items by
    /// `dot(user, item) + popularity`, ties to the lower id. Without a user
    /// embedding only popularity counts. Short lists are backfilled from
    /// `cold_pool` and then from a seeded shuffle of the remaining available items.
    pub fn recommend<F>(&self, user: Option<&[f64]>, excluded: F, cold_pool: &[ItemId], backfill_seed: u64) -> Vec<ItemId>
    where
        F: Fn(ItemId) -> bool,
    {
        let dim = self.table.dim();
        let matrix = self.table.matrix();
        let mut scored: Vec<(f64, u32)> = Vec::with_capacity(self.popularity.len());
        for (k, &pop) in self.popularity.iter().enumerate() {
            let id = ItemId(k as u32);
            if !self.available[k] || excluded(id) {
                continue;
            }
            let s = match user {
                Some(u) => u.iter().zip(&matrix[k * dim..(k + 1) * dim]).map(|(a, b)| a * b).sum::<f64>() + pop,
                None => pop,
            };
            scored.push((s + 0.0, k as u32));
        }
        let order = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if scored.len() > self.slate_size {
            scored.select_nth_unstable_by(self.slate_size - 1, order);
            scored.truncate(self.slate_size);
        }
        scored.sort_unstable_by(order);
        let mut slate: Vec<ItemId> = scored.into_iter().map(|(_, k)| ItemId(k)).collect();
        if slate.len() < self.slate_size {
            for &i in cold_pool {
                if slate.len() == self.slate_size {
                    break;
                }
                if self.is_available(i) && !slate.contains(&i) {
                    slate.push(i);
                }
            }
        }
        if slate.len() < self.slate_size {
            let mut rest: Vec<ItemId> =
                (0..self.available.len() as u32).map(ItemId).filter(|&i| self.is_available(i) && !slate.contains(&i)).collect();
            rest.shuffle(&mut ChaCha8Rng::seed_from_u64(backfill_seed));
            slate.extend(rest.into_iter().take(self.slate_size - slate.len()));
        }
        slate
    }
}

/// Puts `item` at 1-based `position` tagged as cold start, dropping any
/// other copy of it and truncating to the slate size.
pub fn insert_cold_start(slate: &mut Vec<Slot>, item: ItemId, position: usize, slate_size: usize) {
    slate.retain(|s| s.item != item);
    let at = (position - 1).min(slate.len());
    slate.insert(at, Slot { item, source: Source::ColdStart });
    slate.truncate(slate_size);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[[f64; 2]]) -> ItemEmbeddingTable {
        ItemEmbeddingTable::from_rows(2, rows.iter().enumerate().map(|(k, r)| (ItemId(k as u32), r.to_vec()))).unwrap()
    }

    fn ring(n: usize) -> ItemEmbeddingTable {
        let rows: Vec<[f64; 2]> = (0..n).map(|k| [(k as f64 * 0.37).cos(), (k as f64 * 0.37).sin()]).collect();
        table(&rows)
    }

    #[test]
    fn huge_popularity_weight_ranks_by_clicks() {
        let t = ring(40);
        let clicks: Vec<u64> = (0..40).map(|k| (k * 7 % 40) as u64 * 10).collect();
        let r = Recommender::new(&t, &clicks, 1e9, vec![true; 40], 20).unwrap();
        let got = r.recommend(Some(&[1.0, 0.0]), |_| false, &[], 0);
        let mut want: Vec<u32> = (0..40).collect();
        want.sort_by_key(|&k| (std::cmp::Reverse(clicks[k as usize]), k));
        assert_eq!(got, want[..20].iter().map(|&k| ItemId(k)).collect::<Vec<_>>());
    }

    #[test]
    fn zero_weight_puts_the_matching_item_first() {
        let t = ring(40);
        let target = t.get(ItemId(17)).unwrap().to_vec();
        let r = Recommender::new(&t, &[5; 40], 0.0, vec![true; 40], 20).unwrap();
        assert_eq!(r.recommend(Some(&target), |_| false, &[], 0)[0], ItemId(17));
        let excluded = r.recommend(Some(&target), |i| i == ItemId(17), &[], 0);
        assert!(!excluded.contains(&ItemId(17)));
        // Oracle: argmax of the dot product over the remaining items.
        let best = (0..40u32)
            .filter(|&k| k != 17)
            .max_by(|&a, &b| {
                let da: f64 = t.get(ItemId(a)).unwrap().iter().zip(&target).map(|(x, y)| x * y).sum();
                let db: f64 = t.get(ItemId(b)).unwrap().iter().zip(&target).map(|(x, y)| x * y).sum();
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        assert_eq!(excluded[0], ItemId(best));
    }

    #[test]
    fn fully_excluded_backfills_cold_pool_then_random() {
        let t = ring(40);
        let r = Recommender::new(&t, &[0; 40], 1.0, vec![true; 40], 20).unwrap();
        let pool = [ItemId(30), ItemId(3)];
        let s = r.recommend(None, |_| true, &pool, 9);
        assert_eq!(s.len(), 20);
        assert_eq!(&s[..2], &pool);
        let mut uniq = s.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 20);
        assert_eq!(s, r.recommend(None, |_| true, &pool, 9));
    }

    #[test]
    fn unavailable_items_never_appear() {
        let t = ring(40);
        let avail: Vec<bool> = (0..40).map(|k| k % 2 == 0).collect();
        let r = Recommender::new(&t, &[0; 40], 1.0, avail, 20).unwrap();
        assert!(r.recommend(Some(&[0.0, 1.0]), |_| false, &[], 0).iter().all(|i| i.0 % 2 == 0));
    }

    #[test]
    fn cold_start_insert_replaces_duplicates() {
        let mut s: Vec<Slot> = (0..20).map(|k| Slot { item: ItemId(k), source: Source::Organic }).collect();
        insert_cold_start(&mut s, ItemId(7), 4, 20);
        assert_eq!(s.len(), 20);
        assert_eq!(s[3], Slot { item: ItemId(7), source: Source::ColdStart });
        assert_eq!(s.iter().filter(|x| x.item == ItemId(7)).count(), 1);
        insert_cold_start(&mut s, ItemId(99), 4, 20);
        assert_eq!(s.len(), 20);
        assert_eq!(s[19].item, ItemId(18));
    }
}
