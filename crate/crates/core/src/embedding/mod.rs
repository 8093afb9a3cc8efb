//! Two-tower embedding model with an average-pooled user tower.
//!
//! Items own ID-based vectors. A user is represented by the mean of the
//! vectors of the items in their recent history, so two users with the same
//! truncated history are indistinguishable regardless of how active they are.

mod table;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::ItemEmbeddingTable;
pub use train::{example_gradient, example_loss, mean_loss, train};

use crate::ids::{ItemId, UserId};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("user history is empty")]
    EmptyHistory,
    #[error("item {0} is not in the embedding table")]
    UnknownItem(ItemId),
    #[error("item {0} appears twice")]
    DuplicateItem(ItemId),
    #[error("item {0} has a non-finite coordinate")]
    NonFinite(ItemId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("malformed embedding table at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub epochs: u32,
    pub learning_rate: f64,
    pub optimizer_epsilon: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            batch_size: 128,
            epochs: 10,
            learning_rate: 0.1,
            optimizer_epsilon: 1e-8,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.optimizer_epsilon > 0.0 && self.optimizer_epsilon.is_finite()) {
            return bad("optimizer_epsilon must be > 0");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be > 0");
        }
        Ok(())
    }
}

/// Recent interactions of one user, most recent last, capped at `max_len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserHistory {
    pub user: UserId,
    items: Vec<ItemId>,
    max_len: usize,
}

impl UserHistory {
    pub fn new(user: UserId, max_len: usize) -> Self {
        assert!(max_len >= 1, "history max_len must be >= 1");
        Self { user, items: Vec::new(), max_len }
    }

    /// Keeps only the `max_len` most recent of `items`.
    pub fn from_items(user: UserId, items: Vec<ItemId>, max_len: usize) -> Self {
        let mut h = Self::new(user, max_len);
        let skip = items.len().saturating_sub(max_len);
        h.items = items.into_iter().skip(skip).collect();
        h
    }

    pub fn push(&mut self, item: ItemId) {
        if self.items.len() == self.max_len {
            self.items.remove(0);
        }
        self.items.push(item);
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }
}

/// One implicit-feedback training example. `history` is the user's history
/// as it was when the item was shown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingExample<'a> {
    pub history: &'a [ItemId],
    pub item: ItemId,
    /// `true` for a click, `false` for a visible impression without a click.
    pub clicked: bool,
}

/// Mean of the history items' vectors. Duplicates count once per occurrence.
pub fn user_embedding(history: &[ItemId], table: &ItemEmbeddingTable) -> Result<Vec<f64>, EmbeddingError> {
    let mut out = vec![0.0; table.dim()];
    pool_into(history, table, &mut out)?;
    Ok(out)
}

/// Writes the pooled user vector into `out` (length `dim`).
pub fn pool_into(history: &[ItemId], table: &ItemEmbeddingTable, out: &mut [f64]) -> Result<(), EmbeddingError> {
    if history.is_empty() {
        return Err(EmbeddingError::EmptyHistory);
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    for &item in history {
        let v = table.get(item).ok_or(EmbeddingError::UnknownItem(item))?;
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let inv = 1.0 / history.len() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserEmbeddings {
    pub vectors: BTreeMap<UserId, Vec<f64>>,
    /// Users left out because no history item is in the table.
    pub skipped: Vec<UserId>,
}

/// Embeds every user from their history, dropping unknown items first.
pub fn build_user_embeddings<'a, I>(users: I, table: &ItemEmbeddingTable) -> UserEmbeddings
where
    I: IntoIterator<Item = &'a UserHistory>,
{
    let mut out = UserEmbeddings::default();
    let mut known = Vec::new();
    for h in users {
        known.clear();
        known.extend(h.items().iter().copied().filter(|i| table.contains(*i)));
        match user_embedding(&known, table) {
            Ok(v) => {
                out.vectors.insert(h.user, v);
            }
            Err(_) => out.skipped.push(h.user),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(u32, &[f64])]) -> ItemEmbeddingTable {
        let dim = rows[0].1.len();
        ItemEmbeddingTable::from_rows(dim, rows.iter().map(|(id, v)| (ItemId(*id), v.to_vec()))).unwrap()
    }

    #[test]
    fn single_item_mean_is_identity() {
        let t = table(&[(1, &[0.2, -0.4])]);
        assert_eq!(user_embedding(&[ItemId(1)], &t).unwrap(), vec![0.2, -0.4]);
    }

    #[test]
    fn two_item_mean() {
        let t = table(&[(1, &[1.0, 0.0]), (2, &[0.0, 1.0])]);
        assert_eq!(user_embedding(&[ItemId(1), ItemId(2)], &t).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn duplicates_count_per_occurrence() {
        let t = table(&[(1, &[3.0, 0.0]), (2, &[0.0, 3.0])]);
        let u = user_embedding(&[ItemId(1), ItemId(1), ItemId(2)], &t).unwrap();
        assert_eq!(u, vec![2.0, 1.0]);
    }

    #[test]
    fn pooling_errors() {
        let t = table(&[(1, &[1.0])]);
        assert!(matches!(user_embedding(&[], &t), Err(EmbeddingError::EmptyHistory)));
        assert!(matches!(
            user_embedding(&[ItemId(1), ItemId(9)], &t),
            Err(EmbeddingError::UnknownItem(ItemId(9)))
        ));
    }

    #[test]
    fn history_truncates_to_most_recent() {
        let mut h = UserHistory::new(UserId(0), 3);
        for i in 0..5 {
            h.push(ItemId(i));
        }
        assert_eq!(h.items(), &[ItemId(2), ItemId(3), ItemId(4)]);
        let h2 = UserHistory::from_items(UserId(0), (0..5).map(ItemId).collect(), 3);
        assert_eq!(h, h2);
    }

    #[test]
    fn build_user_embeddings_reports_skips() {
        let t = table(&[(1, &[1.0, 0.0]), (2, &[0.0, 1.0])]);
        let users = vec![
            UserHistory::from_items(UserId(0), vec![ItemId(1), ItemId(2)], 10),
            UserHistory::from_items(UserId(1), vec![ItemId(2)], 10),
            UserHistory::from_items(UserId(2), vec![ItemId(7), ItemId(8)], 10),
            UserHistory::from_items(UserId(3), vec![ItemId(7), ItemId(1)], 10),
        ];
        let e = build_user_embeddings(&users, &t);
        assert_eq!(e.vectors.len(), 3);
        assert_eq!(e.skipped, vec![UserId(2)]);
        assert_eq!(e.vectors[&UserId(0)], user_embedding(&[ItemId(1), ItemId(2)], &t).unwrap());
        assert_eq!(e.vectors[&UserId(3)], vec![1.0, 0.0]);
    }

    #[test]
    fn activity_does_not_change_embedding() {
        // A heavy user whose truncated history matches a light user's.
        let t = ItemEmbeddingTable::random((0..30).map(ItemId), 4, 0.5, 1).unwrap();
        let heavy = UserHistory::from_items(UserId(0), (0..30).map(ItemId).collect(), 5);
        let light = UserHistory::from_items(UserId(1), (25..30).map(ItemId).collect(), 5);
        let e = build_user_embeddings([&heavy, &light], &t);
        assert_eq!(e.vectors[&UserId(0)], e.vectors[&UserId(1)]);
    }
}
