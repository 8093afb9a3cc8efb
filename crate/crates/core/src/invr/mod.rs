//! Inverse retrieval: for every under-exposed item of a selected publisher,
//! find the users it suits best, then hand each user a short, capped list.
//!
//! One batch ("tick") runs select -> retrieve -> allocate -> order and
//! publishes an immutable [`Assignment`]. The [`ExposureLedger`] is updated
//! between ticks and switches an item off once it reaches the minimum
//! exposure.

mod allocate;
mod filters;
mod flow;
mod ledger;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use allocate::{allocate_random_users, order_items_for_user, retrieve_candidates, transpose_and_allocate};
pub use filters::{cold_start_pool, dedup_filter};
pub use ledger::{select_treated_items, ExposureLedger, ItemExposure};
pub use pipeline::{run_tick, TickInput};

use crate::ids::{ItemId, Tick, UserId};
use crate::mips::MipsError;

#[derive(Debug, Error)]
pub enum InvrError {
    #[error("invalid InvR config: {0}")]
    InvalidConfig(String),
    #[error("item {0} is unknown")]
    UnknownItem(ItemId),
    #[error(transparent)]
    Mips(#[from] MipsError),
}

/// How users are chosen for an item and how a user's items are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderingMode {
    /// Ablation: users drawn uniformly at random, presentation shuffled.
    RandomUsers,
    /// Model-selected users, presentation shuffled.
    InvrRandom,
    /// Model-selected users, presented by score.
    InvrScore,
    /// Model-selected users, presented by the user's rank for the item.
    InvrUserRank,
}

impl OrderingMode {
    pub const ALL: [OrderingMode; 4] =
        [OrderingMode::RandomUsers, OrderingMode::InvrRandom, OrderingMode::InvrScore, OrderingMode::InvrUserRank];

    pub fn as_str(self) -> &'static str {
        match self {
            OrderingMode::RandomUsers => "RANDOM_USERS",
            OrderingMode::InvrRandom => "INVR_RANDOM",
            OrderingMode::InvrScore => "INVR_SCORE",
            OrderingMode::InvrUserRank => "INVR_USER_RANK",
        }
    }
}

impl fmt::Display for OrderingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown ordering mode `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvrConfig {
    /// Users each treated item should be assigned to (K).
    pub users_per_item: usize,
    /// Maximum InvR items held by one user per tick (C).
    pub items_per_user_cap: usize,
    /// Retrieve `ceil(K * overfetch_factor)` users per item.
    pub overfetch_factor: f64,
    pub ordering_mode: OrderingMode,
    /// Visible impressions at which an item stops being supported.
    pub min_exposure: u64,
    /// A user who has visibly seen an item this many times never gets it again.
    pub max_impressions_per_user_item: u32,
    /// Ticks between recomputations.
    pub recompute_period: u32,
    /// When set, items left short after the first pass are retrieved again
    /// with this larger overfetch factor and offered a second pass.
    pub second_round_overfetch: Option<f64>,
    pub seed: u64,
}

impl Default for InvrConfig {
    fn default() -> Self {
        Self {
            users_per_item: 50,
            items_per_user_cap: 3,
            overfetch_factor: 4.0,
            ordering_mode: OrderingMode::InvrUserRank,
            min_exposure: 60,
            max_impressions_per_user_item: 2,
            recompute_period: 1,
            second_round_overfetch: None,
            seed: 0,
        }
    }
}

impl InvrConfig {
    pub fn validate(&self) -> Result<(), InvrError> {
        let bad = |m: &str| Err(InvrError::InvalidConfig(m.to_string()));
        if self.users_per_item == 0 {
            return bad("users_per_item must be >= 1");
        }
        if self.items_per_user_cap == 0 {
            return bad("items_per_user_cap must be >= 1");
        }
        if !(self.overfetch_factor >= 1.0 && self.overfetch_factor.is_finite()) {
            return bad("overfetch_factor must be >= 1");
        }
        if self.min_exposure == 0 {
            return bad("min_exposure must be >= 1");
        }
        if self.max_impressions_per_user_item == 0 {
            return bad("max_impressions_per_user_item must be >= 1");
        }
        if self.recompute_period == 0 {
            return bad("recompute_period must be >= 1");
        }
        if let Some(f) = self.second_round_overfetch {
            if !(f >= self.overfetch_factor && f.is_finite()) {
                return bad("second_round_overfetch must be >= overfetch_factor");
            }
        }
        Ok(())
    }
}

/// One retrieved (item, user) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub item: ItemId,
    pub user: UserId,
    /// Inner product of the user and item embeddings.
    pub score: f64,
    /// 1-based rank of this user among all users for this item.
    pub user_rank: usize,
}

/// Output of one allocation pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// Each user's items in presentation order.
    pub per_user: BTreeMap<UserId, Vec<CandidatePair>>,
    pub per_item: BTreeMap<ItemId, BTreeSet<UserId>>,
    /// `K - |per_item[i]|` for every treated item, zeros included.
    pub shortfalls: BTreeMap<ItemId, usize>,
}

impl Assignment {
    pub fn total_assigned(&self) -> usize {
        self.per_item.values().map(BTreeSet::len).sum()
    }

    pub fn total_shortfall(&self) -> usize {
        self.shortfalls.values().sum()
    }

    pub fn items_for(&self, user: UserId) -> &[CandidatePair] {
        self.per_user.get(&user).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check(&self, users_per_item: usize, cap: usize) -> Result<(), String> {
        let mut pairs_from_users = BTreeSet::new();
        for (u, list) in &self.per_user {
            if list.len() > cap {
                return Err(format!("user {u} holds {} items, cap {cap}", list.len()));
            }
            for p in list {
                if p.user != *u || !pairs_from_users.insert((p.item, p.user)) {
                    return Err(format!("bad or duplicate pair ({}, {}) under user {u}", p.item, p.user));
                }
            }
        }
        let mut pairs_from_items = BTreeSet::new();
        for (i, users) in &self.per_item {
            for u in users {
                pairs_from_items.insert((*i, *u));
            }
            let short = self.shortfalls.get(i).copied().unwrap_or(usize::MAX);
            if users.len() + short != users_per_item {
                return Err(format!("item {i}: {} assigned + {short} short != {users_per_item}", users.len()));
            }
        }
        if pairs_from_items != pairs_from_users {
            return Err("per_user and per_item disagree".into());
        }
        Ok(())
    }

    /// Writes `tick,user_id,slot,item_id,score,user_rank,mode`; slot is 1-based.
    pub fn write_csv<W: Write>(&self, tick: Tick, mode: OrderingMode, mut out: W) -> std::io::Result<()> {
        for (u, list) in &self.per_user {
            for (slot, p) in list.iter().enumerate() {
                writeln!(out, "{tick},{u},{},{},{},{},{mode}", slot + 1, p.item, p.score, p.user_rank)?;
            }
        }
        Ok(())
    }
}

pub const ASSIGNMENT_CSV_HEADER: &str = "tick,user_id,slot,item_id,score,user_rank,mode";
