use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::invr::{InvrConfig, OrderingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariantName {
    Baseline,
    Random,
    InvrRandom,
    InvrScore,
    InvrUserRank,
}

impl VariantName {
    pub const ALL: [VariantName; 5] =
        [Self::Baseline, Self::Random, Self::InvrRandom, Self::InvrScore, Self::InvrUserRank];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Baseline => "BASELINE",
            Self::Random => "RANDOM",
            Self::InvrRandom => "INVR_RANDOM",
            Self::InvrScore => "INVR_SCORE",
            Self::InvrUserRank => "INVR_USER_RANK",
        }
    }

    /// `None` for the control, which never inserts anything.
    pub fn ordering_mode(self) -> Option<OrderingMode> {
        match self {
            Self::Baseline => None,
            Self::Random => Some(OrderingMode::RandomUsers),
            Self::InvrRandom => Some(OrderingMode::InvrRandom),
            Self::InvrScore => Some(OrderingMode::InvrScore),
            Self::InvrUserRank => Some(OrderingMode::InvrUserRank),
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantName {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| SimError::UnknownVariant(s.to_string()))
    }
}

/// Per-variant replacements for the shared InvR settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvrOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub users_per_item: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items_per_user_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overfetch_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_exposure: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recompute_period: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_round_overfetch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub name: VariantName,
    #[serde(default, skip_serializing_if = "is_default")]
    pub invr: InvrOverrides,
}

fn is_default(o: &InvrOverrides) -> bool {
    *o == InvrOverrides::default()
}

impl VariantSpec {
    pub fn new(name: VariantName) -> Self {
        Self { name, invr: InvrOverrides::default() }
    }

    /// The shared settings with this variant's overrides and ordering mode
    /// applied. The control keeps the shared mode; it never allocates.
    pub fn invr_config(&self, shared: &InvrConfig) -> InvrConfig {
        let o = &self.invr;
        InvrConfig {
            users_per_item: o.users_per_item.unwrap_or(shared.users_per_item),
            items_per_user_cap: o.items_per_user_cap.unwrap_or(shared.items_per_user_cap),
            overfetch_factor: o.overfetch_factor.unwrap_or(shared.overfetch_factor),
            min_exposure: o.min_exposure.unwrap_or(shared.min_exposure),
            recompute_period: o.recompute_period.unwrap_or(shared.recompute_period),
            second_round_overfetch: o.second_round_overfetch.or(shared.second_round_overfetch),
            ordering_mode: self.name.ordering_mode().unwrap_or(shared.ordering_mode),
            ..shared.clone()
        }
    }
}
