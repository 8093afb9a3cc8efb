//! Synthetic content platform and A/B harness.

mod ab;
mod click;
mod platform;
mod recommender;
mod runner;
mod select;
mod slate;
mod variant;
mod world;

use thiserror::Error;

pub use ab::{run_ab, AbRun};
pub use click::{click_model, ClickModel, DrawKey, RUN_DOMAIN, WARMUP_DOMAIN};
pub use platform::{
    retrain_with_feedback, run_epoch, run_warmup, train_on_warmup, EpochContext, FeedbackConfig, PlatformState, Warmup,
    WarmupConfig,
};
pub use recommender::{insert_cold_start, Recommender, RecommenderConfig};
pub use runner::{prepare, prepare_with_table, run_variant, Prepared, RunOptions, RunResult};
pub use select::{
    select_publishers, select_users, PublisherStats, PublisherThresholds, SelectionConfig, UserStats,
};
pub use slate::{assemble_slate, SlateConfig, Slot};
pub use variant::{InvrOverrides, VariantName, VariantSpec};
pub use world::{generate_world, Item, Publisher, User, World, WorldConfig};

use crate::embedding::EmbeddingError;
use crate::invr::InvrError;
use crate::mips::MipsError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Invr(#[from] InvrError),
    #[error(transparent)]
    Mips(#[from] MipsError),
}
