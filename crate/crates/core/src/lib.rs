//! Inverse retrieval for long-tail exposure: embedding training, inner
//! product search, the InvR batch pipeline, exposure metrics and a
//! synthetic platform to run A/B comparisons on.

pub mod config;
pub mod embedding;
pub mod ids;
pub mod interactions;
pub mod invr;
pub mod metrics;
pub mod mips;
pub mod report;
pub mod rng;
pub mod sim;

pub use config::ExperimentConfig;
pub use embedding::{ItemEmbeddingTable, TrainConfig, UserHistory};
pub use ids::{ItemId, PublisherId, Tick, UserId};
pub use interactions::{InteractionLog, InteractionRecord, Source};
pub use invr::{Assignment, ExposureLedger, InvrConfig, OrderingMode};
pub use mips::MipsIndex;
pub use report::{MetricReport, Report, RunSummary};
pub use sim::{VariantName, VariantSpec};
