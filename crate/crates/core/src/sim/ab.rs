use rayon::prelude::*;

use super::runner::{run_variant, Prepared, RunOptions, RunResult};
use super::variant::{VariantName, VariantSpec};
use super::SimError;
use crate::report::{build_report, Report};

#[derive(Debug, Clone)]
pub struct AbRun {
    pub runs: Vec<RunResult>,
    pub report: Report,
}

/// Every variant on every sim seed over the same prepared world. Runs are
/// independent and execute in parallel; results come back seed-major in
/// variant order.
pub fn run_ab(prep: &Prepared, variants: &[VariantSpec], sim_seeds: &[u64], options: RunOptions) -> Result<AbRun, SimError> {
    if !variants.iter().any(|v| v.name == VariantName::Baseline) {
        return Err(SimError::InvalidConfig("an A/B run needs a BASELINE variant".into()));
    }
    if sim_seeds.is_empty() {
        return Err(SimError::InvalidConfig("an A/B run needs at least one sim seed".into()));
    }
    let jobs: Vec<(u64, &VariantSpec)> = sim_seeds.iter().flat_map(|&s| variants.iter().map(move |v| (s, v))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, spec)| run_variant(prep, spec, seed, options))
        .collect::<Result<Vec<_>, SimError>>()?;
    let summaries: Vec<_> = runs.iter().map(|r| r.summary.clone()).collect();
    let report = build_report(&summaries, VariantName::Baseline)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    Ok(AbRun { runs, report })
}
