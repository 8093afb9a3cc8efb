//! Per-run metric summaries and the cross-variant comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ewma, relative_change, PSEI_EWMA_ALPHA};
use crate::sim::VariantName;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("mismatched runs: {0}")]
    MismatchedRuns(String),
    #[error("cannot read run summary {0}")]
    Unreadable(String),
}

/// Absolute metrics of one run. `None` marks an undefined value, such as
/// the InvR CTR of a run without InvR slots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub b50ps: Option<f64>,
    pub psei: Option<f64>,
    pub t1ps: Option<f64>,
    pub gini: Option<f64>,
    pub ctr_invr: Option<f64>,
    pub clicks_invr: Option<f64>,
    pub ctr_overall: Option<f64>,
    pub clicks_overall: Option<f64>,
    /// Mean share of the minimum exposure that InvR delivered, over cohort
    /// items that reached it.
    pub invr_share_at_shutoff: Option<f64>,
    pub visible_impressions: u64,
    pub invr_visible_impressions: u64,
    pub unique_items: usize,
    pub unique_organic_items: usize,
    pub cohort_items: usize,
    pub assigned_pairs: u64,
}

/// Everything the report needs from one run; stored as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: VariantName,
    pub world_seed: u64,
    pub sim_seed: u64,
    pub ticks: u32,
    pub metrics: MetricReport,
    /// PSEI of the fixed treated cohort after each tick.
    pub psei_series: Vec<f64>,
}

impl RunSummary {
    pub fn read_dir(dir: &std::path::Path) -> Result<Self, ReportError> {
        let path = dir.join("summary.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| ReportError::Unreadable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ReportError::Unreadable(format!("{}: {e}", path.display())))
    }
}

/// Relative changes in percent; `None` renders as `-`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub variant: VariantName,
    pub sim_seed: u64,
    pub b50ps: Option<f64>,
    pub psei: Option<f64>,
    pub t1ps: Option<f64>,
    pub gini: Option<f64>,
    /// Against the RANDOM run of the same seed, since the control has no InvR slots.
    pub ctr_invr: Option<f64>,
    pub clicks_invr: Option<f64>,
    pub ctr_overall: Option<f64>,
    pub clicks_overall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub baseline: VariantName,
    pub runs: Vec<RunSummary>,
    pub relative: Vec<RelativeRow>,
}

fn rel(v: Option<f64>, b: Option<f64>) -> Option<f64> {
    relative_change(v?, b?).ok()
}

/// Compares every run with the `baseline` run of the same sim seed. All
/// runs must share the world seed and horizon and every seed needs a baseline.
pub fn build_report(runs: &[RunSummary], baseline: VariantName) -> Result<Report, ReportError> {
    let first = runs.first().ok_or_else(|| ReportError::MismatchedRuns("no runs".into()))?;
    for r in runs {
        if r.world_seed != first.world_seed {
            return Err(ReportError::MismatchedRuns(format!(
                "world seed {} differs from {}",
                r.world_seed, first.world_seed
            )));
        }
        if r.ticks != first.ticks {
            return Err(ReportError::MismatchedRuns(format!("horizon {} differs from {}", r.ticks, first.ticks)));
        }
    }
    let mut bases: BTreeMap<u64, &RunSummary> = BTreeMap::new();
    let mut randoms: BTreeMap<u64, &RunSummary> = BTreeMap::new();
    for r in runs {
        if r.variant == baseline {
            bases.entry(r.sim_seed).or_insert(r);
        }
        if r.variant == VariantName::Random {
            randoms.entry(r.sim_seed).or_insert(r);
        }
    }
    let relative = runs
        .iter()
        .map(|r| {
            let b = bases.get(&r.sim_seed).ok_or_else(|| {
                ReportError::MismatchedRuns(format!("no {baseline} run for sim seed {}", r.sim_seed))
            })?;
            let (m, bm) = (&r.metrics, &b.metrics);
            let reference = randoms.get(&r.sim_seed).map(|x| &x.metrics);
            Ok(RelativeRow {
                variant: r.variant,
                sim_seed: r.sim_seed,
                b50ps: rel(m.b50ps, bm.b50ps),
                psei: rel(m.psei, bm.psei),
                t1ps: rel(m.t1ps, bm.t1ps),
                gini: rel(m.gini, bm.gini),
                ctr_invr: reference.and_then(|x| rel(m.ctr_invr, x.ctr_invr)),
                clicks_invr: reference.and_then(|x| rel(m.clicks_invr, x.clicks_invr)),
                ctr_overall: rel(m.ctr_overall, bm.ctr_overall),
                clicks_overall: rel(m.clicks_overall, bm.clicks_overall),
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    Ok(Report { baseline, runs: runs.to_vec(), relative })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl Report {
    /// Relative changes in the layout of the published results table.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("variant,sim_seed,b50ps_pct,psei_pct,t1ps_pct,ctr_invr_pct,clicks_invr_pct\n");
        for r in &self.relative {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.variant,
                r.sim_seed,
                cell(r.b50ps),
                cell(r.psei),
                cell(r.t1ps),
                cell(r.ctr_invr),
                cell(r.clicks_invr)
            );
        }
        s
    }

    /// Absolute values plus every relative change.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(
            "variant,sim_seed,b50ps,psei,t1ps,gini,ctr_invr,clicks_invr,ctr_overall,clicks_overall,\
             invr_share_at_shutoff,visible_impressions,invr_visible_impressions,unique_items,unique_organic_items,\
             cohort_items,assigned_pairs,b50ps_pct,psei_pct,t1ps_pct,gini_pct,ctr_invr_pct,clicks_invr_pct,\
             ctr_overall_pct,clicks_overall_pct\n",
        );
        for (run, r) in self.runs.iter().zip(&self.relative) {
            let m = &run.metrics;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                run.variant,
                run.sim_seed,
                cell(m.b50ps),
                cell(m.psei),
                cell(m.t1ps),
                cell(m.gini),
                cell(m.ctr_invr),
                cell(m.clicks_invr),
                cell(m.ctr_overall),
                cell(m.clicks_overall),
                cell(m.invr_share_at_shutoff),
                m.visible_impressions,
                m.invr_visible_impressions,
                m.unique_items,
                m.unique_organic_items,
                m.cohort_items,
                m.assigned_pairs,
                cell(r.b50ps),
                cell(r.psei),
                cell(r.t1ps),
                cell(r.gini),
                cell(r.ctr_invr),
                cell(r.clicks_invr),
                cell(r.ctr_overall),
                cell(r.clicks_overall)
            );
        }
        s
    }

    /// `variant,sim_seed,tick,psei,psei_ewma`, one row per run and tick.
    pub fn psei_csv(&self) -> String {
        let mut s = String::from("variant,sim_seed,tick,psei,psei_ewma\n");
        for run in &self.runs {
            let smooth = ewma(&run.psei_series, PSEI_EWMA_ALPHA).unwrap_or_default();
            for (t, (p, e)) in run.psei_series.iter().zip(&smooth).enumerate() {
                let _ = writeln!(s, "{},{},{t},{p},{e}", run.variant, run.sim_seed);
            }
        }
        s
    }

    pub fn write_all(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in [("table.csv", self.table_csv()), ("metrics.csv", self.metrics_csv()), ("psei.csv", self.psei_csv())] {
            std::fs::File::create(dir.join(name))?.write_all(body.as_bytes())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(variant: VariantName, seed: u64, b50ps: f64, ctr_invr: Option<f64>) -> RunSummary {
        RunSummary {
            variant,
            world_seed: 0,
            sim_seed: seed,
            ticks: 3,
            metrics: MetricReport {
                b50ps: Some(b50ps),
                psei: Some(0.5),
                t1ps: Some(0.1),
                gini: Some(0.7),
                ctr_invr,
                clicks_invr: ctr_invr,
                ctr_overall: Some(0.2),
                clicks_overall: Some(1.0),
                ..Default::default()
            },
            psei_series: vec![0.0, 0.25, 0.5],
        }
    }

    #[test]
    fn a_a_is_all_zero() {
        let r = build_report(&[run(VariantName::Baseline, 1, 0.1, None), run(VariantName::Baseline, 1, 0.1, None)], VariantName::Baseline)
            .unwrap();
        for row in &r.relative {
            for v in [row.b50ps, row.psei, row.t1ps, row.gini, row.ctr_overall, row.clicks_overall] {
                assert_eq!(v, Some(0.0));
            }
            assert_eq!(row.ctr_invr, None);
        }
        assert!(r.table_csv().lines().nth(1).unwrap().starts_with("BASELINE,1,0,0,0,-,-"));
    }

    #[test]
    fn relative_columns() {
        let runs = [
            run(VariantName::Baseline, 1, 0.1, None),
            run(VariantName::Random, 1, 0.11, Some(0.1)),
            run(VariantName::InvrUserRank, 1, 0.125, Some(0.4)),
        ];
        let r = build_report(&runs, VariantName::Baseline).unwrap();
        let ur = &r.relative[2];
        assert!((ur.b50ps.unwrap() - 25.0).abs() < 1e-9);
        assert!((ur.ctr_invr.unwrap() - 300.0).abs() < 1e-9);
        assert_eq!(r.relative[1].ctr_invr, Some(0.0));
        assert_eq!(r.relative[0].ctr_invr, None);
        assert_eq!(r.table_csv().lines().count(), 4);
    }

    #[test]
    fn mismatches_are_rejected() {
        let a = run(VariantName::Baseline, 1, 0.1, None);
        let mut b = run(VariantName::Random, 1, 0.1, None);
        b.world_seed = 5;
        assert!(matches!(build_report(&[a.clone(), b], VariantName::Baseline), Err(ReportError::MismatchedRuns(_))));
        let mut c = run(VariantName::Random, 1, 0.1, None);
        c.ticks = 9;
        assert!(build_report(&[a.clone(), c], VariantName::Baseline).is_err());
        let lonely = run(VariantName::Random, 2, 0.1, None);
        assert!(build_report(&[a, lonely], VariantName::Baseline).is_err());
    }

    #[test]
    fn psei_rows_carry_the_smoothed_series() {
        let r = build_report(&[run(VariantName::Baseline, 1, 0.1, None)], VariantName::Baseline).unwrap();
        let csv = r.psei_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "BASELINE,1,0,0,0");
        assert_eq!(lines[2], "BASELINE,1,1,0.25,0.03125");
    }
}
