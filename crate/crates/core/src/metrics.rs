//! Exposure-inequality and engagement metrics.
//!
//! Shares are read off the Lorenz curve of per-item visible impressions.
//! Items that were never shown stay in the population: they form the flat
//! start of the curve.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ItemId, UserId};
use crate::interactions::{InteractionRecord, Source};
use crate::invr::ExposureLedger;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("total exposure is zero")]
    ZeroTotalExposure,
    #[error("population fraction {0} is outside (0, 1)")]
    InvalidFraction(f64),
    #[error("treated item set is empty")]
    EmptyTreatedSet,
    #[error("smoothing factor {0} is outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("series is empty")]
    EmptySeries,
    #[error("baseline value is zero")]
    ZeroBaseline,
}

/// Visible impressions per item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExposureDistribution {
    pub exposures: Vec<(ItemId, u64)>,
}

impl ExposureDistribution {
    pub fn new(exposures: Vec<(ItemId, u64)>) -> Self {
        Self { exposures }
    }

    /// Anonymous items numbered 0.. in input order.
    pub fn from_counts(counts: &[u64]) -> Self {
        Self::new(counts.iter().enumerate().map(|(i, &c)| (ItemId(i as u32), c)).collect())
    }

    pub fn from_ledger(ledger: &ExposureLedger) -> Self {
        Self::new(ledger.iter().map(|(i, e)| (i, e.visible)).collect())
    }

    pub fn total(&self) -> u64 {
        self.exposures.iter().map(|(_, c)| c).sum()
    }

    fn sorted_counts(&self) -> Result<Vec<u64>, MetricsError> {
        if self.total() == 0 {
            return Err(MetricsError::ZeroTotalExposure);
        }
        let mut v = self.exposures.clone();
        v.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        Ok(v.into_iter().map(|(_, c)| c).collect())
    }
}

/// Points `(k/n, share of the k least exposed items)` for `k = 0..=n`.
pub fn lorenz_curve(dist: &ExposureDistribution) -> Result<Vec<(f64, f64)>, MetricsError> {
    let counts = dist.sorted_counts()?;
    let n = counts.len() as f64;
    let total = dist.total() as f64;
    let mut cum = 0u64;
    let mut out = Vec::with_capacity(counts.len() + 1);
    out.push((0.0, 0.0));
    for (k, c) in counts.iter().enumerate() {
        cum += c;
        out.push(((k + 1) as f64 / n, cum as f64 / total));
    }
    Ok(out)
}

fn check_fraction(p: f64) -> Result<(), MetricsError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidFraction(p))
    }
}

/// Exposure share of the least exposed fraction `p` of items, linearly
/// interpolated between Lorenz points. B50PS is `bottom_share(d, 0.5)`.
pub fn bottom_share(dist: &ExposureDistribution, p: f64) -> Result<f64, MetricsError> {
    check_fraction(p)?;
    let counts = dist.sorted_counts()?;
    let n = counts.len();
    let total = dist.total() as f64;
    let x = p * n as f64;
    let k = (x.floor() as usize).min(n);
    let frac = x - k as f64;
    let below: u64 = counts[..k].iter().sum();
    let next = if k < n { counts[k] as f64 } else { 0.0 };
    Ok((below as f64 + frac * next) / total)
}

/// Exposure share of the most exposed fraction `p`; T1PS is `top_share(d, 0.01)`.
pub fn top_share(dist: &ExposureDistribution, p: f64) -> Result<f64, MetricsError> {
    check_fraction(p)?;
    Ok(1.0 - bottom_share(dist, 1.0 - p)?)
}

/// `1 - 2 * (area under the Lorenz curve)` with the area taken by the
/// trapezoid rule. Evaluated as `(2 sum(i x_i) - (n + 1) T) / (n T)` over
/// ascending counts in integer arithmetic, so equal counts give exactly 0.
pub fn gini(dist: &ExposureDistribution) -> Result<f64, MetricsError> {
    let counts = dist.sorted_counts()?;
    let n = counts.len() as i128;
    let total = i128::from(dist.total());
    let weighted: i128 = counts.iter().enumerate().map(|(i, &c)| (i as i128 + 1) * i128::from(c)).sum();
    Ok((2 * weighted - (n + 1) * total) as f64 / (n * total) as f64)
}

/// Fraction of treated items whose visible impressions reached the minimum exposure.
pub fn psei(treated: &BTreeSet<ItemId>, ledger: &ExposureLedger) -> Result<f64, MetricsError> {
    if treated.is_empty() {
        return Err(MetricsError::EmptyTreatedSet);
    }
    let reached = treated.iter().filter(|&&i| ledger.visible(i) >= ledger.min_exposure()).count();
    Ok(reached as f64 / treated.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortStats {
    /// Per-user CTR averaged over users with at least one matching visible impression.
    pub ctr: f64,
    pub clicks_per_user: f64,
    pub users: usize,
    /// No record matched the filter.
    pub empty: bool,
}

/// Macro-averaged CTR and clicks per user over visible records, optionally
/// restricted to one source and to a user set.
pub fn cohort_ctr_clicks(
    records: &[InteractionRecord],
    source: Option<Source>,
    users: Option<&BTreeSet<UserId>>,
) -> CohortStats {
    let mut per_user: BTreeMap<UserId, (u64, u64)> = BTreeMap::new();
    for r in records {
        if !r.visible || source.is_some_and(|s| s != r.source) || users.is_some_and(|u| !u.contains(&r.user)) {
            continue;
        }
        let e = per_user.entry(r.user).or_insert((0, 0));
        e.0 += 1;
        e.1 += u64::from(r.clicked);
    }
    if per_user.is_empty() {
        return CohortStats { empty: true, ..Default::default() };
    }
    let n = per_user.len() as f64;
    let ctr = per_user.values().map(|(v, c)| *c as f64 / *v as f64).sum::<f64>() / n;
    let clicks = per_user.values().map(|(_, c)| c).sum::<u64>() as f64 / n;
    CohortStats { ctr, clicks_per_user: clicks, users: per_user.len(), empty: false }
}

/// `s_0 = x_0`, `s_t = alpha x_t + (1 - alpha) s_{t-1}`.
pub fn ewma(series: &[f64], alpha: f64) -> Result<Vec<f64>, MetricsError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(MetricsError::InvalidAlpha(alpha));
    }
    let (&first, rest) = series.split_first().ok_or(MetricsError::EmptySeries)?;
    let mut out = Vec::with_capacity(series.len());
    out.push(first);
    let mut s = first;
    for &x in rest {
        s = alpha * x + (1.0 - alpha) * s;
        out.push(s);
    }
    Ok(out)
}

/// Smoothing factor used for the PSEI-over-time overlay.
pub const PSEI_EWMA_ALPHA: f64 = 0.125;

/// Signed percentage change of `variant` relative to `baseline`.
pub fn relative_change(variant: f64, baseline: f64) -> Result<f64, MetricsError> {
    if baseline == 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (variant - baseline) / baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interactions::NO_SNAPSHOT;
    use proptest::prelude::*;

    fn d(c: &[u64]) -> ExposureDistribution {
        ExposureDistribution::from_counts(c)
    }

    #[test]
    fn lorenz_examples() {
        let pts = |c: &[u64]| lorenz_curve(&d(c)).unwrap();
        assert_eq!(pts(&[1, 1, 1, 1]), vec![(0.0, 0.0), (0.25, 0.25), (0.5, 0.5), (0.75, 0.75), (1.0, 1.0)]);
        assert_eq!(pts(&[4, 1, 2, 1]), vec![(0.0, 0.0), (0.25, 0.125), (0.5, 0.25), (0.75, 0.5), (1.0, 1.0)]);
        assert_eq!(pts(&[10, 0]), vec![(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]);
        assert_eq!(lorenz_curve(&d(&[0, 0])), Err(MetricsError::ZeroTotalExposure));
    }

    #[test]
    fn bottom_share_examples() {
        assert_eq!(bottom_share(&d(&[1, 1, 1, 1]), 0.5).unwrap(), 0.5);
        assert_eq!(bottom_share(&d(&[1, 1, 2, 4]), 0.5).unwrap(), 0.25);
        assert!((bottom_share(&d(&[1, 2, 3]), 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bottom_share(&d(&[1, 2]), 1.5), Err(MetricsError::InvalidFraction(1.5)));
    }

    #[test]
    fn top_share_examples() {
        assert!((top_share(&d(&[1; 100]), 0.01).unwrap() - 0.01).abs() < 1e-12);
        let mut skew = vec![1u64; 99];
        skew.push(100);
        assert!((top_share(&d(&skew), 0.01).unwrap() - 100.0 / 199.0).abs() < 1e-12);
        assert_eq!(top_share(&d(&[5, 5]), 0.5).unwrap(), 0.5);
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&d(&[3, 3, 3])).unwrap(), 0.0);
        assert_eq!(gini(&d(&[1, 1, 2, 4])).unwrap(), 0.3125);
        for n in [10usize, 100, 1000] {
            let mut c = vec![0u64; n];
            c[n - 1] = 1;
            assert!((gini(&d(&c)).unwrap() - (1.0 - 1.0 / n as f64)).abs() < 1e-12);
        }
    }

    fn ledger(exposures: &[(u32, u64)], e_min: u64) -> ExposureLedger {
        let mut l = ExposureLedger::new(exposures.iter().map(|(i, _)| ItemId(*i)), e_min);
        let ev: Vec<InteractionRecord> = exposures
            .iter()
            .flat_map(|(i, n)| (0..*n).map(move |_| rec(0, *i, true, false, Source::Organic)))
            .collect();
        l.record_impressions(&ev).unwrap();
        l
    }

    fn rec(user: u32, item: u32, visible: bool, clicked: bool, source: Source) -> InteractionRecord {
        InteractionRecord { tick: 0, user: UserId(user), item: ItemId(item), position: 1, visible, clicked, source, history: NO_SNAPSHOT }
    }

    #[test]
    fn psei_examples() {
        let all: BTreeSet<ItemId> = (0..3).map(ItemId).collect();
        let l = ledger(&[(0, 5), (1, 10), (2, 20)], 10);
        assert!((psei(&all, &l).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(psei(&all, &ledger(&[(0, 0), (1, 0), (2, 0)], 10)).unwrap(), 0.0);
        assert_eq!(psei(&all, &ledger(&[(0, 10), (1, 10), (2, 10)], 10)).unwrap(), 1.0);
        assert_eq!(psei(&BTreeSet::new(), &l), Err(MetricsError::EmptyTreatedSet));
    }

    #[test]
    fn cohort_examples() {
        let mut r: Vec<InteractionRecord> = (0..4).map(|k| rec(0, k, true, k == 0, Source::Invr)).collect();
        r.push(rec(0, 9, false, false, Source::Invr));
        let s = cohort_ctr_clicks(&r, Some(Source::Invr), None);
        assert_eq!((s.ctr, s.clicks_per_user, s.users, s.empty), (0.25, 1.0, 1, false));

        let r = vec![
            rec(0, 0, true, true, Source::Invr),
            rec(0, 1, true, false, Source::Invr),
            rec(1, 0, true, false, Source::Invr),
            rec(1, 1, true, false, Source::Invr),
            rec(1, 2, true, true, Source::Organic),
        ];
        let s = cohort_ctr_clicks(&r, Some(Source::Invr), None);
        assert_eq!((s.ctr, s.clicks_per_user), (0.25, 0.5));
        let s = cohort_ctr_clicks(&r, Some(Source::ColdStart), None);
        assert!(s.empty);
        assert_eq!((s.ctr, s.clicks_per_user), (0.0, 0.0));
        let only1 = BTreeSet::from([UserId(1)]);
        let s = cohort_ctr_clicks(&r, None, Some(&only1));
        assert!((s.ctr - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ewma_examples() {
        assert_eq!(ewma(&[2.0; 5], 0.125).unwrap(), vec![2.0; 5]);
        assert_eq!(ewma(&[0.0, 1.0], 0.125).unwrap(), vec![0.0, 0.125]);
        assert_eq!(ewma(&[3.0, 1.0, 4.0], 1.0).unwrap(), vec![3.0, 1.0, 4.0]);
        assert_eq!(ewma(&[1.0], 0.0), Err(MetricsError::InvalidAlpha(0.0)));
        assert_eq!(ewma(&[], 0.5), Err(MetricsError::EmptySeries));
    }

    #[test]
    fn relative_change_examples() {
        assert_eq!(relative_change(2.5, 2.0).unwrap(), 25.0);
        assert_eq!(relative_change(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(relative_change(1.0, 0.0), Err(MetricsError::ZeroBaseline));
    }

    fn counts() -> impl Strategy<Value = Vec<u64>> {
        prop::collection::vec(0u64..50, 1..60).prop_filter("positive total", |v| v.iter().sum::<u64>() > 0)
    }

    proptest! {
        #[test]
        fn lorenz_is_anchored_monotone_convex(c in counts()) {
            let pts = lorenz_curve(&d(&c)).unwrap();
            prop_assert_eq!(pts[0], (0.0, 0.0));
            prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
            let inc: Vec<f64> = pts.windows(2).map(|w| w[1].1 - w[0].1).collect();
            prop_assert!(inc.iter().all(|&x| x >= 0.0));
            prop_assert!(inc.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }

        #[test]
        fn shares_are_consistent(c in counts(), p in 0.001f64..0.999) {
            let dist = d(&c);
            let b = bottom_share(&dist, p).unwrap();
            let t = top_share(&dist, 1.0 - p).unwrap();
            prop_assert!((b + t - 1.0).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        }

        #[test]
        fn permutation_and_scale_invariance(c in counts(), k in 1u64..20, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = c.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let scaled: Vec<u64> = c.iter().map(|x| x * k).collect();
            for other in [shuffled, scaled] {
                for p in [0.01, 0.5, 0.9] {
                    prop_assert!((bottom_share(&d(&c), p).unwrap() - bottom_share(&d(&other), p).unwrap()).abs() < 1e-12);
                    prop_assert!((top_share(&d(&c), p).unwrap() - top_share(&d(&other), p).unwrap()).abs() < 1e-12);
                }
                prop_assert!((gini(&d(&c)).unwrap() - gini(&d(&other)).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn uniform_bottom_share_is_identity(n in 1usize..500, level in 1u64..10, p in 0.0001f64..0.9999) {
            let b = bottom_share(&d(&vec![level; n]), p).unwrap();
            prop_assert!((b - p).abs() < 1e-12);
            prop_assert_eq!(gini(&d(&vec![level; n])).unwrap(), 0.0);
        }

        #[test]
        fn gini_matches_trapezoid_area(c in counts()) {
            let curve = lorenz_curve(&d(&c)).unwrap();
            let area: f64 = curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
            prop_assert!((gini(&d(&c)).unwrap() - (1.0 - 2.0 * area)).abs() < 1e-12);
        }
    }
}
