//! Publisher and user eligibility.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ids::{PublisherId, UserId};

/// Activity of one publisher over a trailing window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PublisherStats {
    pub publisher: PublisherId,
    pub niche: bool,
    pub items: u64,
    pub visible: u64,
    pub clicks: u64,
    /// Clicks times the publisher's revenue per click.
    pub revenue: f64,
}

impl PublisherStats {
    pub fn avg_impressions_per_item(&self) -> f64 {
        self.visible as f64 / self.items.max(1) as f64
    }

    pub fn avg_revenue_per_item(&self) -> f64 {
        self.revenue / self.items.max(1) as f64
    }
}

/// Absolute upper bounds; a publisher must be strictly below all four.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PublisherThresholds {
    pub revenue_total: f64,
    pub avg_impressions_per_item: f64,
    pub total_clicks: f64,
    pub avg_revenue_per_item: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    /// Each publisher threshold is this multiple of the median across publishers.
    pub revenue_total_vs_median: f64,
    pub avg_impressions_vs_median: f64,
    pub total_clicks_vs_median: f64,
    pub avg_revenue_vs_median: f64,
    pub min_history_len: usize,
    pub min_recent_visits: u32,
    /// Trailing window for recent visits, in ticks (at most 64).
    pub recent_window: u32,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            revenue_total_vs_median: 1.0,
            avg_impressions_vs_median: 1.0,
            total_clicks_vs_median: 1.0,
            avg_revenue_vs_median: 1.0,
            min_history_len: 3,
            min_recent_visits: 1,
            recent_window: 8,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let m = [
            self.revenue_total_vs_median,
            self.avg_impressions_vs_median,
            self.total_clicks_vs_median,
            self.avg_revenue_vs_median,
        ];
        if m.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(SimError::InvalidConfig("selection: median multipliers must be finite and non-negative".into()));
        }
        if self.recent_window == 0 || self.recent_window > 64 {
            return Err(SimError::InvalidConfig("selection: recent_window must lie in 1..=64".into()));
        }
        Ok(())
    }

    pub fn thresholds(&self, stats: &[PublisherStats]) -> PublisherThresholds {
        PublisherThresholds {
            revenue_total: self.revenue_total_vs_median * median(stats.iter().map(|s| s.revenue)),
            avg_impressions_per_item: self.avg_impressions_vs_median
                * median(stats.iter().map(PublisherStats::avg_impressions_per_item)),
            total_clicks: self.total_clicks_vs_median * median(stats.iter().map(|s| s.clicks as f64)),
            avg_revenue_per_item: self.avg_revenue_vs_median * median(stats.iter().map(PublisherStats::avg_revenue_per_item)),
        }
    }
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn select_publishers(stats: &[PublisherStats], t: &PublisherThresholds) -> BTreeSet<PublisherId> {
    stats
        .iter()
        .filter(|s| {
            s.niche
                && s.revenue < t.revenue_total
                && s.avg_impressions_per_item() < t.avg_impressions_per_item
                && (s.clicks as f64) < t.total_clicks
                && s.avg_revenue_per_item() < t.avg_revenue_per_item
        })
        .map(|s| s.publisher)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserStats {
    pub user: UserId,
    pub history_len: usize,
    pub recent_visits: u32,
    pub consent: bool,
}

pub fn select_users(stats: &[UserStats], min_history_len: usize, min_recent_visits: u32) -> Vec<UserId> {
    stats
        .iter()
        .filter(|s| s.consent && s.history_len >= min_history_len && s.recent_visits >= min_recent_visits)
        .map(|s| s.user)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(p: u32, niche: bool, visible: u64, clicks: u64, revenue: f64) -> PublisherStats {
        PublisherStats { publisher: PublisherId(p), niche, items: 10, visible, clicks, revenue }
    }

    const T: PublisherThresholds =
        PublisherThresholds { revenue_total: 100.0, avg_impressions_per_item: 50.0, total_clicks: 100.0, avg_revenue_per_item: 10.0 };

    #[test]
    fn conjunctive_publisher_filter() {
        let s = [
            stats(0, true, 100, 10, 10.0),
            stats(1, false, 100, 10, 10.0),
            stats(2, true, 100, 200, 10.0),
            stats(3, true, 600, 10, 10.0),
            stats(4, true, 100, 10, 150.0),
        ];
        assert_eq!(select_publishers(&s, &T), BTreeSet::from([PublisherId(0)]));
    }

    #[test]
    fn thresholds_scale_the_median() {
        let s: Vec<PublisherStats> = (0..3).map(|k| stats(k, true, 10 * (k as u64 + 1), k as u64, k as f64)).collect();
        let c = SelectionConfig { total_clicks_vs_median: 2.0, ..Default::default() };
        let t = c.thresholds(&s);
        assert_eq!(t.total_clicks, 2.0);
        assert_eq!(t.avg_impressions_per_item, 2.0);
    }

    #[test]
    fn user_filter() {
        let u = |id, history_len, recent_visits, consent| UserStats { user: UserId(id), history_len, recent_visits, consent };
        let s = [u(0, 0, 0, true), u(1, 40, 6, true), u(2, 40, 0, true), u(3, 40, 6, false)];
        assert_eq!(select_users(&s, 3, 1), vec![UserId(1)]);
    }
}
