//! Synthetic platform: publishers with topics, items near their publisher's
//! topic, users mixing a shared mainstream taste with one interest topic.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ids::{ItemId, PublisherId, Tick, UserId};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_publishers: usize,
    pub latent_dim: usize,
    /// Popularity prior of the item at rank r is proportional to r^-exponent.
    pub popularity_exponent: f64,
    pub niche_publisher_fraction: f64,
    /// Beta(alpha, beta) per-tick visit probability.
    pub activity_alpha: f64,
    pub activity_beta: f64,
    /// Probability of scrolling past each slate position.
    pub scroll_continuation: f64,
    /// Click logit is `click_beta * dot + click_bias` on the latent vectors.
    pub click_beta: f64,
    pub click_bias: f64,
    /// Weight of the shared mainstream direction in every user's taste.
    pub mainstream_appeal: f64,
    pub interest_weight: f64,
    pub user_noise: f64,
    /// Pull of a mainstream item toward its publisher's topic.
    pub item_topic_weight: f64,
    pub item_noise: f64,
    /// Spread of niche items around their topic; small means concentrated.
    pub niche_noise: f64,
    /// Share of users whose interest topic belongs to a niche publisher.
    pub niche_interest_fraction: f64,
    pub consent_rate: f64,
    /// Items each user consumed before the platform existed (direct visits).
    pub initial_history_len: usize,
    /// Share of those drawn from the user's interest publisher; the rest
    /// follow the popularity prior.
    pub initial_interest_share: f64,
    pub revenue_per_click_min: f64,
    pub revenue_per_click_max: f64,
    /// Share of items released during the run rather than before it.
    pub new_item_fraction: f64,
    pub ticks: u32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_users: 10_000,
            n_items: 2_000,
            n_publishers: 20,
            latent_dim: 16,
            popularity_exponent: 1.0,
            niche_publisher_fraction: 0.2,
            activity_alpha: 2.0,
            activity_beta: 6.0,
            scroll_continuation: 0.85,
            click_beta: 7.0,
            click_bias: -4.5,
            mainstream_appeal: 1.5,
            interest_weight: 1.0,
            user_noise: 0.3,
            item_topic_weight: 0.5,
            item_noise: 0.3,
            niche_noise: 0.1,
            niche_interest_fraction: 0.2,
            consent_rate: 0.95,
            initial_history_len: 10,
            initial_interest_share: 0.5,
            revenue_per_click_min: 0.5,
            revenue_per_click_max: 1.5,
            new_item_fraction: 0.0,
            ticks: 50,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(format!("world: {m}")));
        if self.n_users == 0 || self.n_items == 0 || self.n_publishers == 0 || self.latent_dim == 0 || self.ticks == 0 {
            return bad("sizes and ticks must be positive");
        }
        if self.n_publishers > self.n_items {
            return bad("every publisher needs at least one item");
        }
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            return bad("popularity_exponent must be finite and non-negative");
        }
        if !(self.niche_publisher_fraction > 0.0 && self.niche_publisher_fraction < 1.0) {
            return bad("niche_publisher_fraction must lie in (0, 1)");
        }
        if !(self.activity_alpha > 0.0 && self.activity_beta > 0.0) {
            return bad("activity parameters must be positive");
        }
        if !(self.scroll_continuation > 0.0 && self.scroll_continuation <= 1.0) {
            return bad("scroll_continuation must lie in (0, 1]");
        }
        for (name, p) in [
            ("niche_interest_fraction", self.niche_interest_fraction),
            ("consent_rate", self.consent_rate),
            ("initial_interest_share", self.initial_interest_share),
            ("new_item_fraction", self.new_item_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!("world: {name} must lie in [0, 1]")));
            }
        }
        let weights = [
            self.click_beta,
            self.click_bias,
            self.mainstream_appeal,
            self.interest_weight,
            self.user_noise,
            self.item_topic_weight,
            self.item_noise,
            self.niche_noise,
        ];
        if weights.iter().any(|w| !w.is_finite()) {
            return bad("click and latent weights must be finite");
        }
        if !(0.0 <= self.revenue_per_click_min && self.revenue_per_click_min <= self.revenue_per_click_max) {
            return bad("revenue_per_click range is empty or negative");
        }
        Ok(())
    }

    /// Number of niche publishers: `round(fraction * n_publishers)`, at least one.
    pub fn niche_count(&self) -> usize {
        ((self.niche_publisher_fraction * self.n_publishers as f64).round() as usize).clamp(1, self.n_publishers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Publisher {
    pub id: PublisherId,
    pub niche: bool,
    pub topic: Vec<f64>,
    pub revenue_per_click: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub publisher: PublisherId,
    pub latent: Vec<f64>,
    /// Share of the warm-up logging policy's popularity draws.
    pub prior: f64,
    /// First run tick at which the item can be recommended.
    pub release: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: UserId,
    pub latent: Vec<f64>,
    pub activity: f64,
    pub consent: bool,
    pub interest: PublisherId,
    /// Consumed before the first tick, most recent last.
    pub initial_history: Vec<ItemId>,
}

/// Ground truth of one simulated platform. Ids are dense: entity `k` has id `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub mainstream: Vec<f64>,
    pub publishers: Vec<Publisher>,
    pub items: Vec<Item>,
    pub users: Vec<User>,
}

fn gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// `sum_k w_k * v_k` plus isotropic noise with expected norm `noise`.
fn blend<R: Rng>(rng: &mut R, parts: &[(f64, &[f64])], noise: f64) -> Vec<f64> {
    let dim = parts[0].1.len();
    let g = gaussian(rng, dim);
    let scale = noise / (dim as f64).sqrt();
    let v = (0..dim).map(|k| parts.iter().map(|(w, p)| w * p[k]).sum::<f64>() + scale * g[k]).collect();
    normalize(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate_world(config: &WorldConfig) -> Result<World, SimError> {
    config.validate()?;
    let d = config.latent_dim;
    let seed = config.seed;

    let mut rng = stream_rng(seed, Stream::World, &[0]);
    let mainstream = normalize(gaussian(&mut rng, d));
    let mut niche_flags = vec![false; config.n_publishers];
    niche_flags[..config.niche_count()].iter_mut().for_each(|f| *f = true);
    niche_flags.shuffle(&mut rng);
    let publishers: Vec<Publisher> = niche_flags
        .iter()
        .enumerate()
        .map(|(p, &niche)| Publisher {
            id: PublisherId(p as u32),
            niche,
            topic: normalize(gaussian(&mut rng, d)),
            revenue_per_click: rng.random_range(config.revenue_per_click_min..=config.revenue_per_click_max),
        })
        .collect();

    // Items are dealt to publishers round-robin. Mainstream items take the
    // head of the popularity ranking in random order, niche items the tail.
    let mut rng = stream_rng(seed, Stream::World, &[1]);
    let publisher_of = |i: usize| i % config.n_publishers;
    let (mut head, mut tail): (Vec<usize>, Vec<usize>) =
        (0..config.n_items).partition(|&i| !publishers[publisher_of(i)].niche);
    head.shuffle(&mut rng);
    tail.shuffle(&mut rng);
    let mut rank = vec![0usize; config.n_items];
    for (r, &i) in head.iter().chain(&tail).enumerate() {
        rank[i] = r + 1;
    }
    let weights: Vec<f64> = rank.iter().map(|&r| (r as f64).powf(-config.popularity_exponent)).collect();
    let total: f64 = weights.iter().sum();

    let items: Vec<Item> = (0..config.n_items)
        .map(|i| {
            let p = &publishers[publisher_of(i)];
            let latent = if p.niche {
                blend(&mut rng, &[(1.0, &p.topic)], config.niche_noise)
            } else {
                blend(&mut rng, &[(1.0, &mainstream), (config.item_topic_weight, &p.topic)], config.item_noise)
            };
            let release = if rng.random::<f64>() < config.new_item_fraction {
                rng.random_range(1..=config.ticks.max(1))
            } else {
                0
            };
            Item { id: ItemId(i as u32), publisher: p.id, latent, prior: weights[i] / total, release }
        })
        .collect();

    let by_publisher: Vec<Vec<ItemId>> = (0..config.n_publishers)
        .map(|p| items.iter().filter(|i| i.publisher.index() == p && i.release == 0).map(|i| i.id).collect())
        .collect();
    let launch: Vec<ItemId> = items.iter().filter(|i| i.release == 0).map(|i| i.id).collect();
    let popular = WeightedIndex::new(launch.iter().map(|i| items[i.index()].prior))
        .map_err(|e| SimError::InvalidConfig(format!("world: {e}")))?;

    let mut rng = stream_rng(seed, Stream::World, &[2]);
    let activity = Beta::new(config.activity_alpha, config.activity_beta)
        .map_err(|e| SimError::InvalidConfig(format!("world: {e}")))?;
    let niche: Vec<&Publisher> = publishers.iter().filter(|p| p.niche).collect();
    let mainstream_pubs: Vec<&Publisher> = publishers.iter().filter(|p| !p.niche).collect();
    let users = (0..config.n_users)
        .map(|u| {
            let pool = if mainstream_pubs.is_empty() || rng.random::<f64>() < config.niche_interest_fraction {
                &niche
            } else {
                &mainstream_pubs
            };
            let interest = pool[rng.random_range(0..pool.len())];
            let latent = blend(
                &mut rng,
                &[(config.mainstream_appeal, &mainstream), (config.interest_weight, &interest.topic)],
                config.user_noise,
            );
            let own = &by_publisher[interest.id.index()];
            let initial_history = (0..config.initial_history_len)
                .map(|_| {
                    if !own.is_empty() && rng.random::<f64>() < config.initial_interest_share {
                        own[rng.random_range(0..own.len())]
                    } else {
                        launch[popular.sample(&mut rng)]
                    }
                })
                .collect();
            User {
                id: UserId(u as u32),
                latent,
                activity: activity.sample(&mut rng),
                consent: rng.random::<f64>() < config.consent_rate,
                interest: interest.id,
                initial_history,
            }
        })
        .collect();

    Ok(World { config: config.clone(), mainstream, publishers, items, users })
}

impl World {
    pub fn item(&self, id: ItemId) -> &Item {
        &self.items[id.index()]
    }

    pub fn user(&self, id: UserId) -> &User {
        &self.users[id.index()]
    }

    pub fn publisher(&self, id: PublisherId) -> &Publisher {
        &self.publishers[id.index()]
    }

    pub fn catalog(&self) -> Vec<(ItemId, PublisherId)> {
        self.items.iter().map(|i| (i.id, i.publisher)).collect()
    }

    fn write_vector<W: Write>(out: &mut W, v: &[f64]) -> std::io::Result<()> {
        for x in v {
            write!(out, ",{x}")?;
        }
        writeln!(out)
    }

    /// Writes `publishers.csv`, `items.csv` and `users.csv` contents.
    pub fn write_publishers<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "publisher_id,niche,revenue_per_click,topic...")?;
        for p in &self.publishers {
            write!(out, "{},{},{}", p.id, u8::from(p.niche), p.revenue_per_click)?;
            Self::write_vector(&mut out, &p.topic)?;
        }
        Ok(())
    }

    pub fn write_items<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item_id,publisher_id,prior,release_tick,latent...")?;
        for i in &self.items {
            write!(out, "{},{},{},{}", i.id, i.publisher, i.prior, i.release)?;
            Self::write_vector(&mut out, &i.latent)?;
        }
        Ok(())
    }

    pub fn write_users<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "user_id,activity,consent,interest_publisher,latent...")?;
        for u in &self.users {
            write!(out, "{},{},{},{}", u.id, u.activity, u8::from(u.consent), u.interest)?;
            Self::write_vector(&mut out, &u.latent)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig { n_users: 300, n_items: 120, n_publishers: 10, ..Default::default() }
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(generate_world(&small()).unwrap(), generate_world(&small()).unwrap());
        let other = generate_world(&WorldConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(generate_world(&small()).unwrap(), other);
    }

    #[test]
    fn zero_exponent_gives_uniform_priors() {
        let w = generate_world(&WorldConfig { popularity_exponent: 0.0, ..small() }).unwrap();
        for i in &w.items {
            assert!((i.prior - 1.0 / 120.0).abs() < 1e-15);
        }
    }

    #[test]
    fn niche_count_rounds_fraction() {
        let w = generate_world(&WorldConfig { niche_publisher_fraction: 0.2, ..small() }).unwrap();
        assert_eq!(w.publishers.iter().filter(|p| p.niche).count(), 2);
    }

    #[test]
    fn niche_items_sit_in_the_popularity_tail_and_near_their_topic() {
        let w = generate_world(&small()).unwrap();
        let max_niche = w.items.iter().filter(|i| w.publisher(i.publisher).niche).map(|i| i.prior).fold(0.0, f64::max);
        let min_main = w.items.iter().filter(|i| !w.publisher(i.publisher).niche).map(|i| i.prior).fold(1.0, f64::min);
        assert!(max_niche < min_main);
        for i in w.items.iter().filter(|i| w.publisher(i.publisher).niche) {
            assert!(dot(&i.latent, &w.publisher(i.publisher).topic) > 0.95);
        }
        let total: f64 = w.items.iter().map(|i| i.prior).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn latent_vectors_are_unit() {
        let w = generate_world(&small()).unwrap();
        for v in w.items.iter().map(|i| &i.latent).chain(w.users.iter().map(|u| &u.latent)) {
            assert!((dot(v, v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_world(&WorldConfig { n_users: 0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { niche_publisher_fraction: 1.0, ..small() }).is_err());
        assert!(generate_world(&WorldConfig { scroll_continuation: 0.0, ..small() }).is_err());
    }
}
