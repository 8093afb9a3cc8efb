//! Position-aware click model: a geometric scroll depth decides what is
//! visible, ground-truth relevance decides what is clicked.

use super::world::{dot, World};
use crate::ids::{ItemId, Tick, UserId};
use crate::rng::{unit_uniform, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickModel {
    pub continuation: f64,
    pub beta: f64,
    pub bias: f64,
}

impl ClickModel {
    pub fn from_world(world: &World) -> Self {
        let c = &world.config;
        Self { continuation: c.scroll_continuation, beta: c.click_beta, bias: c.click_bias }
    }

    /// Deepest visible position for a uniform draw `u` in [0, 1), capped at `max`.
    /// `P(depth >= k) = continuation^(k - 1)`.
    pub fn scroll_depth(&self, u: f64, max: usize) -> usize {
        if self.continuation >= 1.0 {
            return max;
        }
        let extra = ((1.0 - u).ln() / self.continuation.ln()).floor();
        if extra >= max as f64 {
            max
        } else {
            1 + extra as usize
        }
    }

    pub fn click_probability(&self, user_latent: &[f64], item_latent: &[f64]) -> f64 {
        let z = self.beta * dot(user_latent, item_latent) + self.bias;
        1.0 / (1.0 + (-z).exp())
    }
}

/// Draw coordinates. Warm-up draws live in their own domain so they never
/// collide with run draws that share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawKey {
    pub seed: u64,
    pub domain: u64,
    pub tick: Tick,
}

pub const RUN_DOMAIN: u64 = 0;
pub const WARMUP_DOMAIN: u64 = 1;

impl DrawKey {
    pub fn run(seed: u64, tick: Tick) -> Self {
        Self { seed, domain: RUN_DOMAIN, tick }
    }

    pub fn visits(&self, user: UserId, activity: f64) -> bool {
        unit_uniform(self.seed, Stream::Visit, &[self.domain, u64::from(self.tick), u64::from(user.0)]) < activity
    }

    pub fn depth(&self, model: &ClickModel, user: UserId, slate_size: usize) -> usize {
        model.scroll_depth(
            unit_uniform(self.seed, Stream::Scroll, &[self.domain, u64::from(self.tick), u64::from(user.0)]),
            slate_size,
        )
    }

    /// Keyed by the item rather than the position, so the same impression
    /// draws the same outcome wherever a variant placed it.
    pub fn click_draw(&self, user: UserId, item: ItemId) -> f64 {
        unit_uniform(
            self.seed,
            Stream::Click,
            &[self.domain, u64::from(self.tick), u64::from(user.0), u64::from(item.0)],
        )
    }
}

/// Visibility and click outcome of showing `item` to `user` at 1-based `position`.
pub fn click_model(
    world: &World,
    key: DrawKey,
    user: UserId,
    item: ItemId,
    position: usize,
    slate_size: usize,
) -> (bool, bool) {
    let model = ClickModel::from_world(world);
    let visible = position <= key.depth(&model, user, slate_size);
    let clicked =
        visible && key.click_draw(user, item) < model.click_probability(&world.user(user).latent, &world.item(item).latent);
    (visible, clicked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::{generate_world, WorldConfig};

    fn sigmoid(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn full_continuation_shows_everything() {
        let m = ClickModel { continuation: 1.0, beta: 5.0, bias: -3.0 };
        for u in [0.0, 0.5, 0.999_999] {
            assert_eq!(m.scroll_depth(u, 20), 20);
        }
        let w = generate_world(&WorldConfig {
            n_users: 5,
            n_items: 30,
            n_publishers: 3,
            scroll_continuation: 1.0,
            ..Default::default()
        })
        .unwrap();
        for t in 0..5 {
            for pos in 1..=20 {
                assert!(click_model(&w, DrawKey::run(7, t), UserId(1), ItemId(pos as u32), pos, 20).0);
            }
        }
    }

    #[test]
    fn depth_is_geometric() {
        let m = ClickModel { continuation: 0.5, beta: 0.0, bias: 0.0 };
        // P(depth >= 2) = 0.5, P(depth >= 3) = 0.25.
        assert_eq!(m.scroll_depth(0.49, 20), 1);
        assert_eq!(m.scroll_depth(0.51, 20), 2);
        assert_eq!(m.scroll_depth(0.76, 20), 3);
        let n = 100_000;
        let deep = (0..n).filter(|&k| m.scroll_depth((k as f64 + 0.5) / n as f64, 20) >= 3).count();
        assert!((deep as f64 / n as f64 - 0.25).abs() < 1e-3);
    }

    #[test]
    fn flat_model_ignores_relevance() {
        let m = ClickModel { continuation: 0.9, beta: 0.0, bias: -1.3 };
        assert_eq!(m.click_probability(&[1.0, 0.0], &[1.0, 0.0]), sigmoid(-1.3));
        assert_eq!(m.click_probability(&[1.0, 0.0], &[-1.0, 0.0]), sigmoid(-1.3));
    }

    #[test]
    fn orthogonal_versus_parallel() {
        let m = ClickModel { continuation: 0.9, beta: 4.0, bias: -2.0 };
        assert!((m.click_probability(&[1.0, 0.0], &[0.0, 1.0]) - sigmoid(-2.0)).abs() < 1e-15);
        assert!((m.click_probability(&[1.0, 0.0], &[1.0, 0.0]) - sigmoid(2.0)).abs() < 1e-15);
    }

    #[test]
    fn clicked_implies_visible() {
        let w = generate_world(&WorldConfig { n_users: 50, n_items: 40, n_publishers: 4, ..Default::default() }).unwrap();
        for t in 0..20 {
            for u in 0..50 {
                for pos in 1..=20 {
                    let (v, c) = click_model(&w, DrawKey::run(3, t), UserId(u), ItemId(pos as u32), pos, 20);
                    assert!(!c || v);
                }
            }
        }
    }
}
