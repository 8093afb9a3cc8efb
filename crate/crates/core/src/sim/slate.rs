use serde::{Deserialize, Serialize};

use super::SimError;
use crate::ids::ItemId;
use crate::interactions::Source;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlateConfig {
    pub slate_size: usize,
    pub invr_slots_max: usize,
    /// Inclusive 1-based positions where InvR items may go.
    pub invr_position_range: [usize; 2],
}

impl Default for SlateConfig {
    fn default() -> Self {
        Self { slate_size: 20, invr_slots_max: 3, invr_position_range: [5, 12] }
    }
}

impl SlateConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let [lo, hi] = self.invr_position_range;
        if self.slate_size == 0 || self.slate_size > usize::from(u8::MAX) {
            return Err(SimError::InvalidConfig("slate: slate_size must lie in 1..=255".into()));
        }
        if lo == 0 || lo > hi || hi > self.slate_size {
            return Err(SimError::InvalidConfig("slate: invr_position_range must fit inside the slate".into()));
        }
        if self.invr_slots_max > hi - lo + 1 {
            return Err(SimError::InvalidConfig("slate: invr_slots_max exceeds the position range".into()));
        }
        Ok(())
    }
}

/// One slate position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub item: ItemId,
    pub source: Source,
}

/// Places up to `invr_slots_max` InvR items at the first positions of the
/// configured range, in the given order, and fills the rest with `base` in
/// order. A base item that is also an InvR item keeps only its InvR position.
/// The result is truncated to `slate_size`.
pub fn assemble_slate(base: &[Slot], invr: &[ItemId], config: &SlateConfig) -> Vec<Slot> {
    let mut chosen: Vec<ItemId> = Vec::with_capacity(config.invr_slots_max);
    for &i in invr {
        if chosen.len() == config.invr_slots_max {
            break;
        }
        if !chosen.contains(&i) {
            chosen.push(i);
        }
    }
    let start = config.invr_position_range[0] - 1;
    let mut rest = base.iter().filter(|s| !chosen.contains(&s.item));
    let mut slate = Vec::with_capacity(config.slate_size);
    let mut invr_iter = chosen.iter();
    while slate.len() < config.slate_size {
        let pos = slate.len();
        let next = if pos >= start {
            invr_iter.next().map(|&item| Slot { item, source: Source::Invr })
        } else {
            None
        };
        match next.or_else(|| rest.next().copied()) {
            Some(s) => slate.push(s),
            None => match invr_iter.next() {
                Some(&item) => slate.push(Slot { item, source: Source::Invr }),
                None => break,
            },
        }
    }
    slate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n: u32) -> Vec<Slot> {
        (0..n).map(|i| Slot { item: ItemId(i), source: Source::Organic }).collect()
    }

    fn ids(s: &[Slot]) -> Vec<u32> {
        s.iter().map(|s| s.item.0).collect()
    }

    #[test]
    fn no_invr_keeps_base() {
        assert_eq!(assemble_slate(&base(20), &[], &SlateConfig::default()), base(20));
    }

    #[test]
    fn three_items_take_positions_five_to_seven() {
        let s = assemble_slate(&base(20), &[ItemId(100), ItemId(101), ItemId(102)], &SlateConfig::default());
        assert_eq!(s.len(), 20);
        let mut want: Vec<u32> = (0..4).collect();
        want.extend([100, 101, 102]);
        want.extend(4..17);
        assert_eq!(ids(&s), want);
        for (k, slot) in s.iter().enumerate() {
            assert_eq!(slot.source == Source::Invr, (4..7).contains(&k));
        }
    }

    #[test]
    fn duplicate_keeps_invr_placement() {
        let s = assemble_slate(&base(20), &[ItemId(1)], &SlateConfig::default());
        assert_eq!(s.iter().filter(|x| x.item == ItemId(1)).count(), 1);
        assert_eq!(s[4], Slot { item: ItemId(1), source: Source::Invr });
        assert_eq!(ids(&s[..4]), vec![0, 2, 3, 4]);
        assert_eq!(s.len(), 20);
    }

    #[test]
    fn caps_invr_count() {
        let invr: Vec<ItemId> = (100..106).map(ItemId).collect();
        let s = assemble_slate(&base(20), &invr, &SlateConfig::default());
        assert_eq!(s.iter().filter(|x| x.source == Source::Invr).count(), 3);
    }

    #[test]
    fn short_base_still_places_invr() {
        let s = assemble_slate(&base(2), &[ItemId(9)], &SlateConfig::default());
        assert_eq!(ids(&s), vec![0, 1, 9]);
    }

    #[test]
    fn validate_rejects_bad_ranges() {
        let bad = |r: [usize; 2], n: usize| SlateConfig { invr_position_range: r, invr_slots_max: n, slate_size: 20 }.validate();
        assert!(bad([0, 4], 1).is_err());
        assert!(bad([5, 21], 1).is_err());
        assert!(bad([5, 6], 3).is_err());
        assert!(bad([5, 12], 3).is_ok());
    }
}
