use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use super::InvrError;
use crate::ids::{ItemId, PublisherId};
use crate::interactions::{InteractionRecord, Source};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ItemExposure {
    pub visible: u64,
    /// Visible impressions delivered through InvR slots.
    pub invr_visible: u64,
    pub clicks: u64,
    /// Still below the minimum exposure.
    pub active: bool,
    /// InvR impressions counted at the moment the item reached the minimum exposure.
    pub invr_at_shutoff: Option<u64>,
}

/// Per-item visible-impression counters with the minimum-exposure shutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureLedger {
    min_exposure: u64,
    items: BTreeMap<ItemId, ItemExposure>,
}

impl ExposureLedger {
    pub fn new<I: IntoIterator<Item = ItemId>>(items: I, min_exposure: u64) -> Self {
        let items = items
            .into_iter()
            .map(|i| (i, ItemExposure { active: true, ..Default::default() }))
            .collect();
        Self { min_exposure, items }
    }

    pub fn min_exposure(&self) -> u64 {
        self.min_exposure
    }

    pub fn get(&self, item: ItemId) -> Option<&ItemExposure> {
        self.items.get(&item)
    }

    pub fn visible(&self, item: ItemId) -> u64 {
        self.items.get(&item).map_or(0, |e| e.visible)
    }

    pub fn is_active(&self, item: ItemId) -> bool {
        self.items.get(&item).is_none_or(|e| e.active)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &ItemExposure)> + '_ {
        self.items.iter().map(|(i, e)| (*i, e))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Applies a batch of events. Unknown items reject the whole batch.
    pub fn record_impressions(&mut self, events: &[InteractionRecord]) -> Result<(), InvrError> {
        if let Some(e) = events.iter().find(|e| !self.items.contains_key(&e.item)) {
            return Err(InvrError::UnknownItem(e.item));
        }
        for e in events.iter().filter(|e| e.visible) {
            let entry = self.items.get_mut(&e.item).expect("checked");
            entry.visible += 1;
            if e.source == Source::Invr {
                entry.invr_visible += 1;
            }
            if e.clicked {
                entry.clicks += 1;
            }
            if entry.active && entry.visible >= self.min_exposure {
                entry.active = false;
                entry.invr_at_shutoff = Some(entry.invr_visible);
            }
        }
        Ok(())
    }

    /// Mean fraction of the minimum exposure that InvR itself delivered,
    /// over the given items that have been switched off.
    pub fn invr_share_at_shutoff<'a, I>(&self, items: I) -> Option<f64>
    where
        I: IntoIterator<Item = &'a ItemId>,
    {
        let shares: Vec<f64> = items
            .into_iter()
            .filter_map(|i| self.items.get(i)?.invr_at_shutoff)
            .map(|n| n as f64 / self.min_exposure as f64)
            .collect();
        (!shares.is_empty()).then(|| shares.iter().sum::<f64>() / shares.len() as f64)
    }

    /// Writes `item_id,visible,invr_visible,clicks,active`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item_id,visible,invr_visible,clicks,active")?;
        for (i, e) in &self.items {
            writeln!(out, "{i},{},{},{},{}", e.visible, e.invr_visible, e.clicks, u8::from(e.active))?;
        }
        Ok(())
    }
}

/// Items of the selected publishers still below the minimum exposure, by id.
///
/// `catalog` should already exclude items that are unavailable (not yet
/// released or expired). Items missing from the ledger count as unexposed.
pub fn select_treated_items<I>(
    ledger: &ExposureLedger,
    catalog: I,
    selected_publishers: &BTreeSet<PublisherId>,
) -> Vec<ItemId>
where
    I: IntoIterator<Item = (ItemId, PublisherId)>,
{
    let mut out: Vec<ItemId> = catalog
        .into_iter()
        .filter(|(i, p)| selected_publishers.contains(p) && ledger.visible(*i) < ledger.min_exposure())
        .map(|(i, _)| i)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}
