//! Interaction records: the unit of training data and of every metric.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::{ItemId, Tick, UserId};

/// Where a slate position came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Source {
    Organic,
    Invr,
    #[serde(rename = "COLDSTART")]
    ColdStart,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Organic => "ORGANIC",
            Source::Invr => "INVR",
            Source::ColdStart => "COLDSTART",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ORGANIC" => Ok(Source::Organic),
            "INVR" => Ok(Source::Invr),
            "COLDSTART" => Ok(Source::ColdStart),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// Marks a record that carries no history snapshot.
pub const NO_SNAPSHOT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionRecord {
    pub tick: Tick,
    pub user: UserId,
    pub item: ItemId,
    /// 1-based slate position.
    pub position: u8,
    pub visible: bool,
    pub clicked: bool,
    pub source: Source,
    /// Index into [`InteractionLog::snapshot`]: the user's history when the slate was shown.
    pub history: u32,
}

/// An append-only event log with shared per-visit history snapshots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    pub records: Vec<InteractionRecord>,
    snapshots: Vec<Vec<ItemId>>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a history snapshot and returns its handle.
    pub fn add_snapshot(&mut self, items: &[ItemId]) -> u32 {
        self.snapshots.push(items.to_vec());
        (self.snapshots.len() - 1) as u32
    }

    pub fn snapshot(&self, handle: u32) -> &[ItemId] {
        if handle == NO_SNAPSHOT {
            &[]
        } else {
            &self.snapshots[handle as usize]
        }
    }

    pub fn push(&mut self, r: InteractionRecord) {
        debug_assert!(!r.clicked || r.visible, "clicked implies visible");
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn extend(&mut self, other: InteractionLog) {
        let offset = self.snapshots.len() as u32;
        self.snapshots.extend(other.snapshots);
        self.records.extend(other.records.into_iter().map(|mut r| {
            if r.history != NO_SNAPSHOT {
                r.history += offset;
            }
            r
        }));
    }

    /// Writes `tick,user_id,item_id,position,visible,clicked,source`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tick,user_id,item_id,position,visible,clicked,source")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.tick,
                r.user,
                r.item,
                r.position,
                u8::from(r.visible),
                u8::from(r.clicked),
                r.source
            )?;
        }
        Ok(())
    }
}

/// Visible impressions per (user, item), across all sources.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpressionHistory {
    /// Per user, sorted by item.
    counts: HashMap<UserId, Vec<(ItemId, u32)>>,
}

impl ImpressionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, user: UserId, item: ItemId) {
        let row = self.counts.entry(user).or_default();
        match row.binary_search_by_key(&item, |e| e.0) {
            Ok(k) => row[k].1 += 1,
            Err(k) => row.insert(k, (item, 1)),
        }
    }

    pub fn count(&self, user: UserId, item: ItemId) -> u32 {
        self.counts
            .get(&user)
            .and_then(|row| row.binary_search_by_key(&item, |e| e.0).ok().map(|k| row[k].1))
            .unwrap_or(0)
    }

    /// Items the user has seen, ascending, with their counts.
    pub fn seen_by(&self, user: UserId) -> &[(ItemId, u32)] {
        self.counts.get(&user).map_or(&[], Vec::as_slice)
    }

    pub fn max_count(&self) -> u32 {
        self.counts.values().flatten().map(|e| e.1).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut log = InteractionLog::new();
        let h = log.add_snapshot(&[ItemId(4)]);
        log.push(InteractionRecord {
            tick: 3,
            user: UserId(1),
            item: ItemId(9),
            position: 5,
            visible: true,
            clicked: false,
            source: Source::Invr,
            history: h,
        });
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "tick,user_id,item_id,position,visible,clicked,source\n3,1,9,5,1,0,INVR\n"
        );
        assert_eq!(log.snapshot(h), &[ItemId(4)]);
    }

    #[test]
    fn extend_rebases_snapshots() {
        let mut a = InteractionLog::new();
        a.add_snapshot(&[ItemId(1)]);
        let mut b = InteractionLog::new();
        let h = b.add_snapshot(&[ItemId(2)]);
        b.push(InteractionRecord {
            tick: 0,
            user: UserId(0),
            item: ItemId(0),
            position: 1,
            visible: true,
            clicked: true,
            source: Source::Organic,
            history: h,
        });
        a.extend(b);
        assert_eq!(a.snapshot(a.records[0].history), &[ItemId(2)]);
    }

    #[test]
    fn source_round_trips_through_text() {
        for s in [Source::Organic, Source::Invr, Source::ColdStart] {
            assert_eq!(s.to_string().parse::<Source>().unwrap(), s);
        }
    }
}
