use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;

use super::EmbeddingError;
use crate::ids::ItemId;
use crate::rng::{stream_rng, Stream};

/// Learned item vectors plus the per-coordinate squared-gradient sums used by
/// the adaptive-gradient optimizer.
///
/// Rows are stored contiguously in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddingTable {
    dim: usize,
    ids: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    values: Vec<f64>,
    accumulators: Vec<f64>,
}

impl ItemEmbeddingTable {
    /// Builds a table from explicit rows. Accumulators start at zero.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (ItemId, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(EmbeddingError::InvalidConfig("dim must be >= 1".into()));
        }
        let mut rows: Vec<(ItemId, Vec<f64>)> = rows.into_iter().collect();
        rows.sort_by_key(|(id, _)| *id);
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFinite(id));
            }
            if ids.last() == Some(&id) {
                return Err(EmbeddingError::DuplicateItem(id));
            }
            ids.push(id);
            values.extend_from_slice(&v);
        }
        let index = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let accumulators = vec![0.0; values.len()];
        Ok(Self { dim, ids, index, values, accumulators })
    }

    /// Uniform initialization in `[-scale, scale]`, seeded.
    pub fn random<I>(ids: I, dim: usize, scale: f64, seed: u64) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = ItemId>,
    {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(EmbeddingError::InvalidConfig("init_scale must be > 0".into()));
        }
        let mut ids: Vec<ItemId> = ids.into_iter().collect();
        ids.sort();
        ids.dedup();
        let mut rng = stream_rng(seed, Stream::Training, &[u64::MAX]);
        let rows = ids
            .into_iter()
            .map(|id| {
                let v = (0..dim).map(|_| rng.random_range(-scale..=scale)).collect();
                (id, v)
            })
            .collect::<Vec<_>>();
        Self::from_rows(dim, rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Item ids in ascending order.
    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn position(&self, id: ItemId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn get(&self, id: ItemId) -> Option<&[f64]> {
        self.position(id).map(|p| self.row(p))
    }

    pub fn accumulator(&self, id: ItemId) -> Option<&[f64]> {
        self.position(id)
            .map(|p| &self.accumulators[p * self.dim..(p + 1) * self.dim])
    }

    #[inline]
    pub fn row(&self, pos: usize) -> &[f64] {
        &self.values[pos * self.dim..(pos + 1) * self.dim]
    }

    #[cfg(test)]
    pub(crate) fn row_mut(&mut self, pos: usize) -> &mut [f64] {
        &mut self.values[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Row-major matrix of all vectors, in `ids()` order.
    pub fn matrix(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, &[f64])> + '_ {
        self.ids.iter().enumerate().map(move |(p, id)| (*id, self.row(p)))
    }

    /// One adaptive-gradient step on a single row.
    pub(crate) fn adagrad_step(&mut self, pos: usize, grad: &[f64], lr: f64, eps: f64) {
        let range = pos * self.dim..(pos + 1) * self.dim;
        let acc = &mut self.accumulators[range.clone()];
        let vals = &mut self.values[range];
        for k in 0..grad.len() {
            acc[k] += grad[k] * grad[k];
            vals[k] -= lr * grad[k] / (acc[k].sqrt() + eps);
        }
    }

    /// Writes the `dim=<d>` header followed by one `item_id,v1,...,vd` row per item.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), EmbeddingError> {
        writeln!(out, "dim={}", self.dim)?;
        for (id, v) in self.iter() {
            write!(out, "{id}")?;
            for x in v {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, EmbeddingError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| EmbeddingError::Format { line: 1, reason: "missing header".into() })??;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| EmbeddingError::Format {
                line: 1,
                reason: format!("expected `dim=<d>`, got `{header}`"),
            })?;
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            let lineno = n + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let id: ItemId = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| EmbeddingError::Format { line: lineno, reason: "bad item id".into() })?;
            let v = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::Format { line: lineno, reason: e.to_string() })?;
            if v.len() != dim {
                return Err(EmbeddingError::Format {
                    line: lineno,
                    reason: format!("expected {dim} values, got {}", v.len()),
                });
            }
            rows.push((id, v));
        }
        Self::from_rows(dim, rows)
    }
}
