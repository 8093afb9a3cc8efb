//! Exact maximum-inner-product search over an immutable id -> vector store.
//!
//! Results follow one total order everywhere: score descending, then id
//! ascending. `top_n` and `rank_of` agree on it, so a target's rank is its
//! 1-based position in the full ordering.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::index::sample;
use thiserror::Error;

use crate::rng::{stream_rng, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum MipsError {
    #[error("cannot build an index from zero vectors")]
    Empty,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("id {0} is not in the index")]
    UnknownId(String),
    #[error("vector for id {0} has a non-finite coordinate")]
    NonFinite(String),
    #[error("malformed index file at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MipsError {
    fn from(e: std::io::Error) -> Self {
        MipsError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredId<Id> {
    pub id: Id,
    pub score: f64,
}

/// Coarse partition used by the approximate search path.
#[derive(Debug)]
struct Partition {
    centroids: Vec<f64>,
    lists: Vec<Vec<usize>>,
}

#[derive(Debug)]
pub struct MipsIndex<Id> {
    dim: usize,
    ids: Vec<Id>,
    vectors: Vec<f64>,
    partition: OnceLock<Partition>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `(score desc, position asc)`; positions are in id order.
#[inline]
fn order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl<Id> MipsIndex<Id>
where
    Id: Copy + Ord + Debug,
{
    pub fn build<I>(entries: I) -> Result<Self, MipsError>
    where
        I: IntoIterator<Item = (Id, Vec<f64>)>,
    {
        let mut entries: Vec<(Id, Vec<f64>)> = entries.into_iter().collect();
        if entries.is_empty() {
            return Err(MipsError::Empty);
        }
        let dim = entries[0].1.len();
        if dim == 0 {
            return Err(MipsError::DimensionMismatch { expected: 1, got: 0 });
        }
        entries.sort_by_key(|e| e.0);
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (id, v) in entries {
            if v.len() != dim {
                return Err(MipsError::DimensionMismatch { expected: dim, got: v.len() });
            }
            if ids.last() == Some(&id) {
                return Err(MipsError::DuplicateId(format!("{id:?}")));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MipsError::NonFinite(format!("{id:?}")));
            }
            ids.push(id);
            vectors.extend_from_slice(&v);
        }
        Ok(Self { dim, ids, vectors, partition: OnceLock::new() })
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

    /// Ids in ascending order.
    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn vector(&self, id: Id) -> Option<&[f64]> {
        self.position(id).map(|p| self.row(p))
    }

    #[inline]
    fn row(&self, p: usize) -> &[f64] {
        &self.vectors[p * self.dim..(p + 1) * self.dim]
    }

    fn position(&self, id: Id) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    fn check_query(&self, query: &[f64]) -> Result<(), MipsError> {
        if query.len() != self.dim {
            return Err(MipsError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        Ok(())
    }

    /// Adding `0.0` folds `-0.0` into `+0.0` so equal scores compare equal.
    #[inline]
    fn score(&self, p: usize, query: &[f64]) -> f64 {
        dot(self.row(p), query) + 0.0
    }

    fn select(&self, mut scored: Vec<(f64, usize)>, n: usize) -> Vec<ScoredId<Id>> {
        let n = n.min(scored.len());
        if n == 0 {
            return Vec::new();
        }
        if n < scored.len() {
            scored.select_nth_unstable_by(n - 1, order);
            scored.truncate(n);
        }
        scored.sort_unstable_by(order);
        scored.into_iter().map(|(score, p)| ScoredId { id: self.ids[p], score }).collect()
    }

    /// The `min(n, len)` entries with the largest inner product, best first.
    pub fn top_n(&self, query: &[f64], n: usize) -> Result<Vec<ScoredId<Id>>, MipsError> {
        self.check_query(query)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let scored = (0..self.len()).map(|p| (self.score(p, query), p)).collect();
        Ok(self.select(scored, n))
    }

    /// 1-based position of `target` in the full `top_n` ordering.
    pub fn rank_of(&self, query: &[f64], target: Id) -> Result<usize, MipsError> {
        self.check_query(query)?;
        let tp = self.position(target).ok_or_else(|| MipsError::UnknownId(format!("{target:?}")))?;
        let key = (self.score(tp, query), tp);
        let ahead = (0..self.len())
            .filter(|&p| p != tp && order(&(self.score(p, query), p), &key) == Ordering::Less)
            .count();
        Ok(ahead + 1)
    }

    /// Default number of exactly scored candidates for `top_n_approx`.
    pub fn default_probe_budget(&self) -> usize {
        (self.len() * 2 / 5).max(64).min(self.len())
    }

    /// Approximate top-n: scores only the vectors in the most promising
    /// partition cells, visiting cells by descending `q . centroid` until at
    /// least `probe_budget` vectors have been scored. A budget of `len()` is exhaustive and
    /// returns exactly `top_n`.
    pub fn top_n_approx(&self, query: &[f64], n: usize, probe_budget: usize) -> Result<Vec<ScoredId<Id>>, MipsError> {
        self.check_query(query)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        if probe_budget >= self.len() {
            return self.top_n(query, n);
        }
        let part = self.partition.get_or_init(|| self.build_partition());
        let mut cells: Vec<(f64, usize)> = (0..part.lists.len())
            .map(|c| {
                let centroid = &part.centroids[c * self.dim..(c + 1) * self.dim];
                (dot(centroid, query) + 0.0, c)
            })
            .collect();
        cells.sort_unstable_by(order);
        let mut scored = Vec::with_capacity(probe_budget + 64);
        for (_, c) in cells {
            if scored.len() >= probe_budget {
                break;
            }
            scored.extend(part.lists[c].iter().map(|&p| (self.score(p, query), p)));
        }
        Ok(self.select(scored, n))
    }

    /// Lloyd iterations from a seeded sample; cell count ~ sqrt(len).
    fn build_partition(&self) -> Partition {
        let n = self.len();
        let k = ((n as f64).sqrt().ceil() as usize).clamp(1, n);
        let dim = self.dim;
        let mut rng = stream_rng(n as u64, Stream::Approx, &[dim as u64]);
        let mut seeds: Vec<usize> = sample(&mut rng, n, k).into_vec();
        seeds.sort_unstable();
        let mut centroids: Vec<f64> = seeds.iter().flat_map(|&p| self.row(p).to_vec()).collect();
        let mut assign = vec![0usize; n];
        for _ in 0..10 {
            for (p, a) in assign.iter_mut().enumerate() {
                let v = self.row(p);
                let mut best = (f64::INFINITY, 0);
                for c in 0..k {
                    let cen = &centroids[c * dim..(c + 1) * dim];
                    let d: f64 = v.iter().zip(cen).map(|(x, y)| (x - y) * (x - y)).sum();
                    if d < best.0 {
                        best = (d, c);
                    }
                }
                *a = best.1;
            }
            let mut sums = vec![0.0; k * dim];
            let mut counts = vec![0usize; k];
            for (p, &c) in assign.iter().enumerate() {
                counts[c] += 1;
                for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(self.row(p)) {
                    *s += x;
                }
            }
            for c in 0..k {
                if counts[c] > 0 {
                    for j in 0..dim {
                        centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                    }
                }
            }
        }
        let mut lists = vec![Vec::new(); k];
        for (p, &c) in assign.iter().enumerate() {
            lists[c].push(p);
        }
        Partition { centroids, lists }
    }
}

impl<Id> MipsIndex<Id>
where
    Id: Copy + Ord + Debug + Display + FromStr,
{
    /// Same text layout as the embedding table: `dim=<d>` then `id,v1,...,vd`.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<(), MipsError> {
        writeln!(out, "dim={}", self.dim)?;
        for (p, id) in self.ids.iter().enumerate() {
            write!(out, "{id}")?;
            for x in self.row(p) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, MipsError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(MipsError::Format { line: 1, reason: "missing header".into() })??;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| MipsError::Format { line: 1, reason: format!("bad header `{header}`") })?;
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| MipsError::Format { line: n + 2, reason };
            let mut fields = line.split(',');
            let id = fields
                .next()
                .and_then(|f| f.trim().parse::<Id>().ok())
                .ok_or_else(|| bad("bad id".into()))?;
            let v = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(e.to_string()))?;
            if v.len() != dim {
                return Err(bad(format!("expected {dim} values, got {}", v.len())));
            }
            entries.push((id, v));
        }
        Self::build(entries)
    }
}
