use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{pool_into, EmbeddingError, ItemEmbeddingTable, TrainConfig, TrainingExample};
use crate::ids::ItemId;
use crate::rng::{stream_rng, Stream};

/// An example with ids resolved to table rows.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedExample {
    pub history: Vec<usize>,
    pub item: usize,
    pub clicked: bool,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against the label, in a form that
/// does not overflow for large |z|.
#[inline]
fn bce_with_logit(z: f64, clicked: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if clicked {
        softplus - z
    } else {
        softplus
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_example(table: &ItemEmbeddingTable, ex: &TrainingExample<'_>) -> Result<(), EmbeddingError> {
    if ex.history.is_empty() {
        return Err(EmbeddingError::EmptyHistory);
    }
    for &id in ex.history.iter().chain(std::iter::once(&ex.item)) {
        if !table.contains(id) {
            return Err(EmbeddingError::UnknownItem(id));
        }
    }
    Ok(())
}

/// Loss of a single example under the current table.
pub fn example_loss(table: &ItemEmbeddingTable, ex: &TrainingExample<'_>) -> Result<f64, EmbeddingError> {
    check_example(table, ex)?;
    let mut user = vec![0.0; table.dim()];
    pool_into(ex.history, table, &mut user)?;
    let target = table.get(ex.item).ok_or(EmbeddingError::UnknownItem(ex.item))?;
    Ok(bce_with_logit(dot(&user, target), ex.clicked))
}

pub fn mean_loss(table: &ItemEmbeddingTable, examples: &[TrainingExample<'_>]) -> Result<f64, EmbeddingError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        total += example_loss(table, ex)?;
    }
    Ok(total / examples.len() as f64)
}

/// Analytic gradient of `example_loss` with respect to every item vector it touches.
///
/// With `u = mean(history)` and `z = u . v_target`, the target receives
/// `(sigmoid(z) - y) u` and each history occurrence receives
/// `(sigmoid(z) - y) v_target / |history|`.
pub fn example_gradient(
    table: &ItemEmbeddingTable,
    ex: &TrainingExample<'_>,
) -> Result<BTreeMap<ItemId, Vec<f64>>, EmbeddingError> {
    check_example(table, ex)?;
    let dim = table.dim();
    let mut user = vec![0.0; dim];
    pool_into(ex.history, table, &mut user)?;
    let target = table.get(ex.item).expect("checked");
    let g = sigmoid(dot(&user, target)) - f64::from(u8::from(ex.clicked));
    let mut out: BTreeMap<ItemId, Vec<f64>> = BTreeMap::new();
    let inv = 1.0 / ex.history.len() as f64;
    for &h in ex.history {
        let acc = out.entry(h).or_insert_with(|| vec![0.0; dim]);
        for k in 0..dim {
            acc[k] += g * target[k] * inv;
        }
    }
    let acc = out.entry(ex.item).or_insert_with(|| vec![0.0; dim]);
    for k in 0..dim {
        acc[k] += g * user[k];
    }
    Ok(out)
}

/// Trains item embeddings with binary cross-entropy on `sigmoid(user . item)`
/// and per-coordinate adaptive-gradient updates.
///
/// Without `initial`, a fresh table is initialized over every item that the
/// examples mention. Example order is reshuffled every epoch from
/// `config.seed`; the last short batch of an epoch is kept.
pub fn train(
    examples: &[TrainingExample<'_>],
    config: &TrainConfig,
    initial: Option<ItemEmbeddingTable>,
) -> Result<ItemEmbeddingTable, EmbeddingError> {
    config.validate()?;
    let mut table = match initial {
        Some(t) => {
            if t.dim() != config.dim {
                return Err(EmbeddingError::InvalidConfig(format!(
                    "initial table has dim {} but config.dim is {}",
                    t.dim(),
                    config.dim
                )));
            }
            t
        }
        None => {
            let ids = examples
                .iter()
                .flat_map(|e| e.history.iter().copied().chain(std::iter::once(e.item)));
            ItemEmbeddingTable::random(ids, config.dim, config.init_scale, config.seed)?
        }
    };
    if examples.is_empty() || config.epochs == 0 {
        return Ok(table);
    }
    let resolved = examples
        .iter()
        .map(|ex| {
            check_example(&table, ex)?;
            Ok(ResolvedExample {
                history: ex.history.iter().map(|&h| table.position(h).expect("checked")).collect(),
                item: table.position(ex.item).expect("checked"),
                clicked: ex.clicked,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    train_resolved(&resolved, config, &mut table);
    Ok(table)
}

/// Training loop over pre-resolved examples. `config` must already be valid.
pub(crate) fn train_resolved(examples: &[ResolvedExample], config: &TrainConfig, table: &mut ItemEmbeddingTable) {
    let dim = table.dim();
    let n_rows = table.len();
    let mut grad = vec![0.0; n_rows * dim];
    let mut touched_flag = vec![false; n_rows];
    let mut touched: Vec<usize> = Vec::new();
    let mut user = vec![0.0; dim];
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 0..config.epochs {
        order.sort_unstable();
        let mut rng = stream_rng(config.seed, Stream::Training, &[u64::from(epoch)]);
        order.shuffle(&mut rng);

        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &e in batch {
                let ex = &examples[e];
                user.iter_mut().for_each(|x| *x = 0.0);
                for &h in &ex.history {
                    for (u, x) in user.iter_mut().zip(table.row(h)) {
                        *u += x;
                    }
                }
                let inv = 1.0 / ex.history.len() as f64;
                user.iter_mut().for_each(|x| *x *= inv);
                let target = table.row(ex.item);
                let g = (sigmoid(dot(&user, target)) - f64::from(u8::from(ex.clicked))) * scale;

                for &h in &ex.history {
                    if !touched_flag[h] {
                        touched_flag[h] = true;
                        touched.push(h);
                    }
                    let gh = &mut grad[h * dim..(h + 1) * dim];
                    for k in 0..dim {
                        gh[k] += g * target[k] * inv;
                    }
                }
                if !touched_flag[ex.item] {
                    touched_flag[ex.item] = true;
                    touched.push(ex.item);
                }
                let gt = &mut grad[ex.item * dim..(ex.item + 1) * dim];
                for k in 0..dim {
                    gt[k] += g * user[k];
                }
            }
            touched.sort_unstable();
            for &p in &touched {
                table.adagrad_step(p, &grad[p * dim..(p + 1) * dim], config.learning_rate, config.optimizer_epsilon);
                grad[p * dim..(p + 1) * dim].iter_mut().for_each(|x| *x = 0.0);
                touched_flag[p] = false;
            }
            touched.clear();
        }
    }
}
