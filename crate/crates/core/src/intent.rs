//! Intention-aware re-ranking: a projected query is blended into a user's
//! layer-0 representation of a frozen model.

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::eval::{metrics_at_k, ItemIndex, RankingMetrics};
use crate::graph::{layer_mean, propagate_layers, BipartiteGraph};
use crate::linalg::{Matrix, Scalar};
use crate::model::{full_forward, Model, ModelOutput};
use crate::seed::rng_for;

/// Cut-off used when scoring intention capture.
pub const INTENT_K: usize = 5;

/// One language-space query per item, row index = item index.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentQuerySet {
    queries: EmbeddingMatrix,
}

impl IntentQuerySet {
    pub fn new(queries: EmbeddingMatrix, n_items: usize, feature_dim: usize) -> Result<Self> {
        if queries.rows() != n_items || queries.dim() != feature_dim {
            return Err(Error::Shape(format!(
                "query matrix is {}x{}, expected {n_items}x{feature_dim}",
                queries.rows(),
                queries.dim()
            )));
        }
        Ok(IntentQuerySet { queries })
    }

    pub fn matrix(&self) -> &EmbeddingMatrix {
        &self.queries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentEvalCase {
    pub user: usize,
    pub target: usize,
    pub query_row: usize,
}

/// One held-out test item per user with a non-empty test set, chosen by a
/// per-user seeded draw.
pub fn make_intent_cases(split: &DatasetSplit, seed: u64) -> Vec<IntentEvalCase> {
    split
        .test
        .iter()
        .enumerate()
        .filter_map(|(u, items)| {
            let mut rng = rng_for(seed, &format!("intent/user/{u}"));
            items.choose(&mut rng).map(|&t| IntentEvalCase {
                user: u,
                target: t,
                query_row: t,
            })
        })
        .collect()
}

/// Maps one language-space query through the frozen item projection.
pub fn project_query<T: Scalar>(model: &Model<T>, query: &[T]) -> Result<Vec<T>> {
    let x = Matrix::from_vec(1, query.len(), query.to_vec())?;
    Ok(model.project(&x)?.into_vec())
}

/// Convex combination `(1 - alpha) * base + alpha * intent`.
pub fn blend<T: Scalar>(base: &[T], intent: &[T], alpha: f64) -> Result<Vec<T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Invalid(format!("intention strength {alpha} outside [0, 1]")));
    }
    if base.len() != intent.len() {
        return Err(Error::Shape(format!("blend of {} and {} dims", base.len(), intent.len())));
    }
    let a = T::of(alpha);
    let b = T::one() - a;
    Ok(base.iter().zip(intent).map(|(&x, &y)| b * x + a * y).collect())
}

/// How far the blended layer-0 row is pushed through the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendScope {
    /// Replace only the user's layer-0 term; every other layer stays frozen.
    #[default]
    LayerZero,
    /// Re-run propagation with the blended row in place.
    Repropagate,
}

/// The user's final representation after blending, under `LayerZero` scope.
pub fn blended_user<T: Scalar>(output: &ModelOutput<T>, user: usize, intent: &[T], alpha: f64) -> Result<Vec<T>> {
    let layers = &output.layers.users;
    if user >= layers[0].rows() {
        return Err(Error::Invalid(format!("user {user} out of range")));
    }
    let mut acc = blend(layers[0].row(user), intent, alpha)?;
    for m in &layers[1..] {
        for (a, &v) in acc.iter_mut().zip(m.row(user)) {
            *a += v;
        }
    }
    let n = T::of(layers.len() as f64);
    Ok(acc.into_iter().map(|v| v / n).collect())
}

fn repropagated<T: Scalar>(
    output: &ModelOutput<T>,
    g: &BipartiteGraph,
    user: usize,
    intent: &[T],
    alpha: f64,
) -> Result<(Vec<T>, Matrix<T>)> {
    let mut users0 = output.user_layer0().clone();
    if user >= users0.rows() {
        return Err(Error::Invalid(format!("user {user} out of range")));
    }
    let row = blend(users0.row(user), intent, alpha)?;
    users0.row_mut(user).copy_from_slice(&row);
    let stack = propagate_layers(g, users0, output.item_layer0().clone(), output.layers.n_layers())?;
    let users = layer_mean(&stack.users);
    Ok((users.row(user).to_vec(), layer_mean(&stack.items)))
}

/// Top-`k` items for `user` after blending a projected query at strength
/// `alpha`. `mask` is the user's sorted training list.
pub fn intent_rank<T: Scalar>(
    output: &ModelOutput<T>,
    user: usize,
    intent: &[T],
    alpha: f64,
    mask: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    let u = blended_user(output, user, intent, alpha)?;
    ItemIndex::new(&output.items).top_k(&u, mask, k)
}

/// As [`intent_rank`], re-propagating the blended row through `g`.
pub fn intent_rank_repropagated<T: Scalar>(
    output: &ModelOutput<T>,
    g: &BipartiteGraph,
    user: usize,
    intent: &[T],
    alpha: f64,
    mask: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    let (u, items) = repropagated(output, g, user, intent, alpha)?;
    ItemIndex::new(&items).top_k(&u, mask, k)
}

/// Single-target hit ratio and NDCG at `k` over `cases`. Recall equals the
/// hit ratio here since each case has one target.
#[allow(clippy::too_many_arguments)]
pub fn intent_evaluate<T: Scalar>(
    model: &Model<T>,
    features: &Matrix<T>,
    g: &BipartiteGraph,
    split: &DatasetSplit,
    queries: &IntentQuerySet,
    cases: &[IntentEvalCase],
    alpha: f64,
    k: usize,
    scope: BlendScope,
) -> Result<RankingMetrics> {
    blend(&[T::zero()], &[T::zero()], alpha)?;
    let output = full_forward(model, Some(features), g)?;
    let rows: Vec<usize> = cases.iter().map(|c| c.query_row).collect();
    if let Some(&bad) = rows.iter().find(|&&r| r >= queries.matrix().rows()) {
        return Err(Error::Invalid(format!("query row {bad} out of range")));
    }
    let projected = model.project(&queries.matrix().to_matrix::<T>().select_rows(&rows))?;
    let index = ItemIndex::new(&output.items);
    let topk = cases
        .par_iter()
        .enumerate()
        .map(|(n, c)| {
            if c.user >= split.n_users() {
                return Err(Error::Invalid(format!("case user {} out of range", c.user)));
            }
            let mask = &split.train[c.user];
            let k_u = k.min(split.n_items().saturating_sub(mask.len()));
            match scope {
                BlendScope::LayerZero => {
                    let u = blended_user(&output, c.user, projected.row(n), alpha)?;
                    index.top_k(&u, mask, k_u)
                }
                BlendScope::Repropagate => {
                    intent_rank_repropagated(&output, g, c.user, projected.row(n), alpha, mask, k_u)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<usize>> = cases.iter().map(|c| vec![c.target]).collect();
    Ok(metrics_at_k(&topk, &targets, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::BipartiteGraph;
    use crate::model::{ModelParams, ProbeParams};

    #[test]
    fn blend_examples() {
        let a = [1.0f64, 0.0];
        let b = [0.0f64, 1.0];
        assert_eq!(blend(&a, &b, 0.0).unwrap(), a.to_vec());
        assert_eq!(blend(&a, &b, 1.0).unwrap(), b.to_vec());
        assert_eq!(blend(&a, &b, 0.5).unwrap(), vec![0.5, 0.5]);
        assert!(blend(&a, &b, 1.5).is_err());
        assert!(blend(&a, &b, -0.1).is_err());
    }

    #[test]
    fn identity_probe_projection_is_the_query() {
        let model = Model {
            params: ModelParams::Probe(ProbeParams {
                weight: Matrix::<f64>::identity(3),
            }),
            layers: 0,
        };
        assert_eq!(project_query(&model, &[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
        assert!(project_query(&model, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn full_strength_query_of_an_item_ranks_it_first() {
        let x = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
        let g = BipartiteGraph::from_edges(1, 3, &[(0, 0)]).unwrap();
        let model = Model {
            params: ModelParams::Probe(ProbeParams {
                weight: Matrix::identity(2),
            }),
            layers: 0,
        };
        let out = full_forward(&model, Some(&x), &g).unwrap();
        let q = project_query(&model, x.row(2)).unwrap();
        assert_eq!(intent_rank(&out, 0, &q, 1.0, &[0], 1).unwrap(), vec![2]);
        // alpha 0 is the ordinary ranking: user = item 0, item 2 beats item 1
        assert_eq!(intent_rank(&out, 0, &q, 0.0, &[0], 2).unwrap(), vec![2, 1]);
    }
}
