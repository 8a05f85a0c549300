//! All-ranking evaluation: top-K retrieval by cosine score with training
//! positives masked, Recall/NDCG/HR@K, the Random and Pop strategies, and
//! zero-shot evaluation of a frozen model on another dataset.

use std::cmp::Ordering;

use rand::seq::IteratorRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetSplit;
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::build_graph;
use crate::linalg::{dot, norm, Matrix, Scalar};
use crate::model::{full_forward, Model, ModelOutput};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hit_ratio: f64,
    pub n_users_evaluated: usize,
}

/// Item representations scaled to unit length; zero rows stay zero and score 0.
#[derive(Debug, Clone)]
pub struct ItemIndex<T> {
    unit: Matrix<T>,
}

fn unit_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = norm(row);
        if n > T::zero() {
            row.iter_mut().for_each(|v| *v = *v / n);
        }
    }
    out
}

fn unit<T: Scalar>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    if n > T::zero() {
        v.iter().map(|&x| x / n).collect()
    } else {
        v.to_vec()
    }
}

impl<T: Scalar> ItemIndex<T> {
    pub fn new(items: &Matrix<T>) -> Self {
        ItemIndex { unit: unit_rows(items) }
    }

    pub fn n_items(&self) -> usize {
        self.unit.rows()
    }

    pub fn scores(&self, user: &[T]) -> Vec<T> {
        let u = unit(user);
        self.unit.row_iter().map(|row| dot(&u, row)).collect()
    }

    /// Top-`k` items by descending cosine score, skipping the sorted `mask`;
    /// ties go to the lower item index.
    pub fn top_k(&self, user: &[T], mask: &[usize], k: usize) -> Result<Vec<usize>> {
        if user.len() != self.unit.cols() {
            return Err(Error::Shape(format!(
                "{}-dim user against {}-dim items",
                user.len(),
                self.unit.cols()
            )));
        }
        let available = self.n_items() - mask.iter().filter(|&&i| i < self.n_items()).count();
        if k > available {
            return Err(Error::Invalid(format!(
                "K = {k} exceeds the {available} unmasked items"
            )));
        }
        let scores = self.scores(user);
        let mut candidates: Vec<usize> = (0..self.n_items())
            .filter(|i| mask.binary_search(i).is_err())
            .collect();
        let cmp = |a: &usize, b: &usize| -> Ordering {
            scores[*b]
                .partial_cmp(&scores[*a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(b))
        };
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < candidates.len() {
            candidates.select_nth_unstable_by(k - 1, cmp);
            candidates.truncate(k);
        }
        candidates.sort_by(cmp);
        Ok(candidates)
    }
}

pub fn rank_items<T: Scalar>(user: &[T], items: &Matrix<T>, mask: &[usize], k: usize) -> Result<Vec<usize>> {
    ItemIndex::new(items).top_k(user, mask, k)
}

/// Standard binary-relevance Recall, NDCG and HR at `k`, averaged over
/// users with a non-empty target set. Only the first `k` entries of each
/// list count.
pub fn metrics_at_k(topk: &[Vec<usize>], targets: &[Vec<usize>], k: usize) -> RankingMetrics {
    let (mut recall, mut ndcg, mut hits_any, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (list, target) in topk.iter().zip(targets) {
        if target.is_empty() {
            continue;
        }
        n += 1;
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (r, item) in list.iter().take(k).enumerate() {
            if target.contains(item) {
                hits += 1;
                dcg += 1.0 / ((r + 2) as f64).log2();
            }
        }
        let idcg: f64 = (0..k.min(target.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
        recall += hits as f64 / target.len() as f64;
        if idcg > 0.0 {
            ndcg += dcg / idcg;
        }
        if hits > 0 {
            hits_any += 1.0;
        }
    }
    let denom = n.max(1) as f64;
    RankingMetrics {
        k,
        recall: recall / denom,
        ndcg: ndcg / denom,
        hit_ratio: hits_any / denom,
        n_users_evaluated: n,
    }
}

/// Which held-out set to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeldOut {
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    /// Also hide validation positives when ranking for the test set.
    pub mask_validation: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 20,
            mask_validation: false,
        }
    }
}

fn merged_mask(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = a.iter().chain(b).copied().collect();
    m.sort_unstable();
    m.dedup();
    m
}

/// Top-K lists for every user with a non-empty target set (others get an
/// empty list). `k` is capped at each user's number of unmasked items.
pub fn rank_users<T: Scalar>(
    users: &Matrix<T>,
    items: &Matrix<T>,
    masks: &[Vec<usize>],
    targets: &[Vec<usize>],
    k: usize,
) -> Result<Vec<Vec<usize>>> {
    let index = ItemIndex::new(items);
    (0..users.rows())
        .into_par_iter()
        .map(|u| {
            if targets[u].is_empty() {
                return Ok(Vec::new());
            }
            let k_u = k.min(items.rows().saturating_sub(masks[u].len()));
            index.top_k(users.row(u), &masks[u], k_u)
        })
        .collect()
}

/// Ranks held-out items for every user of `split` from final representations.
pub fn evaluate_output<T: Scalar>(
    output: &ModelOutput<T>,
    split: &DatasetSplit,
    held_out: HeldOut,
    opts: &EvalOptions,
) -> Result<RankingMetrics> {
    let targets = match held_out {
        HeldOut::Validation => &split.validation,
        HeldOut::Test => &split.test,
    };
    let masks: Vec<Vec<usize>> = if held_out == HeldOut::Test && opts.mask_validation {
        split
            .train
            .iter()
            .zip(&split.validation)
            .map(|(t, v)| merged_mask(t, v))
            .collect()
    } else {
        split.train.clone()
    };
    let topk = rank_users(&output.users, &output.items, &masks, targets, opts.k)?;
    Ok(metrics_at_k(&topk, targets, opts.k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Random,
    Pop,
}

/// Item indices by descending training popularity, ties by ascending index.
pub fn popularity_order(split: &DatasetSplit) -> Vec<usize> {
    let mut counts = vec![0usize; split.n_items()];
    for &i in split.train.iter().flatten() {
        counts[i] += 1;
    }
    let mut order: Vec<usize> = (0..split.n_items()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order
}

/// Top-K lists of a non-learned strategy, training positives excluded.
pub fn strategy_topk(kind: StrategyKind, split: &DatasetSplit, k: usize, seed: u64) -> Vec<Vec<usize>> {
    match kind {
        StrategyKind::Pop => {
            let order = popularity_order(split);
            split
                .train
                .iter()
                .map(|train| {
                    order
                        .iter()
                        .copied()
                        .filter(|i| train.binary_search(i).is_err())
                        .take(k)
                        .collect()
                })
                .collect()
        }
        StrategyKind::Random => split
            .train
            .iter()
            .enumerate()
            .map(|(u, train)| {
                let mut rng = rng_for(seed, &format!("baseline/random/{u}"));
                let pool = (0..split.n_items()).filter(|i| train.binary_search(i).is_err());
                let mut picked = pool.choose_multiple(&mut rng, k);
                // choose_multiple does not randomize order; shuffle so rank positions are uniform too
                rand::seq::SliceRandom::shuffle(picked.as_mut_slice(), &mut rng);
                picked
            })
            .collect(),
    }
}

pub fn strategy_baseline(kind: StrategyKind, split: &DatasetSplit, k: usize, seed: u64) -> RankingMetrics {
    metrics_at_k(&strategy_topk(kind, split, k, seed), &split.test, k)
}

/// Evaluates a frozen language-space model on a dataset it never saw: user
/// features and graph come from the target's training split, scores from
/// its test split.
pub fn zero_shot_evaluate<T: Scalar>(
    model: &Model<T>,
    target: &DatasetSplit,
    target_features: &EmbeddingMatrix,
    layers: usize,
    opts: &EvalOptions,
) -> Result<RankingMetrics> {
    let want = model
        .params
        .input_dim()
        .ok_or_else(|| Error::Invalid("ID models cannot transfer to unseen items".into()))?;
    if target_features.dim() != want {
        return Err(Error::Shape(format!(
            "model expects {want}-dim features, target has {}",
            target_features.dim()
        )));
    }
    let features = target_features.to_matrix::<T>();
    let g = build_graph(target);
    let frozen = Model {
        params: model.params.clone(),
        layers,
    };
    let out = full_forward(&frozen, Some(&features), &g)?;
    evaluate_output(&out, target, HeldOut::Test, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IdMap, IdMaps};

    fn items3() -> Matrix<f64> {
        // unit user [1, 0] scores (0.9, 0.1, 0.5)
        Matrix::from_fn(3, 2, |r, c| {
            let s = [0.9f64, 0.1, 0.5][r];
            if c == 0 {
                s
            } else {
                (1.0 - s * s).sqrt()
            }
        })
    }

    #[test]
    fn rank_examples() {
        let items = items3();
        assert_eq!(rank_items(&[1.0, 0.0], &items, &[], 2).unwrap(), vec![0, 2]);
        assert_eq!(rank_items(&[1.0, 0.0], &items, &[0], 2).unwrap(), vec![2, 1]);
        assert!(rank_items(&[1.0, 0.0], &items, &[0, 1], 2).is_err());
    }

    #[test]
    fn ties_break_by_index() {
        let items = Matrix::<f64>::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(rank_items(&[1.0], &items, &[], 3).unwrap(), vec![0, 1, 2]);
        assert_eq!(rank_items(&[1.0], &items, &[1], 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn perfect_and_empty_rankings() {
        let m = metrics_at_k(&[vec![3, 4, 9]], &[vec![3, 4]], 3);
        assert_eq!((m.recall, m.ndcg, m.hit_ratio), (1.0, 1.0, 1.0));
        let z = metrics_at_k(&[vec![1, 2]], &[vec![3, 4]], 2);
        assert_eq!((z.recall, z.ndcg, z.hit_ratio), (0.0, 0.0, 0.0));
        let skip = metrics_at_k(&[vec![1], vec![]], &[vec![1], vec![]], 1);
        assert_eq!(skip.n_users_evaluated, 1);
    }

    fn split(train: Vec<Vec<usize>>, test: Vec<Vec<usize>>, n_items: usize) -> DatasetSplit {
        let n = train.len();
        DatasetSplit {
            train,
            validation: vec![Vec::new(); n],
            test,
            id_maps: IdMaps {
                users: IdMap::from_ids((0..n).map(|u| format!("u{u}")).collect()).unwrap(),
                items: IdMap::from_ids((0..n_items).map(|i| format!("i{i}")).collect()).unwrap(),
            },
            dataset_tag: 0,
        }
    }

    #[test]
    fn pop_puts_the_most_popular_unseen_item_first() {
        // item 0 is in every other user's train; user 3 has not seen it
        let s = split(
            vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![4]],
            vec![vec![], vec![], vec![], vec![0]],
            5,
        );
        let top = strategy_topk(StrategyKind::Pop, &s, 1, 0);
        assert_eq!(top[3], vec![0]);
        assert_eq!(strategy_baseline(StrategyKind::Pop, &s, 1, 0).recall, 1.0);
    }

    #[test]
    fn exhaustive_random_recovers_everything() {
        let s = split(vec![vec![0], vec![1, 2]], vec![vec![3, 4], vec![0]], 5);
        let m = strategy_baseline(StrategyKind::Random, &s, 4, 9);
        assert_eq!(m.recall, 1.0);
        let again = strategy_topk(StrategyKind::Random, &s, 2, 9);
        assert_eq!(again, strategy_topk(StrategyKind::Random, &s, 2, 9));
    }
}
