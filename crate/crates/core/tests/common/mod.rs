//! Shared fixtures and independent reference implementations.
#![allow(dead_code)]

use std::collections::HashSet;

use alpharec::corpus::{filter_and_index, split_dataset, DatasetSplit, SplitConfig};
use alpharec::embed::EmbeddingMatrix;
use alpharec::graph::BipartiteGraph;
use alpharec::model::{AlphaRecParams, IdEmbeddingParams, Model, ModelKind, ModelParams, ProbeParams};
use alpharec::synth::SynthDataset;
use alpharec::train::{batch_loss, compute_gradients, LossKind, Objective, TrainBatch};
use alpharec::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

/// Random bipartite edges where every user has at least one item.
pub fn random_edges(n_users: usize, n_items: usize, density: f64, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n_users {
        edges.push((u, rng.random_range(0..n_items)));
        for i in 0..n_items {
            if rng.random::<f64>() < density {
                edges.push((u, i));
            }
        }
    }
    edges
}

/// Dense normalized-adjacency propagation, computed from scratch.
pub fn dense_propagate(
    n_users: usize,
    n_items: usize,
    edges: &[(usize, usize)],
    users: &Matrix<f64>,
    items: &Matrix<f64>,
) -> (Matrix<f64>, Matrix<f64>) {
    let mut adj = vec![vec![0.0f64; n_items]; n_users];
    for &(u, i) in edges {
        adj[u][i] = 1.0;
    }
    let du: Vec<f64> = adj.iter().map(|r| r.iter().sum()).collect();
    let di: Vec<f64> = (0..n_items).map(|i| adj.iter().map(|r| r[i]).sum()).collect();
    let d = users.cols();
    let mut nu = Matrix::zeros(n_users, d);
    let mut ni = Matrix::zeros(n_items, d);
    for u in 0..n_users {
        for i in 0..n_items {
            if adj[u][i] == 0.0 {
                continue;
            }
            let w = 1.0 / (du[u].sqrt() * di[i].sqrt());
            for c in 0..d {
                nu[(u, c)] += w * items[(i, c)];
                ni[(i, c)] += w * users[(u, c)];
            }
        }
    }
    (nu, ni)
}

/// Per-user metrics straight from the definitions, averaged over users with
/// a non-empty target set. Returns (recall, ndcg, hit ratio, users).
pub fn reference_metrics(topk: &[Vec<usize>], targets: &[Vec<usize>], k: usize) -> (f64, f64, f64, usize) {
    let (mut recall, mut ndcg, mut hr, mut n) = (0.0, 0.0, 0.0, 0usize);
    for (list, t) in topk.iter().zip(targets) {
        if t.is_empty() {
            continue;
        }
        n += 1;
        let truth: HashSet<usize> = t.iter().copied().collect();
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, item) in list.iter().take(k).enumerate() {
            if truth.contains(item) {
                hits += 1;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let ideal: f64 = (1..=k.min(truth.len())).map(|r| 1.0 / ((r + 1) as f64).log2()).sum();
        recall += hits as f64 / truth.len() as f64;
        ndcg += dcg / ideal;
        hr += if hits > 0 { 1.0 } else { 0.0 };
    }
    if n == 0 {
        return (0.0, 0.0, 0.0, 0);
    }
    let n_f = n as f64;
    (recall / n_f, ndcg / n_f, hr / n_f, n)
}

/// Filters at 20, splits 4:3:3 and aligns the generated features.
pub fn prepare(d: &SynthDataset, tag: usize) -> (DatasetSplit, EmbeddingMatrix) {
    let idx = filter_and_index(&d.interactions, 20).expect("filter");
    let split = split_dataset(&idx, &SplitConfig::default()).expect("split").with_tag(tag);
    let feats = d.features.align_to(&split.id_maps.items).expect("align");
    (split, feats)
}

/// A 20-user / 30-item instance in 64-bit mode for derivative checks.
pub struct GradInstance {
    pub graph: BipartiteGraph,
    pub features: Matrix<f64>,
    pub batch: TrainBatch,
}

pub fn grad_instance(seed: u64, loss: LossKind) -> GradInstance {
    let mut r = rng(seed);
    let (n_users, n_items) = (20, 30);
    let edges = random_edges(n_users, n_items, 0.1, &mut r);
    let graph = BipartiteGraph::from_edges(n_users, n_items, &edges).unwrap();
    let features = gaussian_matrix(n_items, 6, &mut r);
    let n_neg = match loss {
        LossKind::InfoNce => 5,
        LossKind::Bpr => 1,
    };
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for u in 0..n_users {
        let items = graph.user_items(u);
        positives.push((u, items[r.random_range(0..items.len())]));
        negatives.push((0..n_neg).map(|_| r.random_range(0..n_items)).collect());
    }
    GradInstance {
        graph,
        features,
        batch: TrainBatch { positives, negatives },
    }
}

pub fn grad_model(kind: ModelKind, layers: usize, seed: u64) -> Model<f64> {
    // scaled-up init keeps pre-activations away from the LeakyReLU kink
    let params = match kind {
        ModelKind::Probe => ModelParams::Probe(ProbeParams::init(6, 4, seed)),
        ModelKind::AlphaRec => {
            let mut p = AlphaRecParams::init(6, 8, 4, 0.01, seed);
            let mut r = rng(seed ^ 0x5eed);
            p.b1 = gaussian_matrix(1, 8, &mut r).scaled(0.3);
            p.b2 = gaussian_matrix(1, 4, &mut r).scaled(0.3);
            ModelParams::AlphaRec(p)
        }
        ModelKind::Id => ModelParams::Id(IdEmbeddingParams::init(20, 30, 4, seed)),
    };
    Model { params, layers }
}

/// Largest entrywise relative error between analytic and central-difference
/// gradients, with `floor` guarding near-zero entries.
#[allow(clippy::needless_range_loop)]
pub fn max_gradient_error(
    model: &Model<f64>,
    inst: &GradInstance,
    obj: &Objective,
    h: f64,
    floor: f64,
) -> f64 {
    let features = (model.kind() != ModelKind::Id).then_some(&inst.features);
    let analytic = compute_gradients(model, features, &inst.graph, &inst.batch, obj).unwrap();
    let grads = analytic.grads.tensors();
    let mut worst = 0.0f64;
    let n_tensors = grads.len();
    for t in 0..n_tensors {
        let n = grads[t].1.as_slice().len();
        for j in 0..n {
            let mut plus = model.clone();
            plus.params.tensors_mut()[t].as_mut_slice()[j] += h;
            let mut minus = model.clone();
            minus.params.tensors_mut()[t].as_mut_slice()[j] -= h;
            let fp = batch_loss(&plus, features, &inst.graph, &inst.batch, obj).unwrap();
            let fm = batch_loss(&minus, features, &inst.graph, &inst.batch, obj).unwrap();
            let numeric = (fp - fm) / (2.0 * h);
            let a = grads[t].1.as_slice()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}
