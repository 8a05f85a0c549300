mod common;

use alpharec::eval::{rank_users, ItemIndex};
use alpharec::graph::build_graph;
use alpharec::intent::{
    blend, intent_evaluate, intent_rank, make_intent_cases, project_query, BlendScope, IntentQuerySet,
};
use alpharec::model::{cosine_score, full_forward, AlphaRecParams, Model, ModelParams};
use alpharec::synth::{generate, SynthConfig};
use common::{prepare, rng};
use proptest::prelude::*;

fn fixture() -> (alpharec::corpus::DatasetSplit, alpharec::embed::EmbeddingMatrix, Model<f64>) {
    let d = generate(&SynthConfig { n_users: 40, n_items: 60, interactions_per_user: 25, d_lang: 12, d_latent: 4, ..Default::default() }).unwrap();
    let (split, feats) = prepare(&d, 0);
    let model = Model {
        params: ModelParams::AlphaRec(AlphaRecParams::init(12, 16, 6, 0.01, 5)),
        layers: 2,
    };
    (split, feats, model)
}

proptest! {
    #[test]
    fn blend_stays_on_the_segment(
        a in prop::collection::vec(-3.0f64..3.0, 4),
        b in prop::collection::vec(-3.0f64..3.0, 4),
        alpha in 0.0f64..=1.0,
    ) {
        let m = blend(&a, &b, alpha).unwrap();
        for k in 0..4 {
            let (lo, hi) = (a[k].min(b[k]), a[k].max(b[k]));
            prop_assert!(m[k] >= lo - 1e-12 && m[k] <= hi + 1e-12);
        }
    }

    #[test]
    fn self_cosine_grows_with_alpha(seed in any::<u64>()) {
        // K = 0, query = target's own layer-0 row
        let mut r = rng(seed);
        let base = common::gaussian_matrix(1, 5, &mut r).into_vec();
        let target = common::gaussian_matrix(1, 5, &mut r).into_vec();
        let mut prev = -2.0;
        for step in 0..=10 {
            let u = blend(&base, &target, step as f64 / 10.0).unwrap();
            let c = cosine_score(&u, &target).unwrap();
            prop_assert!(c >= prev - 1e-12);
            prev = c;
        }
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn zero_alpha_reproduces_the_base_ranking() {
    let (split, feats, model) = fixture();
    let g = build_graph(&split);
    let x = feats.to_matrix::<f64>();
    let out = full_forward(&model, Some(&x), &g).unwrap();
    let base = rank_users(&out.users, &out.items, &split.train, &vec![vec![0]; split.n_users()], 10).unwrap();
    for u in 0..split.n_users() {
        let q = project_query(&model, x.row(u % split.n_items())).unwrap();
        assert_eq!(intent_rank(&out, u, &q, 0.0, &split.train[u], 10).unwrap(), base[u]);
    }
}

#[test]
fn projected_item_feature_is_its_layer_zero_row() {
    let (split, feats, model) = fixture();
    let x = feats.to_matrix::<f64>();
    let out = full_forward(&model, Some(&x), &build_graph(&split)).unwrap();
    for i in [0, 7, split.n_items() - 1] {
        assert_eq!(project_query(&model, x.row(i)).unwrap(), out.item_layer0().row(i).to_vec());
    }
}

#[test]
fn evaluation_matches_a_per_case_reference() {
    let (split, feats, model) = fixture();
    let g = build_graph(&split);
    let x = feats.to_matrix::<f64>();
    let queries = IntentQuerySet::new(feats.clone(), split.n_items(), feats.dim()).unwrap();
    let cases = make_intent_cases(&split, 3);
    assert!(!cases.is_empty());
    for c in &cases {
        assert!(split.test[c.user].contains(&c.target));
        assert!(!split.train[c.user].contains(&c.target));
    }
    let alpha = 0.6;
    let got = intent_evaluate(&model, &x, &g, &split, &queries, &cases, alpha, 5, BlendScope::LayerZero).unwrap();
    // reference: rebuild each blended user by hand
    let out = full_forward(&model, Some(&x), &g).unwrap();
    let index = ItemIndex::new(&out.items);
    let mut hits = 0.0;
    let mut ndcg = 0.0;
    for c in &cases {
        let q = project_query(&model, x.row(c.query_row)).unwrap();
        let layers = &out.layers.users;
        let mut u: Vec<f64> = blend(layers[0].row(c.user), &q, alpha).unwrap();
        for m in &layers[1..] {
            for (a, v) in u.iter_mut().zip(m.row(c.user)) {
                *a += v;
            }
        }
        let u: Vec<f64> = u.iter().map(|v| v / 3.0).collect();
        let top = index.top_k(&u, &split.train[c.user], 5).unwrap();
        if let Some(pos) = top.iter().position(|&i| i == c.target) {
            hits += 1.0;
            ndcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let n = cases.len() as f64;
    assert!((got.hit_ratio - hits / n).abs() < 1e-12);
    assert!((got.ndcg - ndcg / n).abs() < 1e-12);
    assert_eq!(got.recall, got.hit_ratio);
}

#[test]
fn repropagated_scope_runs_and_matches_at_zero_alpha() {
    let (split, feats, model) = fixture();
    let g = build_graph(&split);
    let x = feats.to_matrix::<f64>();
    let queries = IntentQuerySet::new(feats.clone(), split.n_items(), feats.dim()).unwrap();
    let cases = make_intent_cases(&split, 3);
    let a = intent_evaluate(&model, &x, &g, &split, &queries, &cases, 0.0, 5, BlendScope::LayerZero).unwrap();
    let b = intent_evaluate(&model, &x, &g, &split, &queries, &cases, 0.0, 5, BlendScope::Repropagate).unwrap();
    assert_eq!(a, b);
    assert!(intent_evaluate(&model, &x, &g, &split, &queries, &cases, 1.2, 5, BlendScope::LayerZero).is_err());
}
