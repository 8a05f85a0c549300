mod common;

use alpharec::corpus::{filter_and_index, split_dataset, SplitConfig};
use alpharec::embed::{
    load_matrix, shuffle_rows_with_permutation, user_language_features, write_matrix, EmbeddingMatrix,
};
use alpharec::synth::{generate, SynthConfig};
use alpharec::Matrix;
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Matrix<f32>> {
    (1usize..12, 1usize..9).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e6f32..1e6, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

proptest! {
    #[test]
    fn write_load_is_byte_exact(m in matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let (p, q) = (dir.path().join("a.arec"), dir.path().join("b.arec"));
        let em = EmbeddingMatrix::new(m.clone()).unwrap();
        write_matrix(&em, &p).unwrap();
        let back = load_matrix(&p).unwrap();
        prop_assert_eq!(back.values(), &m);
        write_matrix(&back, &q).unwrap();
        prop_assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn shuffle_then_inverse_is_identity(m in matrix(), seed in any::<u64>()) {
        let em = EmbeddingMatrix::new(m.clone()).unwrap();
        let (shuffled, perm) = shuffle_rows_with_permutation(&em, seed);
        let mut inverse = vec![0; perm.len()];
        for (r, &p) in perm.iter().enumerate() {
            inverse[p] = r;
        }
        prop_assert_eq!(shuffled.values().select_rows(&inverse), m);
    }

    #[test]
    fn user_features_are_linear(a in -8.0f32..8.0) {
        let d = generate(&SynthConfig { n_users: 15, n_items: 25, interactions_per_user: 5, d_lang: 8, d_latent: 3, ..Default::default() }).unwrap();
        let split = split_dataset(&filter_and_index(&d.interactions, 1).unwrap(), &SplitConfig::default()).unwrap();
        let items = d.features.align_to(&split.id_maps.items).unwrap();
        let scaled = EmbeddingMatrix::new(items.values().scaled(a)).unwrap();
        let f = user_language_features(&split, &items).unwrap();
        let g = user_language_features(&split, &scaled).unwrap();
        prop_assert!(g.values().max_abs_diff(&f.values().scaled(a)) < 1e-4 * (1.0 + a.abs() as f64));
    }
}

#[test]
fn shuffle_positions_are_uniform() {
    // each source row lands in each position with probability 1/n
    let n = 5;
    let trials = 5000u64;
    let em = EmbeddingMatrix::new(Matrix::from_fn(n, 1, |r, _| r as f32)).unwrap();
    let mut counts = vec![vec![0f64; n]; n];
    for seed in 0..trials {
        let (_, perm) = shuffle_rows_with_permutation(&em, seed);
        for (pos, &src) in perm.iter().enumerate() {
            counts[pos][src] += 1.0;
        }
    }
    let expected = trials as f64 / n as f64;
    let chi2: f64 = counts.iter().flatten().map(|c| (c - expected).powi(2) / expected).sum();
    // 25 cells with 16 degrees of freedom: the 0.999 quantile is about 39.3
    assert!(chi2 < 39.3, "chi-square {chi2}");
}
