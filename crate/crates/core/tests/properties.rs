mod common;

use std::collections::BTreeSet;

use cfrec_core::evaluation::{EvalConfig, Evaluator};
use cfrec_core::{
    predict_item_based, predict_user_based, recommend_top_n, split, Algorithm, Axis, Fallback, ItemId, Kernel,
    NeighborPool, Scale, SimilarityMatrix, UserId,
};
use common::{Grid, NaiveKernel};
use proptest::prelude::*;

fn grid(max_users: usize, max_items: usize) -> impl Strategy<Value = Grid> {
    (1..=max_users, 1..=max_items).prop_flat_map(|(u, i)| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.45, 1u32..=20), i), u).prop_map(|g| {
            g.into_iter()
                .map(|row| row.into_iter().map(|c| c.map(|v| v as f64 * 0.5)).collect())
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn user_based_matches_direct_evaluation(g in grid(20, 20), k in 1usize..8, pearson in any::<bool>()) {
        let m = common::matrix_of(&g, Scale::default());
        let (kernel, naive) = if pearson { (Kernel::Pearson, NaiveKernel::Pearson) } else { (Kernel::Cosine, NaiveKernel::Cosine) };
        let s = SimilarityMatrix::build(&m, Axis::User, kernel, kernel.default_min_overlap()).unwrap();
        let w = common::naive_similarity(&g, false, naive, kernel.default_min_overlap());
        for a in 0..g.len() {
            for i in 0..g[0].len() {
                let p = predict_user_based(&m, &s, UserId(a as u32), ItemId(i as u32), k, NeighborPool::Global).unwrap();
                let (want, fell_back) = common::naive_user_based(&g, &w, a, i, k);
                prop_assert!((p.value - want).abs() <= 1e-9, "({a},{i}) {} vs {want}", p.value);
                prop_assert_eq!(p.fallback != Fallback::None, fell_back);
            }
        }
    }

    #[test]
    fn item_based_matches_direct_evaluation(g in grid(20, 20), k in 1usize..8, adjusted in any::<bool>()) {
        let m = common::matrix_of(&g, Scale::default());
        let (kernel, naive) = if adjusted { (Kernel::AdjustedCosine, NaiveKernel::AdjCos) } else { (Kernel::Cosine, NaiveKernel::Cosine) };
        let s = SimilarityMatrix::build(&m, Axis::Item, kernel, kernel.default_min_overlap()).unwrap();
        let w = common::naive_similarity(&g, true, naive, kernel.default_min_overlap());
        for a in 0..g.len() {
            for i in 0..g[0].len() {
                let p = predict_item_based(&m, &s, UserId(a as u32), ItemId(i as u32), k).unwrap();
                let (want, _) = common::naive_item_based(&g, &w, a, i, k);
                prop_assert!((p.value - want).abs() <= 1e-9, "({a},{i}) {} vs {want}", p.value);
            }
        }
    }

    #[test]
    fn k_nearest_is_a_prefix_of_the_full_ranking(g in grid(25, 15), k in 1usize..30) {
        let m = common::matrix_of(&g, Scale::default());
        let s = SimilarityMatrix::build(&m, Axis::User, Kernel::Cosine, 1).unwrap();
        let w = common::naive_similarity(&g, false, NaiveKernel::Cosine, 1);
        for a in 0..g.len() {
            let got: Vec<u32> = s.k_nearest(a as u32, k).unwrap().iter().map(|n| n.id).collect();
            let want: Vec<u32> = common::naive_neighbors(&w, g.len(), a, k).iter().map(|n| n.0 as u32).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn cosine_ignores_positive_rescaling(g in grid(12, 12), c in 0.01f64..100.0) {
        let scaled: Grid = g.iter().map(|row| row.iter().map(|v| v.map(|x| x * c)).collect()).collect();
        let a = SimilarityMatrix::build(&common::matrix_of(&g, Scale::new(0.0, 1e4).unwrap()), Axis::User, Kernel::Cosine, 1).unwrap();
        let b = SimilarityMatrix::build(&common::matrix_of(&scaled, Scale::new(0.0, 1e4).unwrap()), Axis::User, Kernel::Cosine, 1).unwrap();
        prop_assert_eq!(a.num_pairs(), b.num_pairs());
        for (x, y, w) in a.pairs() {
            prop_assert!((b.get(x, y).unwrap() - w).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_ignores_translation(g in grid(12, 12), shift in -3.0f64..3.0) {
        let shifted: Grid = g.iter().map(|row| row.iter().map(|v| v.map(|x| x + shift)).collect()).collect();
        let scale = Scale::new(-5.0, 15.0).unwrap();
        let a = SimilarityMatrix::build(&common::matrix_of(&g, scale), Axis::User, Kernel::Pearson, 2).unwrap();
        let b = SimilarityMatrix::build(&common::matrix_of(&shifted, scale), Axis::User, Kernel::Pearson, 2).unwrap();
        for (x, y, w) in a.pairs() {
            let v = b.get(x, y);
            prop_assert!(v.is_some_and(|v| (v - w).abs() < 1e-9), "({x},{y}) {w} vs {v:?}");
        }
    }

    #[test]
    fn recommendations_skip_rated_items(g in grid(15, 15), k in 1usize..6, n in 1usize..6, item_axis in any::<bool>()) {
        let m = common::matrix_of(&g, Scale::default());
        let axis = if item_axis { Axis::Item } else { Axis::User };
        let s = SimilarityMatrix::build(&m, axis, Kernel::Cosine, 1).unwrap();
        for (a, row) in g.iter().enumerate() {
            let list = recommend_top_n(&m, &s, UserId(a as u32), k, n, NeighborPool::Global).unwrap();
            prop_assert!(list.len() <= n);
            for p in &list.entries {
                prop_assert!(row[p.item.index()].is_none());
                prop_assert!(p.fallback == Fallback::None);
            }
            let values: Vec<f64> = list.entries.iter().map(|p| p.value).collect();
            prop_assert!(values.windows(2).all(|w| w[0] >= w[1] - 1e-9));
        }
    }

    #[test]
    fn split_partitions_the_ratings(g in grid(15, 15), fraction in 0.05f64..0.5, seed in any::<u64>()) {
        let m = common::matrix_of(&g, Scale::default());
        let Ok(sp) = split(&m, fraction, seed) else { return Ok(()) };
        prop_assert_eq!(sp.test.len(), (m.num_entries() as f64 * fraction).floor() as usize);
        prop_assert_eq!(sp.test.len() + sp.train.num_entries(), m.num_entries());
        for t in &sp.test {
            prop_assert_eq!(m.rating(t.user, t.item), Some(t.rating));
            prop_assert!(sp.train.rating(t.user, t.item).is_none());
        }
        for u in 0..m.num_users() as u32 {
            let had = !m.user_entries(UserId(u)).is_empty();
            prop_assert_eq!(had, !sp.train.user_entries(UserId(u)).is_empty());
        }
    }
}

#[test]
fn recall_does_not_drop_as_lists_grow() {
    let mut rng = common::rng(11);
    for seed in 0..10 {
        let g = common::random_grid(&mut rng, 30, 25);
        let m = common::matrix_of(&g, Scale::default());
        let Ok(sp) = split(&m, 0.25, seed) else { continue };
        let mut last_tp = 0;
        for n in 1..=12 {
            let config = EvalConfig {
                n,
                threshold: 5.0,
                ..EvalConfig::default()
            };
            let evaluator = Evaluator::new(&sp, &config, None).unwrap();
            let prepared = evaluator.prepare(Algorithm::UserCf).unwrap();
            let report = evaluator.evaluate(Algorithm::UserCf, &prepared, 5).unwrap();
            assert!(report.tp >= last_tp, "seed {seed} N={n}: tp {} < {last_tp}", report.tp);
            last_tp = report.tp;
        }
    }
}

#[test]
fn similarity_is_identical_across_worker_counts() {
    let mut rng = common::rng(12);
    let g = common::random_grid(&mut rng, 30, 30);
    let m = common::matrix_of(&g, Scale::default());
    let build = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| SimilarityMatrix::build(&m, Axis::Item, Kernel::AdjustedCosine, 2).unwrap())
    };
    let one = build(1);
    let four = build(4);
    let bits = |s: &SimilarityMatrix| s.pairs().map(|(a, b, w)| (a, b, w.to_bits())).collect::<BTreeSet<_>>();
    assert_eq!(bits(&one), bits(&four));
}
