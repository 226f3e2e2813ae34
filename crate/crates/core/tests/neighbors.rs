mod common;

use common::{brute_force_top_k, oracle_cosine, planted_analogy, random_model, rng, same_ranking};
use embex_core::simquery::{self, QueryError, QueryOptions};
use embex_core::vstore::{read_text, ModelMeta};
use embex_core::EmbeddingModel;
use proptest::prelude::*;

#[test]
fn top_k_matches_brute_force_including_ties() {
    let mut r = rng(11);
    for model_seed in 0..6 {
        let m = random_model(&mut r, 400, 20, if model_seed % 2 == 0 { 7 } else { 0 });
        let opts = QueryOptions::default();
        for q in (0..m.len()).step_by(37) {
            for k in [1, 10, 100] {
                let got = simquery::top_k_similar(&m, m.token(q), k, opts).unwrap();
                let want = brute_force_top_k(&m, q, k);
                same_ranking(&got, &want).unwrap_or_else(|e| panic!("q={q} k={k}: {e}"));
            }
        }
    }
}

#[test]
fn exact_ties_order_by_token() {
    let m = read_text("4 2\nq 1 0\nzeta 0 1\nalpha 0 1\nmid 0 2\n".as_bytes()).unwrap();
    let got = simquery::top_k_similar(&m, "q", 3, QueryOptions::default()).unwrap();
    let tokens: Vec<&str> = got.iter().map(|n| n.token.as_str()).collect();
    assert_eq!(tokens, ["alpha", "mid", "zeta"]);
}

#[test]
fn k_larger_than_vocabulary_returns_everything_else() {
    let m = random_model(&mut rng(2), 12, 5, 0);
    let got = simquery::top_k_similar(&m, m.token(0), 1000, QueryOptions::default()).unwrap();
    assert_eq!(got.len(), 11);
}

#[test]
fn zero_rows_never_appear_and_cannot_be_queried() {
    let m = read_text("3 2\na 1 0\nz 0 0\nb 1 1\n".as_bytes()).unwrap();
    let got = simquery::top_k_similar(&m, "a", 5, QueryOptions::default()).unwrap();
    assert_eq!(got.len(), 1);
    assert_eq!(
        simquery::top_k_similar(&m, "z", 1, QueryOptions::default()),
        Err(QueryError::ZeroVector)
    );
}

#[test]
fn planted_analogies_are_found() {
    let mut r = rng(42);
    for _ in 0..25 {
        let (m, [a, b, c, d]) = planted_analogy(&mut r, 300, 30);
        let ans = simquery::analogy(&m, &a, &b, &c, 5, QueryOptions::default()).unwrap();
        assert_eq!(ans.neighbors[0].token, d);
        assert!(ans.neighbors[0].score >= 1.0 - 1e-6);
        for n in &ans.neighbors {
            assert!(n.token != a && n.token != b && n.token != c);
        }
    }
}

#[test]
fn trace_is_internally_consistent() {
    let mut r = rng(3);
    let (m, [a, b, c, _]) = planted_analogy(&mut r, 100, 16);
    let t = simquery::vector_trace(&m, &a, &b, &c, QueryOptions::default()).unwrap();
    let raw = |tok: &str| -> Vec<f64> { m.lookup(tok).unwrap().iter().map(|&v| f64::from(v)).collect() };
    let (va, vb, vc) = (raw(&a), raw(&b), raw(&c));
    for i in 0..16 {
        assert_eq!(t.a_minus_b[i], va[i] - vb[i]);
        assert_eq!(t.query[i], va[i] - vb[i] + vc[i]);
        assert_eq!(t.residual[i], t.query[i] - t.result_vector[i]);
    }
    assert_eq!(t.result_vector, raw(&t.result.token));
    assert!((t.cos_query_result - oracle_cosine(&t.query, &t.result_vector)).abs() < 1e-12);
    assert!((t.cos_query_result - t.result.score).abs() < 1e-9);
}

#[test]
fn lowercase_fallback_follows_feature_kind() {
    let text = "2 2\nparis 1 0\nrome 0 1\n";
    let mut m = read_text(text.as_bytes()).unwrap();
    assert!(simquery::top_k_similar(&m, "Paris", 1, QueryOptions::for_model(&m)).is_ok());
    let meta = ModelMeta {
        feature_kind: embex_core::FeatureKind::LemmaCased,
        ..m.meta().clone()
    };
    m = EmbeddingModel::new(m.tokens().to_vec(), m.matrix().to_vec(), meta).unwrap();
    assert_eq!(
        simquery::top_k_similar(&m, "Paris", 1, QueryOptions::for_model(&m)),
        Err(QueryError::OutOfVocabulary("Paris".into()))
    );
}

fn nonzero_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-100.0f64..100.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

proptest! {
    #[test]
    fn cosine_is_bounded_and_symmetric((x, y) in (1usize..64).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d)))) {
        let c = simquery::cosine(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(c, simquery::cosine(&y, &x).unwrap());
        prop_assert!((simquery::cosine(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((c - oracle_cosine(&x, &y).clamp(-1.0, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_scale_invariant(x in nonzero_vec(8), y in nonzero_vec(8), s in 0.01f64..100.0) {
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let a = simquery::cosine(&x, &y).unwrap();
        let b = simquery::cosine(&scaled, &y).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn neighbor_lists_are_sorted(seed in 0u64..1000, k in 1usize..50) {
        let m = random_model(&mut rng(seed), 60, 6, 5);
        let got = simquery::top_k_similar(&m, m.token(0), k, QueryOptions::default()).unwrap();
        prop_assert_eq!(got.len(), k.min(59));
        for w in got.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].token < w[1].token));
        }
    }
}

#[test]
fn zero_vectors_have_no_cosine() {
    assert_eq!(simquery::cosine(&[0.0f64, 0.0], &[1.0, 0.0]), Err(QueryError::ZeroVector));
}
