mod common;

use astroturf_rag::balanced_rag::{
    retrieve_balanced, retrieve_balanced_with, retrieve_plain, retrieve_random, retrieve_topk_per_class,
    BalancedOptions, RetrievalError,
};
use astroturf_rag::domain::{Label, LabeledDataset, Split};
use astroturf_rag::embedding_index::{similarity, CascadeEmbedding, EmbeddingIndex, IndexConfig};
use astroturf_rag::synthetic_data::{generate, GeneratorConfig};
use astroturf_rag::tree_builder::build_tree;
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids<T>(items: &[T], f: impl Fn(&T) -> &str) -> Vec<String> {
    items.iter().map(|x| f(x).to_string()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn retrieval_matches_brute_force(seed in any::<u64>(), count in 2usize..80, dim in 1usize..8,
                                     n in 1usize..10, fake_rate in 0.05f64..0.6, exclude_pick in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = random_entries(&mut rng, count, dim, fake_rate);
        let index = index_of(&entries);
        let query: Vec<f64> = (0..dim).map(|_| f64::from(rng.random_range(-2i32..=3))).collect();
        let q = CascadeEmbedding::from_dense(&query);
        let exclude = exclude_pick.then(|| entries[rng.random_range(0..count)].id.clone());
        let exclude = exclude.as_deref();

        let hits = index.top_n(&q, n, exclude).unwrap();
        prop_assert_eq!(ids(&hits, |h| &h.cascade_id), brute_top_n(&entries, &query, n, exclude));

        let plain = retrieve_plain(&index, &q, n, exclude).unwrap();
        prop_assert_eq!(ids(&plain.pairs, |p| &p.similar.cascade_id), brute_top_n(&entries, &query, n, exclude));

        match retrieve_balanced(&index, &q, n, exclude) {
            Ok(set) => {
                let got: Vec<(String, String)> = set.pairs.iter()
                    .map(|p| (p.similar.cascade_id.clone(), p.contrastive.as_ref().unwrap().cascade_id.clone()))
                    .collect();
                prop_assert_eq!(got, brute_balanced(&entries, &query, n, exclude));
                prop_assert_eq!(set.count(Label::Fake), set.pairs.len());
                prop_assert_eq!(set.count(Label::Real), set.pairs.len());
            }
            Err(RetrievalError::ClassEmpty(label)) => {
                prop_assert!(!entries.iter().any(|e| e.label == label && Some(e.id.as_str()) != exclude));
            }
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }

        if let Ok(set) = retrieve_topk_per_class(&index, &q, n, exclude) {
            let got: Vec<String> = set.pair_major().iter().map(|e| e.cascade_id.clone()).collect();
            prop_assert_eq!(got, brute_topk_per_class(&entries, &query, n, exclude));
        }
    }

    #[test]
    fn cosine_is_symmetric_and_scale_invariant(a in prop::collection::vec(-5.0f64..5.0, 6),
                                              b in prop::collection::vec(-5.0f64..5.0, 6),
                                              k in 0.1f64..10.0) {
        let (ea, eb) = (CascadeEmbedding::from_dense(&a), CascadeEmbedding::from_dense(&b));
        let s = similarity(&ea, &eb).unwrap();
        prop_assert!((s - similarity(&eb, &ea).unwrap()).abs() < 1e-12);
        prop_assert!((s - similarity(&ea.scaled(k), &eb).unwrap()).abs() < 1e-9);
        prop_assert!((s - cosine_oracle(&a, &b)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn distinct_partners_never_repeat_while_possible(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = random_entries(&mut rng, 60, 5, 0.3);
        let index = index_of(&entries);
        let q = CascadeEmbedding::from_dense(&entries[0].vector);
        let set = retrieve_balanced_with(&index, &q, n, None, BalancedOptions { distinct_partners: true }).unwrap();
        let partners: Vec<&str> = set.pairs.iter().map(|p| p.contrastive.as_ref().unwrap().cascade_id.as_str()).collect();
        let unique: std::collections::HashSet<&str> = partners.iter().copied().collect();
        if set.flags.is_empty() {
            prop_assert_eq!(unique.len(), partners.len());
        }
    }
}

#[test]
fn worked_example_from_four_entries() {
    let index = EmbeddingIndex::from_embeddings(vec![
        ("A".into(), Label::Fake, CascadeEmbedding::from_dense(&[1.0, 0.0])),
        ("B".into(), Label::Fake, CascadeEmbedding::from_dense(&[0.9, 0.1])),
        ("C".into(), Label::Real, CascadeEmbedding::from_dense(&[0.95, 0.05])),
        ("D".into(), Label::Real, CascadeEmbedding::from_dense(&[0.0, 1.0])),
    ])
    .unwrap();
    let q = CascadeEmbedding::from_dense(&[1.0, 0.02]);
    // cos(q,C) = 0.99862 beats cos(q,B) = 0.99388, so C is the second neighbour
    let set = retrieve_balanced(&index, &q, 2, None).unwrap();
    let got: Vec<(&str, &str)> = set
        .pairs
        .iter()
        .map(|p| (p.similar.cascade_id.as_str(), p.contrastive.as_ref().unwrap().cascade_id.as_str()))
        .collect();
    assert_eq!(got, vec![("A", "C"), ("C", "A")]);
}

fn synthetic_split(count: usize, seed: u64) -> LabeledDataset {
    let records = generate(&GeneratorConfig { count, seed, ..GeneratorConfig::default() }).unwrap();
    let trees = records.iter().map(|r| build_tree(r, seed).unwrap().0).collect();
    LabeledDataset::stratified(trees, 0.8, seed).unwrap()
}

#[test]
fn index_persists_and_embeds_test_trees_identically() {
    let data = synthetic_split(300, 4);
    let index = EmbeddingIndex::fit(data.split_trees(Split::Train), IndexConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("index.json");
    index.save(&path).unwrap();
    let loaded = EmbeddingIndex::load(&path).unwrap();
    assert_eq!(loaded, index);
    for tree in data.split_trees(Split::Test).take(20) {
        let (a, b) = (index.embed(tree), loaded.embed(tree));
        assert_eq!(a, b);
        let ha = index.top_n(&a, 5, None).unwrap();
        assert_eq!(ha, loaded.top_n(&b, 5, None).unwrap());
    }
}

#[test]
fn leave_one_out_never_returns_the_query() {
    let data = synthetic_split(200, 8);
    let index = EmbeddingIndex::fit(data.split_trees(Split::Train), IndexConfig::default()).unwrap();
    for tree in data.split_trees(Split::Train).take(40) {
        let q = index.embed(tree);
        let id = tree.cascade_id();
        let set = retrieve_balanced(&index, &q, 3, Some(id)).unwrap();
        assert!(set.pair_major().iter().all(|e| e.cascade_id != id));
        let set = retrieve_random(&index, 6, 1, Some(id)).unwrap();
        assert!(set.pair_major().iter().all(|e| e.cascade_id != id));
        // without the exclusion, the query is its own nearest neighbour
        assert!(index.top_n(&q, 1, None).unwrap()[0].similarity > 0.999_999);
    }
}

#[test]
fn random_examples_are_seeded() {
    let data = synthetic_split(150, 2);
    let index = EmbeddingIndex::fit(data.split_trees(Split::Train), IndexConfig::default()).unwrap();
    let a = retrieve_random(&index, 6, 42, None).unwrap();
    assert_eq!(a, retrieve_random(&index, 6, 42, None).unwrap());
    assert_ne!(a, retrieve_random(&index, 6, 43, None).unwrap());
    assert!(matches!(retrieve_random(&index, 10_000, 1, None), Err(RetrievalError::NotEnough { .. })));
}
