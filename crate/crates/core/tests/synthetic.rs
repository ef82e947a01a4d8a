mod common;

use std::collections::HashMap;

use astroturf_rag::domain::{validate_cascade, Label};
use astroturf_rag::io::write_jsonl;
use astroturf_rag::synthetic_data::{generate, manifest, GeneratorConfig};
use astroturf_rag::tree_builder::{build_tree, Attachment};
use common::verify_tree;

fn config(count: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig { count, seed, ..GeneratorConfig::default() }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    write_jsonl(&a, &generate(&config(300, 9)).unwrap()).unwrap();
    write_jsonl(&b, &generate(&config(300, 9)).unwrap()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let c = generate(&config(300, 10)).unwrap();
    assert_ne!(generate(&config(300, 9)).unwrap(), c);
}

#[test]
fn every_record_validates_and_builds() {
    let records = generate(&config(1000, 3)).unwrap();
    for r in &records {
        assert!(validate_cascade(r).is_empty(), "{}: {:?}", r.cascade_id, validate_cascade(r));
        let (tree, _) = build_tree(r, 1).unwrap();
        verify_tree(&tree).unwrap();
        assert!(tree.len() <= 200);
    }
}

#[test]
fn every_attachment_branch_is_exercised() {
    let records = generate(&config(1000, 5)).unwrap();
    let mut counts: HashMap<Attachment, usize> = HashMap::new();
    for r in &records {
        for d in build_tree(r, 0).unwrap().1.decisions {
            *counts.entry(d.attachment).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    for kind in [Attachment::RtMention, Attachment::Follows, Attachment::WeightedRandom] {
        let share = counts.get(&kind).copied().unwrap_or(0) as f64 / total as f64;
        assert!(share >= 0.05, "{kind:?} only {share:.3} of {total}");
    }
}

#[test]
fn manifest_matches_configured_rate() {
    for (count, seed) in [(5000, 1), (10_228, 2)] {
        let records = generate(&config(count, seed)).unwrap();
        let m = manifest(&records, seed);
        assert_eq!(m.trees, count);
        assert_eq!(m.tweets, records.iter().map(|r| r.tweets.len()).sum::<usize>());
        assert_eq!(m.positives, records.iter().filter(|r| r.label == Some(Label::Fake)).count());
        assert!((m.positive_fraction - 0.097).abs() <= 0.01, "{}", m.positive_fraction);
    }
}

#[test]
fn tiny_and_invalid_configs() {
    let one = generate(&config(1, 0)).unwrap();
    assert_eq!(one.len(), 1);
    assert!(validate_cascade(&one[0]).is_empty());
    assert!(generate(&config(0, 0)).is_err());
    assert!(generate(&GeneratorConfig { positive_rate: 1.5, ..config(10, 0) }).is_err());
}
