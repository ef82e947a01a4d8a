//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code it checks beyond reading plain data.

#![allow(dead_code)]

use std::collections::VecDeque;

use astroturf_rag::domain::{CascadeRecord, Label, PropagationTree, RawTweet};
use astroturf_rag::embedding_index::{CascadeEmbedding, EmbeddingIndex};
use proptest::prelude::*;

pub mod prompt_fixture;

/// BFS from the root over the edge list as given: exactly one root, every
/// node reached once, edges go forward in time.
pub fn verify_tree(tree: &PropagationTree) -> Result<(), String> {
    let n = tree.nodes().len();
    let edges = tree.edges();
    if edges.len() + 1 != n {
        return Err(format!("{} edges for {} nodes", edges.len(), n));
    }
    let mut children = vec![Vec::new(); n + 1];
    let mut indegree = vec![0usize; n + 1];
    for &(p, c) in edges {
        if p < 1 || p > n || c < 1 || c > n {
            return Err(format!("edge ({p},{c}) out of range"));
        }
        children[p].push(c);
        indegree[c] += 1;
        let (tp, tc) = (tree.nodes()[p - 1].timestamp, tree.nodes()[c - 1].timestamp);
        if tp > tc || p >= c {
            return Err(format!("edge ({p},{c}) goes back in time"));
        }
    }
    let roots: Vec<usize> = (1..=n).filter(|&v| indegree[v] == 0).collect();
    if roots != [1] {
        return Err(format!("roots {roots:?}"));
    }
    if let Some(v) = (1..=n).find(|&v| indegree[v] > 1) {
        return Err(format!("node {v} has {} parents", indegree[v]));
    }
    let mut seen = vec![false; n + 1];
    let mut queue = VecDeque::from([1usize]);
    seen[1] = true;
    let mut visited = 1;
    while let Some(v) = queue.pop_front() {
        for &c in &children[v] {
            if seen[c] {
                return Err(format!("cycle through {c}"));
            }
            seen[c] = true;
            visited += 1;
            queue.push_back(c);
        }
    }
    if visited != n {
        return Err(format!("only {visited} of {n} nodes reachable"));
    }
    let root_ts = tree.nodes()[0].timestamp;
    for (i, node) in tree.nodes().iter().enumerate() {
        if node.delay != node.timestamp - root_ts || node.delay < 0.0 {
            return Err(format!("node {} delay {}", i + 1, node.delay));
        }
    }
    Ok(())
}

pub fn tweet(id: &str, user: &str, ts: f64, followers: i64, text: &str) -> RawTweet {
    RawTweet {
        tweet_id: id.to_string(),
        user_id: user.to_string(),
        text: text.to_string(),
        timestamp: ts,
        followers,
        rt_source_user: None,
    }
}

/// Random raw cascades: up to `max_tweets` tweets with coarse timestamps
/// (ties happen), users drawn from a small pool, stray RT mentions, follow
/// edges and `rt_source_user` fields, some pointing at absent users.
pub fn arb_cascade(max_tweets: usize) -> impl Strategy<Value = CascadeRecord> {
    (1..=max_tweets)
        .prop_flat_map(|n| {
            let pool = 12usize;
            let followers = prop::collection::vec(0i64..1000, pool);
            let tweets = prop::collection::vec((0usize..pool, 0u32..50, 0u8..4, 0usize..pool + 2), n);
            let follows = prop::collection::vec((0usize..pool + 2, 0usize..pool + 2), 0..n * 2);
            let label = prop::option::of(prop_oneof![Just(Label::Fake), Just(Label::Real)]);
            (Just(n), followers, tweets, follows, label)
        })
        .prop_map(|(_, followers, tweets, follows, label)| {
            let user = |u: usize| format!("user{u}");
            let tweets = tweets
                .into_iter()
                .enumerate()
                .map(|(i, (u, t, kind, target))| {
                    let mut tw =
                        tweet(&format!("t{i:03}"), &user(u), f64::from(t) * 10.0, followers[u.min(11)], "some words");
                    match kind {
                        0 => tw.text = format!("RT @{}: some words", user(target)),
                        1 => tw.rt_source_user = Some(user(target)),
                        _ => {}
                    }
                    tw
                })
                .collect();
            CascadeRecord {
                cascade_id: "cascade".into(),
                label,
                tweets,
                follow_edges: follows.into_iter().map(|(a, b)| (user(a), user(b))).collect(),
            }
        })
}

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Reference entry for the brute-force retrieval oracles.
#[derive(Debug, Clone)]
pub struct Entry {
    pub id: String,
    pub label: Label,
    pub vector: Vec<f64>,
}

/// Full sort by similarity descending, then id ascending.
pub fn ranked<'a>(query: &[f64], entries: impl Iterator<Item = &'a Entry>) -> Vec<(&'a Entry, f64)> {
    let mut all: Vec<(&Entry, f64)> = entries.map(|e| (e, cosine_oracle(query, &e.vector))).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.id.cmp(&b.0.id)));
    all
}

pub fn brute_top_n(entries: &[Entry], query: &[f64], n: usize, exclude: Option<&str>) -> Vec<String> {
    ranked(query, entries.iter().filter(|e| Some(e.id.as_str()) != exclude))
        .into_iter()
        .take(n)
        .map(|(e, _)| e.id.clone())
        .collect()
}

/// `(similar, partner)` id pairs.
pub fn brute_balanced(entries: &[Entry], query: &[f64], n: usize, exclude: Option<&str>) -> Vec<(String, String)> {
    let pool: Vec<&Entry> = entries.iter().filter(|e| Some(e.id.as_str()) != exclude).collect();
    ranked(query, pool.iter().copied())
        .into_iter()
        .take(n)
        .map(|(e, _)| {
            let partner = ranked(&e.vector, pool.iter().copied().filter(|p| p.label != e.label))[0].0;
            (e.id.clone(), partner.id.clone())
        })
        .collect()
}

/// Interleaved FAKE/REAL ids.
pub fn brute_topk_per_class(entries: &[Entry], query: &[f64], k: usize, exclude: Option<&str>) -> Vec<String> {
    let pick = |label: Label| -> Vec<String> {
        ranked(query, entries.iter().filter(|e| e.label == label && Some(e.id.as_str()) != exclude))
            .into_iter()
            .take(k)
            .map(|(e, _)| e.id.clone())
            .collect()
    };
    let (fake, real) = (pick(Label::Fake), pick(Label::Real));
    let mut out = Vec::new();
    for i in 0..fake.len().max(real.len()) {
        out.extend(fake.get(i).cloned());
        out.extend(real.get(i).cloned());
    }
    out
}

/// Small-integer vectors so that every dot product is exact and ties are
/// common. About `fake_rate` of the entries are FAKE.
pub fn random_entries(rng: &mut impl rand::Rng, count: usize, dim: usize, fake_rate: f64) -> Vec<Entry> {
    let mut entries: Vec<Entry> = (0..count)
        .map(|i| Entry {
            id: format!("e{:04}", (i * 7919) % 10007),
            label: if rng.random_bool(fake_rate) { Label::Fake } else { Label::Real },
            vector: (0..dim).map(|_| f64::from(rng.random_range(-2i32..=3))).collect(),
        })
        .collect();
    // duplicates force exact similarity ties
    for i in 0..count / 10 {
        let j = rng.random_range(0..count);
        entries[j].vector = entries[i].vector.clone();
    }
    if !entries.iter().any(|e| e.label == Label::Fake) {
        entries[0].label = Label::Fake;
    }
    if !entries.iter().any(|e| e.label == Label::Real) {
        entries[1].label = Label::Real;
    }
    entries
}

pub fn index_of(entries: &[Entry]) -> EmbeddingIndex {
    EmbeddingIndex::from_embeddings(
        entries.iter().map(|e| (e.id.clone(), e.label, CascadeEmbedding::from_dense(&e.vector))).collect(),
    )
    .expect("valid index")
}

/// Textbook metrics straight from the definitions, positive = FAKE.
pub struct Textbook {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

pub fn textbook_metrics(predicted_fake: &[bool], scores: &[f64], truth: &[Label]) -> Textbook {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (i, &p) in predicted_fake.iter().enumerate() {
        match (p, truth[i] == Label::Fake) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Textbook { precision, recall, f1, auc: pairwise_auc(scores, truth) }
}

/// Probability a random positive outscores a random negative, ties 1/2,
/// by enumerating every pair.
pub fn pairwise_auc(scores: &[f64], truth: &[Label]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, l)| **l == Label::Fake).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, l)| **l == Label::Real).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Area under the ROC polyline swept from the highest threshold down.
pub fn trapezoid_auc(scores: &[f64], truth: &[Label]) -> Option<f64> {
    let p = truth.iter().filter(|l| **l == Label::Fake).count() as f64;
    let n = truth.len() as f64 - p;
    if p == 0.0 || n == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let (mut tp, mut fp, mut prev) = (0.0, 0.0, (0.0, 0.0));
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if truth[order[i]] == Label::Fake {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let point = (fp / n, tp / p);
        area += (point.0 - prev.0) * (point.1 + prev.1) / 2.0;
        prev = point;
    }
    Some(area)
}
