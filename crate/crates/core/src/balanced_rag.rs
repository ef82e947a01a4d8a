//! Few-shot example selection.
//!
//! [`retrieve_balanced`] is the contrastive scheme: take the `n` training
//! cascades nearest to the query regardless of label, then pair each one
//! with the opposite-label cascade nearest to *it*. Every pair holds one
//! FAKE and one REAL example, so the prompt is balanced whatever the class
//! prior. The other modes are the baselines it is compared against.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::domain::Label;
use crate::embedding_index::{similarity, CascadeEmbedding, EmbeddingIndex, Hit, IndexEntry, IndexError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RagMode {
    /// Zero-shot: no examples.
    None,
    PlainRag,
    BalancedRag,
    Random,
    TopkPerClass,
}

impl RagMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RagMode::None => "none",
            RagMode::PlainRag => "plain_rag",
            RagMode::BalancedRag => "balanced_rag",
            RagMode::Random => "random",
            RagMode::TopkPerClass => "topk_per_class",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRef {
    pub cascade_id: String,
    pub label: Label,
    pub similarity_to_query: f64,
    pub similarity_to_partner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub similar: ExampleRef,
    pub contrastive: Option<ExampleRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedExampleSet {
    pub mode: RagMode,
    pub pairs: Vec<ExamplePair>,
    /// Notes about degenerate selections (clamped classes, reused partners).
    #[serde(default)]
    pub flags: Vec<String>,
}

impl BalancedExampleSet {
    pub fn empty() -> Self {
        BalancedExampleSet { mode: RagMode::None, pairs: Vec::new(), flags: Vec::new() }
    }

    /// All examples in pair-major order: similar, then its partner.
    pub fn pair_major(&self) -> Vec<&ExampleRef> {
        self.pairs.iter().flat_map(|p| std::iter::once(&p.similar).chain(p.contrastive.as_ref())).collect()
    }

    /// Every similar example first, then every contrastive one.
    pub fn grouped(&self) -> Vec<&ExampleRef> {
        self.pairs.iter().map(|p| &p.similar).chain(self.pairs.iter().filter_map(|p| p.contrastive.as_ref())).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.iter().map(|p| 1 + p.contrastive.is_some() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.pair_major().iter().filter(|e| e.label == label).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("cannot balance: class {0} empty")]
    ClassEmpty(Label),
    #[error("requested {requested} random examples from {available} candidates")]
    NotEnough { requested: usize, available: usize },
    #[error("n must be at least 1")]
    ZeroN,
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BalancedOptions {
    /// Greedily skip partners already used by an earlier pair.
    pub distinct_partners: bool,
}

fn example(entry: &IndexEntry, to_query: f64, to_partner: f64) -> ExampleRef {
    ExampleRef {
        cascade_id: entry.cascade_id.clone(),
        label: entry.label,
        similarity_to_query: to_query,
        similarity_to_partner: to_partner,
    }
}

fn lookup<'a>(index: &'a EmbeddingIndex, hit: &Hit) -> &'a IndexEntry {
    index.get(&hit.cascade_id).expect("hits come from the index")
}

fn require_class(index: &EmbeddingIndex, label: Label, exclude: Option<&str>) -> Result<(), RetrievalError> {
    if index.entries().iter().any(|e| e.label == label && Some(e.cascade_id.as_str()) != exclude) {
        Ok(())
    } else {
        Err(RetrievalError::ClassEmpty(label))
    }
}

/// Top-n neighbours, each paired with its nearest opposite-label entry.
pub fn retrieve_balanced(
    index: &EmbeddingIndex,
    query: &CascadeEmbedding,
    n: usize,
    exclude: Option<&str>,
) -> Result<BalancedExampleSet, RetrievalError> {
    retrieve_balanced_with(index, query, n, exclude, BalancedOptions::default())
}

pub fn retrieve_balanced_with(
    index: &EmbeddingIndex,
    query: &CascadeEmbedding,
    n: usize,
    exclude: Option<&str>,
    options: BalancedOptions,
) -> Result<BalancedExampleSet, RetrievalError> {
    if n == 0 {
        return Err(RetrievalError::ZeroN);
    }
    require_class(index, Label::Fake, exclude)?;
    require_class(index, Label::Real, exclude)?;

    let hits = index.top_n(query, n, exclude)?;
    let mut used: Vec<String> = Vec::new();
    let mut flags = Vec::new();
    let mut pairs = Vec::with_capacity(hits.len());
    for hit in &hits {
        let entry = lookup(index, hit);
        let opposite = entry.label.opposite();
        let ranked = |skip_used: bool| {
            index.top_n_where(&entry.embedding, 1, exclude, |e| {
                e.label == opposite && !(skip_used && used.contains(&e.cascade_id))
            })
        };
        let mut partner_hit = if options.distinct_partners { ranked(true)? } else { ranked(false)? };
        if partner_hit.is_empty() {
            flags.push(format!("partner of {} reused: opposite class exhausted", entry.cascade_id));
            partner_hit = ranked(false)?;
        }
        let partner_hit = &partner_hit[0];
        let partner = lookup(index, partner_hit);
        used.push(partner.cascade_id.clone());
        let partner_to_query = similarity(query, &partner.embedding)?;
        pairs.push(ExamplePair {
            similar: example(entry, hit.similarity, partner_hit.similarity),
            contrastive: Some(example(partner, partner_to_query, partner_hit.similarity)),
        });
    }
    Ok(BalancedExampleSet { mode: RagMode::BalancedRag, pairs, flags })
}

/// Top-n neighbours regardless of label.
pub fn retrieve_plain(
    index: &EmbeddingIndex,
    query: &CascadeEmbedding,
    n: usize,
    exclude: Option<&str>,
) -> Result<BalancedExampleSet, RetrievalError> {
    let hits = index.top_n(query, n, exclude)?;
    let pairs = hits
        .iter()
        .map(|hit| ExamplePair { similar: example(lookup(index, hit), hit.similarity, 0.0), contrastive: None })
        .collect();
    Ok(BalancedExampleSet { mode: RagMode::PlainRag, pairs, flags: Vec::new() })
}

/// `n` training entries drawn uniformly without replacement.
pub fn retrieve_random(
    index: &EmbeddingIndex,
    n: usize,
    seed: u64,
    exclude: Option<&str>,
) -> Result<BalancedExampleSet, RetrievalError> {
    let candidates: Vec<&IndexEntry> =
        index.entries().iter().filter(|e| Some(e.cascade_id.as_str()) != exclude).collect();
    if candidates.is_empty() {
        return Err(IndexError::EmptyIndex.into());
    }
    if n > candidates.len() {
        return Err(RetrievalError::NotEnough { requested: n, available: candidates.len() });
    }
    let mut rng = seed::stream(seed, &[b"random-examples"]);
    let pairs = index::sample(&mut rng, candidates.len(), n)
        .into_iter()
        .map(|i| ExamplePair { similar: example(candidates[i], 0.0, 0.0), contrastive: None })
        .collect();
    Ok(BalancedExampleSet { mode: RagMode::Random, pairs, flags: Vec::new() })
}

/// The `k` nearest FAKE and the `k` nearest REAL entries, interleaved
/// FAKE/REAL. A class with fewer than `k` members contributes all of them
/// and is flagged.
pub fn retrieve_topk_per_class(
    index: &EmbeddingIndex,
    query: &CascadeEmbedding,
    k: usize,
    exclude: Option<&str>,
) -> Result<BalancedExampleSet, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroN);
    }
    require_class(index, Label::Fake, exclude)?;
    require_class(index, Label::Real, exclude)?;
    let fake = index.top_n_where(query, k, exclude, |e| e.label == Label::Fake)?;
    let real = index.top_n_where(query, k, exclude, |e| e.label == Label::Real)?;
    let mut flags = Vec::new();
    for (label, hits) in [(Label::Fake, &fake), (Label::Real, &real)] {
        if hits.len() < k {
            flags.push(format!("class {label} has only {} members; wanted {k}", hits.len()));
        }
    }
    let to_ref = |hit: &Hit| example(lookup(index, hit), hit.similarity, 0.0);
    let mut pairs = Vec::with_capacity(k);
    for i in 0..fake.len().max(real.len()) {
        let pair = match (fake.get(i), real.get(i)) {
            (Some(f), r) => ExamplePair { similar: to_ref(f), contrastive: r.map(to_ref) },
            (None, Some(r)) => ExamplePair { similar: to_ref(r), contrastive: None },
            (None, None) => unreachable!(),
        };
        pairs.push(pair);
    }
    Ok(BalancedExampleSet { mode: RagMode::TopkPerClass, pairs, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index(entries: &[(&str, Label, [f64; 2])]) -> EmbeddingIndex {
        EmbeddingIndex::from_embeddings(
            entries.iter().map(|(id, l, v)| (id.to_string(), *l, CascadeEmbedding::from_dense(v))).collect(),
        )
        .unwrap()
    }

    fn ids(set: &BalancedExampleSet) -> Vec<(String, Option<String>)> {
        set.pairs
            .iter()
            .map(|p| (p.similar.cascade_id.clone(), p.contrastive.as_ref().map(|c| c.cascade_id.clone())))
            .collect()
    }

    fn q(v: [f64; 2]) -> CascadeEmbedding {
        CascadeEmbedding::from_dense(&v)
    }

    #[test]
    fn two_entry_index_forces_the_pair() {
        let idx = index(&[("A", Label::Fake, [1.0, 0.0]), ("B", Label::Real, [0.0, 1.0])]);
        let set = retrieve_balanced(&idx, &q([1.0, 0.0]), 1, None).unwrap();
        assert_eq!(ids(&set), vec![("A".into(), Some("B".into()))]);
    }

    #[test]
    fn four_entry_hand_placed_index() {
        // label-blind step 1 ranks C (0.99862) above B (0.99388)
        let idx = index(&[
            ("A", Label::Fake, [1.0, 0.0]),
            ("B", Label::Fake, [0.9, 0.1]),
            ("C", Label::Real, [0.95, 0.05]),
            ("D", Label::Real, [0.0, 1.0]),
        ]);
        let set = retrieve_balanced(&idx, &q([1.0, 0.0]), 2, None).unwrap();
        assert_eq!(ids(&set), vec![("A".into(), Some("C".into())), ("C".into(), Some("A".into()))]);
        assert_eq!(set.count(Label::Fake), 2);
        assert_eq!(set.count(Label::Real), 2);
    }

    #[test]
    fn distinct_partners_skip_used_ones() {
        let idx = index(&[
            ("A", Label::Fake, [1.0, 0.0]),
            ("B", Label::Fake, [0.99, 0.01]),
            ("C", Label::Real, [0.0, 1.0]),
            ("D", Label::Real, [0.1, 1.0]),
        ]);
        let plain = retrieve_balanced(&idx, &q([1.0, 0.0]), 2, None).unwrap();
        assert_eq!(ids(&plain), vec![("A".into(), Some("D".into())), ("B".into(), Some("D".into()))]);
        let distinct =
            retrieve_balanced_with(&idx, &q([1.0, 0.0]), 2, None, BalancedOptions { distinct_partners: true }).unwrap();
        assert_eq!(ids(&distinct), vec![("A".into(), Some("D".into())), ("B".into(), Some("C".into()))]);
    }

    #[test]
    fn missing_class_cannot_balance() {
        let idx = index(&[("A", Label::Real, [1.0, 0.0]), ("B", Label::Real, [0.0, 1.0])]);
        let err = retrieve_balanced(&idx, &q([1.0, 0.0]), 1, None).unwrap_err();
        assert_eq!(err.to_string(), "cannot balance: class Fake empty");
        // excluding the only FAKE also empties the class
        let idx = index(&[("A", Label::Fake, [1.0, 0.0]), ("B", Label::Real, [0.0, 1.0])]);
        assert!(matches!(
            retrieve_balanced(&idx, &q([1.0, 0.0]), 1, Some("A")),
            Err(RetrievalError::ClassEmpty(Label::Fake))
        ));
    }

    #[test]
    fn plain_retrieval() {
        let idx =
            index(&[("A", Label::Fake, [1.0, 0.0]), ("B", Label::Real, [0.0, 1.0]), ("C", Label::Real, [1.0, 1.0])]);
        let set = retrieve_plain(&idx, &q([1.0, 0.0]), 1, None).unwrap();
        assert_eq!(ids(&set), vec![("A".into(), None)]);
        let set = retrieve_plain(&idx, &q([1.0, 0.0]), 10, None).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.mode, RagMode::PlainRag);
    }

    #[test]
    fn random_retrieval() {
        let entries: Vec<_> = (0..10).map(|i| (format!("e{i}"), Label::Real, [i as f64, 1.0])).collect();
        let refs: Vec<_> = entries.iter().map(|(a, b, c)| (a.as_str(), *b, *c)).collect();
        let idx = index(&refs);
        let a = retrieve_random(&idx, 4, 9, None).unwrap();
        assert_eq!(a, retrieve_random(&idx, 4, 9, None).unwrap());
        let all = retrieve_random(&idx, 10, 1, None).unwrap();
        let mut got: Vec<_> = all.pairs.iter().map(|p| p.similar.cascade_id.clone()).collect();
        got.sort();
        let mut want: Vec<_> = entries.iter().map(|e| e.0.clone()).collect();
        want.sort();
        assert_eq!(got, want);
        assert!(matches!(retrieve_random(&idx, 11, 1, None), Err(RetrievalError::NotEnough { .. })));
        assert!(retrieve_random(&idx, 10, 1, Some("e3")).is_err());
    }

    #[test]
    fn random_frequencies_are_uniform() {
        let entries: Vec<_> = (0..10).map(|i| (format!("e{i}"), Label::Real, [i as f64, 1.0])).collect();
        let refs: Vec<_> = entries.iter().map(|(a, b, c)| (a.as_str(), *b, *c)).collect();
        let idx = index(&refs);
        let mut counts = std::collections::HashMap::new();
        let draws = 10_000;
        for s in 0..draws {
            let set = retrieve_random(&idx, 1, s, None).unwrap();
            *counts.entry(set.pairs[0].similar.cascade_id.clone()).or_insert(0usize) += 1;
        }
        for (_, c) in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.1).abs() <= 0.01, "{f}");
        }
    }

    #[test]
    fn topk_per_class() {
        let idx = index(&[
            ("F1", Label::Fake, [1.0, 0.0]),
            ("F2", Label::Fake, [1.0, 1.0]),
            ("R1", Label::Real, [0.9, 0.1]),
            ("R2", Label::Real, [0.0, 1.0]),
            ("R3", Label::Real, [0.5, 1.0]),
        ]);
        let set = retrieve_topk_per_class(&idx, &q([1.0, 0.0]), 1, None).unwrap();
        assert_eq!(ids(&set), vec![("F1".into(), Some("R1".into()))]);
        let set = retrieve_topk_per_class(&idx, &q([1.0, 0.0]), 3, None).unwrap();
        assert_eq!(set.count(Label::Fake), 2);
        assert_eq!(set.count(Label::Real), 3);
        assert_eq!(set.flags.len(), 1);
        let order: Vec<_> = set.pair_major().iter().map(|e| e.label).collect();
        assert_eq!(order, [Label::Fake, Label::Real, Label::Fake, Label::Real, Label::Real]);
    }

    #[test]
    fn grouped_and_pair_major_orders() {
        let idx = index(&[
            ("A", Label::Fake, [1.0, 0.0]),
            ("B", Label::Fake, [0.9, 0.1]),
            ("C", Label::Real, [0.95, 0.05]),
            ("D", Label::Real, [0.0, 1.0]),
        ]);
        let set = retrieve_balanced(&idx, &q([1.0, 0.0]), 2, None).unwrap();
        let pm: Vec<_> = set.pair_major().iter().map(|e| e.cascade_id.as_str()).collect();
        let gr: Vec<_> = set.grouped().iter().map(|e| e.cascade_id.as_str()).collect();
        assert_eq!(pm, ["A", "C", "C", "A"]);
        assert_eq!(gr, ["A", "C", "C", "A"]);
        assert_eq!(set.len(), 4);
    }
}
