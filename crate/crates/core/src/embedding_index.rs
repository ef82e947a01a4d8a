//! Bag-of-words + structure embeddings and exact cosine retrieval.
//!
//! An embedding is the TF-IDF vector of the root tweet text (raw counts,
//! `idf = ln(N / df)`) followed by four z-normalized structural slots:
//! average degree centrality, eigenvector centrality, `ln(1 + median delay)`
//! and `ln(1 + node count)`. Vocabulary, idf and normalization statistics
//! come from the TRAIN split only.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Label, PropagationTree};
use crate::graph_features::structural_summary;
use crate::io::{self, IoError};

pub const STRUCTURAL_SLOTS: usize = 4;
pub const DEFAULT_TEXT_CAP: usize = 4096;
const FORMAT_TAG: &str = "astroturf-rag-index";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("empty training split")]
    EmptyTraining,
    #[error("empty index")]
    EmptyIndex,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("n must be at least 1")]
    ZeroN,
    #[error("training tree {0} has no label")]
    Unlabeled(String),
    #[error("unsupported index file: format {format:?} version {version}")]
    Format { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerOptions {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_handles: bool,
}

impl Default for TokenizerOptions {
    fn default() -> Self {
        TokenizerOptions { lowercase: true, strip_urls: true, strip_handles: true }
    }
}

/// Whitespace words minus URLs and `@handles`, split on non-alphanumerics.
/// Hashtags survive as their bare word.
pub fn tokenize(text: &str, options: &TokenizerOptions) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let lower = word.to_lowercase();
        if options.strip_urls
            && (lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www."))
        {
            continue;
        }
        if options.strip_handles && word.starts_with('@') {
            continue;
        }
        let source = if options.lowercase { lower.as_str() } else { word };
        tokens.extend(source.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned));
    }
    tokens
}

/// A text vectorizer that an index can be built on. The bag-of-words
/// [`TfIdfVectorizer`] is the only shipped implementation.
pub trait TextVectorizer {
    fn dim(&self) -> usize;
    /// Sparse `(column, weight)` pairs, columns ascending, zeros omitted.
    fn vectorize(&self, text: &str) -> Vec<(usize, f64)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfVectorizer {
    /// Token of each column.
    pub vocabulary: Vec<String>,
    pub idf: Vec<f64>,
    pub tokenizer: TokenizerOptions,
    #[serde(skip)]
    columns: HashMap<String, usize>,
}

impl TfIdfVectorizer {
    /// Keep the `cap` most frequent tokens (corpus count, ties by token).
    pub fn fit<'a>(documents: impl IntoIterator<Item = &'a str>, cap: usize, tokenizer: TokenizerOptions) -> Self {
        let mut counts: HashMap<String, (u64, u64)> = HashMap::new();
        let mut n_docs = 0usize;
        for doc in documents {
            n_docs += 1;
            let tokens = tokenize(doc, &tokenizer);
            let mut seen = std::collections::HashSet::new();
            for token in tokens {
                let entry = counts.entry(token.clone()).or_insert((0, 0));
                entry.0 += 1;
                if seen.insert(token) {
                    entry.1 += 1;
                }
            }
        }
        let mut ranked: Vec<(String, (u64, u64))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap);
        let idf = ranked.iter().map(|(_, (_, df))| (n_docs as f64 / (*df).max(1) as f64).ln()).collect();
        let vocabulary = ranked.into_iter().map(|(t, _)| t).collect();
        let mut v = TfIdfVectorizer { vocabulary, idf, tokenizer, columns: HashMap::new() };
        v.rebuild_columns();
        v
    }

    fn rebuild_columns(&mut self) {
        self.columns = self.vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }
}

impl TextVectorizer for TfIdfVectorizer {
    fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    fn vectorize(&self, text: &str) -> Vec<(usize, f64)> {
        let mut tf: HashMap<usize, u64> = HashMap::new();
        for token in tokenize(text, &self.tokenizer) {
            if let Some(&col) = self.columns.get(&token) {
                *tf.entry(col).or_default() += 1;
            }
        }
        let mut out: Vec<(usize, f64)> =
            tf.into_iter().map(|(col, count)| (col, count as f64 * self.idf[col])).filter(|&(_, w)| w != 0.0).collect();
        out.sort_by_key(|&(col, _)| col);
        out
    }
}

/// Raw (unnormalized) structural features of a tree.
pub fn structural_features(tree: &PropagationTree) -> [f64; STRUCTURAL_SLOTS] {
    let s = structural_summary(tree);
    [s.avg_degree_centrality, s.eigenvector_centrality, s.median_retweet_delay.ln_1p(), (s.node_count as f64).ln_1p()]
}

/// Per-slot z-score with TRAIN mean and population standard deviation. A
/// slot with (numerically) zero variance always maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralNormalizer {
    pub mean: [f64; STRUCTURAL_SLOTS],
    pub std: [f64; STRUCTURAL_SLOTS],
}

impl StructuralNormalizer {
    pub fn fit(rows: &[[f64; STRUCTURAL_SLOTS]]) -> Self {
        let n = rows.len().max(1) as f64;
        let mut mean = [0.0; STRUCTURAL_SLOTS];
        let mut std = [0.0; STRUCTURAL_SLOTS];
        for slot in 0..STRUCTURAL_SLOTS {
            mean[slot] = rows.iter().map(|r| r[slot]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[slot] - mean[slot]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            // rounding noise around a constant column is not variance
            std[slot] = if sd <= 1e-12 * mean[slot].abs().max(1.0) { 0.0 } else { sd };
        }
        StructuralNormalizer { mean, std }
    }

    pub fn apply(&self, raw: &[f64; STRUCTURAL_SLOTS]) -> [f64; STRUCTURAL_SLOTS] {
        let mut out = [0.0; STRUCTURAL_SLOTS];
        for slot in 0..STRUCTURAL_SLOTS {
            if self.std[slot] > 0.0 {
                out[slot] = (raw[slot] - self.mean[slot]) / self.std[slot];
            }
        }
        out
    }
}

/// A sparse real vector of fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeEmbedding {
    dim: usize,
    /// `(column, value)`, columns strictly ascending, no zeros.
    entries: Vec<(usize, f64)>,
}

impl CascadeEmbedding {
    pub fn from_sparse(dim: usize, mut entries: Vec<(usize, f64)>) -> Self {
        entries.retain(|&(_, v)| v != 0.0);
        entries.sort_by_key(|&(c, _)| c);
        entries.dedup_by_key(|e| e.0);
        debug_assert!(entries.iter().all(|&(c, v)| c < dim && v.is_finite()));
        CascadeEmbedding { dim, entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values.iter().copied().enumerate().filter(|&(_, v)| v != 0.0).collect();
        CascadeEmbedding { dim: values.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(c, v) in &self.entries {
            out[c] = v;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_sparse(self.dim, self.entries.iter().map(|&(c, v)| (c, v * factor)).collect())
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    fn dot(&self, other: &CascadeEmbedding) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn similarity(a: &CascadeEmbedding, b: &CascadeEmbedding) -> Result<f64, IndexError> {
    if a.dim != b.dim {
        return Err(IndexError::DimensionMismatch(a.dim, b.dim));
    }
    Ok(cosine(a, a.norm(), b, b.norm()))
}

fn cosine(a: &CascadeEmbedding, a_norm: f64, b: &CascadeEmbedding, b_norm: f64) -> f64 {
    if a_norm == 0.0 || b_norm == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (a_norm * b_norm)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub cascade_id: String,
    pub label: Label,
    pub embedding: CascadeEmbedding,
    #[serde(skip)]
    norm: f64,
}

impl IndexEntry {
    pub fn norm(&self) -> f64 {
        self.norm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexConfig {
    pub text_cap: usize,
    pub tokenizer: TokenizerOptions,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig { text_cap: DEFAULT_TEXT_CAP, tokenizer: TokenizerOptions::default() }
    }
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub cascade_id: String,
    pub similarity: f64,
}

/// Immutable training-set index with exhaustive cosine search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingIndex {
    format: String,
    version: u32,
    pub config: IndexConfig,
    pub vectorizer: TfIdfVectorizer,
    pub normalizer: StructuralNormalizer,
    entries: Vec<IndexEntry>,
    #[serde(skip)]
    positions: HashMap<String, usize>,
}

impl EmbeddingIndex {
    /// Fit vocabulary, idf and normalization on `train`, then embed every
    /// tree in it.
    pub fn fit<'a, I>(train: I, config: IndexConfig) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = &'a PropagationTree>,
    {
        let trees: Vec<&PropagationTree> = train.into_iter().collect();
        if trees.is_empty() {
            return Err(IndexError::EmptyTraining);
        }
        let vectorizer = TfIdfVectorizer::fit(
            trees.iter().map(|t| t.root().text.as_str()),
            config.text_cap,
            config.tokenizer.clone(),
        );
        let raw: Vec<_> = trees.iter().map(|t| structural_features(t)).collect();
        let normalizer = StructuralNormalizer::fit(&raw);
        let mut index = EmbeddingIndex {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            config,
            vectorizer,
            normalizer,
            entries: Vec::with_capacity(trees.len()),
            positions: HashMap::new(),
        };
        for (tree, features) in trees.iter().zip(&raw) {
            let label = tree.label().ok_or_else(|| IndexError::Unlabeled(tree.cascade_id().to_string()))?;
            let embedding = index.embed_parts(&tree.root().text, features);
            index.entries.push(IndexEntry {
                cascade_id: tree.cascade_id().to_string(),
                label,
                norm: embedding.norm(),
                embedding,
            });
        }
        index.rebuild_lookup();
        Ok(index)
    }

    /// Build an index over precomputed embeddings (e.g. from another
    /// vectorizer). The stored vectorizer is empty; [`Self::embed`] then only
    /// fills structural slots, so callers embed queries themselves.
    pub fn from_embeddings(entries: Vec<(String, Label, CascadeEmbedding)>) -> Result<Self, IndexError> {
        let dim = entries.first().ok_or(IndexError::EmptyIndex)?.2.dim();
        let mut out = Vec::with_capacity(entries.len());
        for (cascade_id, label, embedding) in entries {
            if embedding.dim() != dim {
                return Err(IndexError::DimensionMismatch(dim, embedding.dim()));
            }
            out.push(IndexEntry { cascade_id, label, norm: embedding.norm(), embedding });
        }
        let mut index = EmbeddingIndex {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            config: IndexConfig { text_cap: dim.saturating_sub(STRUCTURAL_SLOTS), ..IndexConfig::default() },
            vectorizer: TfIdfVectorizer::fit(std::iter::empty(), 0, TokenizerOptions::default()),
            normalizer: StructuralNormalizer { mean: [0.0; 4], std: [0.0; 4] },
            entries: out,
            positions: HashMap::new(),
        };
        index.rebuild_lookup();
        Ok(index)
    }

    fn rebuild_lookup(&mut self) {
        self.vectorizer.rebuild_columns();
        for e in &mut self.entries {
            e.norm = e.embedding.norm();
        }
        self.positions = self.entries.iter().enumerate().map(|(i, e)| (e.cascade_id.clone(), i)).collect();
    }

    /// Embedding dimension: vocabulary size plus the structural slots.
    pub fn dim(&self) -> usize {
        match self.entries.first() {
            Some(e) => e.embedding.dim(),
            None => self.vectorizer.dim() + STRUCTURAL_SLOTS,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, cascade_id: &str) -> Option<&IndexEntry> {
        self.positions.get(cascade_id).map(|&i| &self.entries[i])
    }

    fn embed_parts(&self, text: &str, raw: &[f64; STRUCTURAL_SLOTS]) -> CascadeEmbedding {
        let text_dim = self.vectorizer.dim();
        let mut entries = self.vectorizer.vectorize(text);
        let structural = self.normalizer.apply(raw);
        entries.extend(structural.iter().enumerate().map(|(slot, &v)| (text_dim + slot, v)));
        CascadeEmbedding::from_sparse(text_dim + STRUCTURAL_SLOTS, entries)
    }

    /// Embed any tree with the TRAIN-fitted vocabulary and statistics.
    /// Out-of-vocabulary tokens are ignored.
    pub fn embed(&self, tree: &PropagationTree) -> CascadeEmbedding {
        self.embed_parts(&tree.root().text, &structural_features(tree))
    }

    /// Exhaustive top-n by cosine similarity, descending, ties by
    /// cascade id. `exclude` is never returned.
    pub fn top_n(&self, query: &CascadeEmbedding, n: usize, exclude: Option<&str>) -> Result<Vec<Hit>, IndexError> {
        self.top_n_where(query, n, exclude, |_| true)
    }

    /// [`Self::top_n`] restricted to entries accepted by `keep`.
    pub fn top_n_where(
        &self,
        query: &CascadeEmbedding,
        n: usize,
        exclude: Option<&str>,
        keep: impl Fn(&IndexEntry) -> bool,
    ) -> Result<Vec<Hit>, IndexError> {
        if n == 0 {
            return Err(IndexError::ZeroN);
        }
        if self.entries.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.dim() != self.dim() {
            return Err(IndexError::DimensionMismatch(query.dim(), self.dim()));
        }
        let q_norm = query.norm();
        let mut scored: Vec<(f64, &str)> = self
            .entries
            .iter()
            .filter(|e| Some(e.cascade_id.as_str()) != exclude && keep(e))
            .map(|e| (cosine(query, q_norm, &e.embedding, e.norm), e.cascade_id.as_str()))
            .collect();
        let by_rank = |a: &(f64, &str), b: &(f64, &str)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1));
        if scored.len() > n {
            scored.select_nth_unstable_by(n - 1, by_rank);
            scored.truncate(n);
        }
        scored.sort_by(by_rank);
        Ok(scored.into_iter().map(|(s, id)| Hit { cascade_id: id.to_string(), similarity: s }).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        Ok(io::write_json(path, self)?)
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let mut index: EmbeddingIndex = io::read_json(path)?;
        if index.format != FORMAT_TAG || index.version != FORMAT_VERSION {
            return Err(IndexError::Format { format: index.format, version: index.version });
        }
        index.rebuild_lookup();
        Ok(index)
    }
}
