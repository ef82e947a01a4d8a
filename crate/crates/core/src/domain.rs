//! Shared vocabulary: users, tweets, raw cascades, propagation trees and
//! labeled datasets.
//!
//! Node indices are 1-based everywhere they leave this module (edge lists,
//! traces, prompts): node 1 is the root tweet.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Real,
}

impl Label {
    pub fn opposite(self) -> Label {
        match self {
            Label::Fake => Label::Real,
            Label::Real => Label::Fake,
        }
    }

    pub fn is_fake(self) -> bool {
        self == Label::Fake
    }

    /// Capitalized form used in prompts and model answers.
    pub fn display_name(self) -> &'static str {
        match self {
            Label::Fake => "Fake",
            Label::Real => "Real",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRef {
    pub user_id: String,
    pub followers: u64,
}

/// One tweet or retweet as it appears in the raw dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTweet {
    pub tweet_id: String,
    pub user_id: String,
    pub text: String,
    /// Seconds since the epoch.
    pub timestamp: f64,
    /// Signed so that corrupt input survives parsing and gets reported by
    /// [`validate_cascade`].
    pub followers: i64,
    /// Author of the retweeted tweet when upstream data records it exactly.
    #[serde(default)]
    pub rt_source_user: Option<String>,
}

/// A root tweet with all of its retweets, before tree reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeRecord {
    pub cascade_id: String,
    #[serde(default)]
    pub label: Option<Label>,
    pub tweets: Vec<RawTweet>,
    /// `(follower_user_id, followee_user_id)` pairs.
    #[serde(default)]
    pub follow_edges: Vec<(String, String)>,
}

/// Check every invariant of a raw cascade. Never aborts; returns one message
/// per violation, each naming the offending field.
pub fn validate_cascade(record: &CascadeRecord) -> Vec<String> {
    let mut violations = Vec::new();
    if record.cascade_id.is_empty() {
        violations.push("cascade_id: empty".to_string());
    }
    if record.tweets.is_empty() {
        violations.push("tweets: empty".to_string());
        return violations;
    }
    let mut seen_ids = HashSet::new();
    let mut followers_by_user: HashMap<&str, i64> = HashMap::new();
    for (pos, tweet) in record.tweets.iter().enumerate() {
        let tid = &tweet.tweet_id;
        if tid.is_empty() {
            violations.push(format!("tweet_id: empty at position {pos}"));
        } else if !seen_ids.insert(tid.as_str()) {
            violations.push(format!("tweet_id: duplicate {tid}"));
        }
        if tweet.user_id.is_empty() {
            violations.push(format!("user_id: empty in tweet {tid}"));
        }
        if !tweet.timestamp.is_finite() {
            violations.push(format!("timestamp: non-finite in tweet {tid}"));
        }
        if tweet.followers < 0 {
            violations.push(format!("followers: negative for user {} in tweet {tid}", tweet.user_id));
        }
        match followers_by_user.get(tweet.user_id.as_str()) {
            Some(&k) if k != tweet.followers => {
                violations.push(format!("followers: inconsistent for user {} in tweet {tid}", tweet.user_id))
            }
            Some(_) => {}
            None => {
                followers_by_user.insert(&tweet.user_id, tweet.followers);
            }
        }
    }
    violations
}

/// References to users absent from the record. These are dropped at build
/// time rather than rejected.
pub fn dangling_references(record: &CascadeRecord) -> Vec<String> {
    let users: HashSet<&str> = record.tweets.iter().map(|t| t.user_id.as_str()).collect();
    let mut warnings = Vec::new();
    for tweet in &record.tweets {
        if let Some(src) = &tweet.rt_source_user {
            if !users.contains(src.as_str()) {
                warnings.push(format!("rt_source_user: unknown user {src} in tweet {}; ignored", tweet.tweet_id));
            }
        }
    }
    for (follower, followee) in &record.follow_edges {
        if !users.contains(follower.as_str()) || !users.contains(followee.as_str()) {
            warnings.push(format!("follow_edges: ({follower}, {followee}) references an unknown user; ignored"));
        }
    }
    warnings
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetNode {
    pub tweet_id: String,
    pub author: UserRef,
    pub text: String,
    pub timestamp: f64,
    /// Seconds since the root tweet.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("expected {expected} edges, found {found}")]
    EdgeCount { expected: usize, found: usize },
    #[error("edge ({parent}->{child}) out of range for {nodes} nodes")]
    OutOfRange { parent: usize, child: usize, nodes: usize },
    #[error("node {0} has more than one parent")]
    DuplicateParent(usize),
    #[error("edge ({parent}->{child}) points backwards in time order")]
    NotTimeRespecting { parent: usize, child: usize },
    #[error("nodes are not sorted by (timestamp, tweet_id) at position {0}")]
    Unsorted(usize),
    #[error("node {node} has delay {delay}, expected {expected}")]
    BadDelay { node: usize, delay: f64, expected: f64 },
}

/// Total order used to sort tweets: timestamp, then tweet id.
pub fn time_order(a_ts: f64, a_id: &str, b_ts: f64, b_id: &str) -> std::cmp::Ordering {
    a_ts.total_cmp(&b_ts).then_with(|| a_id.cmp(b_id))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct TreeRepr {
    cascade_id: String,
    nodes: Vec<TweetNode>,
    edges: Vec<(usize, usize)>,
    #[serde(default)]
    label: Option<Label>,
}

/// A reconstructed retweet tree.
///
/// Nodes are sorted by `(timestamp, tweet_id)`; edges are `(parent, child)`
/// pairs of 1-based indices, stored sorted by child. Every child has exactly
/// one parent with a smaller index, which makes the graph connected and
/// acyclic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeRepr")]
pub struct PropagationTree {
    cascade_id: String,
    nodes: Vec<TweetNode>,
    edges: Vec<(usize, usize)>,
    label: Option<Label>,
}

impl TryFrom<TreeRepr> for PropagationTree {
    type Error = TreeError;

    fn try_from(r: TreeRepr) -> Result<Self, TreeError> {
        PropagationTree::new(r.cascade_id, r.nodes, r.edges, r.label)
    }
}

impl PropagationTree {
    pub fn new(
        cascade_id: String,
        nodes: Vec<TweetNode>,
        mut edges: Vec<(usize, usize)>,
        label: Option<Label>,
    ) -> Result<Self, TreeError> {
        let n = nodes.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        if edges.len() != n - 1 {
            return Err(TreeError::EdgeCount { expected: n - 1, found: edges.len() });
        }
        for w in nodes.windows(2).enumerate() {
            let (i, pair) = w;
            if time_order(pair[0].timestamp, &pair[0].tweet_id, pair[1].timestamp, &pair[1].tweet_id)
                == std::cmp::Ordering::Greater
            {
                return Err(TreeError::Unsorted(i + 2));
            }
        }
        let root_ts = nodes[0].timestamp;
        for (i, node) in nodes.iter().enumerate() {
            let expected = node.timestamp - root_ts;
            if node.delay != expected || node.delay < 0.0 {
                return Err(TreeError::BadDelay { node: i + 1, delay: node.delay, expected });
            }
        }
        let mut has_parent = vec![false; n + 1];
        for &(parent, child) in &edges {
            if parent == 0 || child < 2 || parent > n || child > n {
                return Err(TreeError::OutOfRange { parent, child, nodes: n });
            }
            if parent >= child {
                return Err(TreeError::NotTimeRespecting { parent, child });
            }
            if nodes[parent - 1].timestamp > nodes[child - 1].timestamp {
                return Err(TreeError::NotTimeRespecting { parent, child });
            }
            if std::mem::replace(&mut has_parent[child], true) {
                return Err(TreeError::DuplicateParent(child));
            }
        }
        edges.sort_by_key(|&(_, child)| child);
        Ok(PropagationTree { cascade_id, nodes, edges, label })
    }

    pub fn cascade_id(&self) -> &str {
        &self.cascade_id
    }

    pub fn nodes(&self) -> &[TweetNode] {
        &self.nodes
    }

    /// `(parent, child)` pairs, 1-based, sorted by child.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn label(&self) -> Option<Label> {
        self.label
    }

    pub fn with_label(mut self, label: Option<Label>) -> Self {
        self.label = label;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &TweetNode {
        &self.nodes[0]
    }

    /// Parent of a 1-based node index; `None` for the root.
    pub fn parent_of(&self, child: usize) -> Option<usize> {
        if child < 2 || child > self.nodes.len() {
            return None;
        }
        Some(self.edges[child - 2].0)
    }

    /// Undirected adjacency lists, 0-based.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(p, c) in &self.edges {
            adj[p - 1].push(c - 1);
            adj[c - 1].push(p - 1);
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("empty split")]
    EmptySplit,
    #[error("tree {0} has no label")]
    Unlabeled(String),
    #[error("{trees} trees but {splits} split assignments")]
    SplitMismatch { trees: usize, splits: usize },
    #[error("duplicate cascade id {0}")]
    DuplicateId(String),
    #[error("train fraction {0} outside [0, 1]")]
    BadFraction(f64),
}

/// Labeled trees with a total, disjoint TRAIN/TEST assignment.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    trees: Vec<PropagationTree>,
    splits: Vec<Split>,
}

impl LabeledDataset {
    pub fn new(trees: Vec<PropagationTree>, splits: Vec<Split>) -> Result<Self, DatasetError> {
        if trees.len() != splits.len() {
            return Err(DatasetError::SplitMismatch { trees: trees.len(), splits: splits.len() });
        }
        let mut ids = HashSet::new();
        for tree in &trees {
            if tree.label().is_none() {
                return Err(DatasetError::Unlabeled(tree.cascade_id().to_string()));
            }
            if !ids.insert(tree.cascade_id()) {
                return Err(DatasetError::DuplicateId(tree.cascade_id().to_string()));
            }
        }
        Ok(LabeledDataset { trees, splits })
    }

    /// Every tree assigned to TRAIN.
    pub fn all_train(trees: Vec<PropagationTree>) -> Result<Self, DatasetError> {
        let splits = vec![Split::Train; trees.len()];
        Self::new(trees, splits)
    }

    /// Stratified split: within each label the trees are ordered by id,
    /// shuffled with `seed`, and the first `round(fraction * count)` go to
    /// TRAIN. Preserves the class prior in both halves.
    pub fn stratified(trees: Vec<PropagationTree>, train_fraction: f64, seed: u64) -> Result<Self, DatasetError> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(DatasetError::BadFraction(train_fraction));
        }
        let mut splits = vec![Split::Test; trees.len()];
        let mut rng = seed::stream(seed, &[b"stratified-split"]);
        for label in [Label::Fake, Label::Real] {
            let mut members: Vec<usize> = (0..trees.len()).filter(|&i| trees[i].label() == Some(label)).collect();
            members.sort_by(|&a, &b| trees[a].cascade_id().cmp(trees[b].cascade_id()));
            members.shuffle(&mut rng);
            let take = (train_fraction * members.len() as f64).round() as usize;
            for &i in &members[..take] {
                splits[i] = Split::Train;
            }
        }
        Self::new(trees, splits)
    }

    pub fn trees(&self) -> &[PropagationTree] {
        &self.trees
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn split_trees(&self, split: Split) -> impl Iterator<Item = &PropagationTree> {
        self.trees.iter().zip(&self.splits).filter(move |(_, s)| **s == split).map(|(t, _)| t)
    }

    pub fn label(tree: &PropagationTree) -> Label {
        tree.label().expect("LabeledDataset trees are labeled")
    }

    /// Fraction of FAKE trees within `split`.
    pub fn class_prior(&self, split: Split) -> Result<f64, DatasetError> {
        let (fake, total) = self
            .split_trees(split)
            .fold((0usize, 0usize), |(f, t), tree| (f + tree.label().map_or(0, |l| l.is_fake() as usize), t + 1));
        if total == 0 {
            return Err(DatasetError::EmptySplit);
        }
        Ok(fake as f64 / total as f64)
    }
}
