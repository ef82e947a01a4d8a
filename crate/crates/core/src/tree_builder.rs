//! Propagation-tree reconstruction from a star-shaped cascade.
//!
//! Tweets are sorted by time; each retweet is attached to an earlier
//! (re-)tweet by the first rule that applies:
//!
//! 1. its text (or the structured `rt_source_user` field) names an author
//!    via `RT @handle`: attach to the most recent earlier tweet by that author;
//! 2. its author follows one or more earlier authors: attach to the tweet of
//!    the followed author with the most followers (ties: earlier tweet);
//! 3. otherwise draw an earlier tweet with probability proportional to its
//!    author's follower count.
//!
//! The random draw for node `i` comes from a stream keyed by
//! `(seed, cascade_id, i)`.

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    dangling_references, time_order, validate_cascade, CascadeRecord, PropagationTree, TreeError, TweetNode, UserRef,
};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Attachment {
    RtMention,
    Follows,
    WeightedRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecision {
    /// 1-based index of the attached node.
    pub node: usize,
    pub attachment: Attachment,
    pub parent: usize,
    pub candidates: usize,
    pub rng_seed: u64,
    /// Set when the weighted fallback saw only zero follower counts.
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildTrace {
    pub cascade_id: String,
    pub seed: u64,
    /// One entry per non-root node, in node order.
    pub decisions: Vec<NodeDecision>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("cascade {0} has no tweets")]
    Empty(String),
    #[error("cascade {cascade_id} is invalid: {}", violations.join("; "))]
    Invalid { cascade_id: String, violations: Vec<String> },
    #[error("fallback needs at least one candidate")]
    NoCandidates,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FallbackDistribution {
    pub probabilities: Vec<f64>,
    /// All follower counts were zero and the uniform distribution was used.
    pub degenerate: bool,
}

/// `P(j) = k_j / sum(k)`, or uniform when every count is zero.
pub fn fallback_distribution(followers: &[u64]) -> Result<FallbackDistribution, BuildError> {
    if followers.is_empty() {
        return Err(BuildError::NoCandidates);
    }
    let total: f64 = followers.iter().map(|&k| k as f64).sum();
    if total == 0.0 {
        let p = 1.0 / followers.len() as f64;
        return Ok(FallbackDistribution { probabilities: vec![p; followers.len()], degenerate: true });
    }
    Ok(FallbackDistribution { probabilities: followers.iter().map(|&k| k as f64 / total).collect(), degenerate: false })
}

/// First handle following an `RT @` token (`RT` case-insensitive and not
/// glued to a preceding word character).
pub fn parse_rt_mention(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let is_word = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    let mut i = 0;
    while i + 4 <= bytes.len() {
        if bytes[i..i + 4].eq_ignore_ascii_case(b"rt @") && (i == 0 || !is_word(bytes[i - 1])) {
            let start = i + 4;
            let end = start + bytes[start..].iter().take_while(|&&b| is_word(b)).count();
            if end > start {
                return Some(&text[start..end]);
            }
        }
        i += 1;
    }
    None
}

/// Reconstruct the propagation tree of `record`. Deterministic in
/// `(record, seed)`.
pub fn build_tree(record: &CascadeRecord, seed: u64) -> Result<(PropagationTree, BuildTrace), BuildError> {
    if record.tweets.is_empty() {
        return Err(BuildError::Empty(record.cascade_id.clone()));
    }
    let violations = validate_cascade(record);
    if !violations.is_empty() {
        return Err(BuildError::Invalid { cascade_id: record.cascade_id.clone(), violations });
    }
    let warnings = dangling_references(record);

    let mut tweets: Vec<_> = record.tweets.iter().collect();
    tweets.sort_by(|a, b| time_order(a.timestamp, &a.tweet_id, b.timestamp, &b.tweet_id));

    let users: HashSet<&str> = tweets.iter().map(|t| t.user_id.as_str()).collect();
    let follows: HashSet<(&str, &str)> = record
        .follow_edges
        .iter()
        .filter(|(a, b)| users.contains(a.as_str()) && users.contains(b.as_str()))
        .map(|(a, b)| (a.as_str(), b.as_str()))
        .collect();
    let followers: HashMap<&str, u64> = tweets.iter().map(|t| (t.user_id.as_str(), t.followers as u64)).collect();
    let k = |j: usize| followers[tweets[j].user_id.as_str()];

    let mut edges = Vec::with_capacity(tweets.len().saturating_sub(1));
    let mut decisions = Vec::with_capacity(tweets.len().saturating_sub(1));
    for i in 1..tweets.len() {
        let node = i + 1;
        let rng_seed = seed::derive_seed(seed, &[record.cascade_id.as_bytes(), &(node as u64).to_le_bytes()]);
        let tweet = tweets[i];

        let mention = match tweet.rt_source_user.as_deref() {
            Some(src) if users.contains(src) => Some(src),
            _ => parse_rt_mention(&tweet.text),
        };
        let by_mention: Vec<usize> = match mention {
            Some(handle) => (0..i).filter(|&j| tweets[j].user_id.eq_ignore_ascii_case(handle)).collect(),
            None => Vec::new(),
        };
        let decision = if let Some(&j) = by_mention.last() {
            NodeDecision {
                node,
                attachment: Attachment::RtMention,
                parent: j + 1,
                candidates: by_mention.len(),
                rng_seed,
                degenerate: false,
            }
        } else {
            let followed: Vec<usize> =
                (0..i).filter(|&j| follows.contains(&(tweet.user_id.as_str(), tweets[j].user_id.as_str()))).collect();
            // sorted order already breaks follower ties by (timestamp, tweet_id)
            let best = followed.iter().copied().fold(None, |best: Option<usize>, j| match best {
                Some(b) if k(b) >= k(j) => Some(b),
                _ => Some(j),
            });
            match best {
                Some(j) => NodeDecision {
                    node,
                    attachment: Attachment::Follows,
                    parent: j + 1,
                    candidates: followed.len(),
                    rng_seed,
                    degenerate: false,
                },
                None => {
                    let counts: Vec<u64> = (0..i).map(k).collect();
                    let dist = fallback_distribution(&counts)?;
                    let sampler = WeightedIndex::new(&dist.probabilities)
                        .expect("fallback probabilities are positive and finite");
                    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                    let j = sampler.sample(&mut rng);
                    NodeDecision {
                        node,
                        attachment: Attachment::WeightedRandom,
                        parent: j + 1,
                        candidates: i,
                        rng_seed,
                        degenerate: dist.degenerate,
                    }
                }
            }
        };
        edges.push((decision.parent, node));
        decisions.push(decision);
    }

    let root_ts = tweets[0].timestamp;
    let nodes = tweets
        .iter()
        .map(|t| TweetNode {
            tweet_id: t.tweet_id.clone(),
            author: UserRef { user_id: t.user_id.clone(), followers: t.followers as u64 },
            text: t.text.clone(),
            timestamp: t.timestamp,
            delay: t.timestamp - root_ts,
        })
        .collect();
    let tree = PropagationTree::new(record.cascade_id.clone(), nodes, edges, record.label)?;
    let trace = BuildTrace { cascade_id: record.cascade_id.clone(), seed, decisions, warnings };
    Ok((tree, trace))
}
