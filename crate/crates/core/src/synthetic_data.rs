//! Labeled synthetic cascades with a controllable class prior.
//!
//! FAKE cascades carry two planted signals: a marker token in the root text
//! (with configurable probability) and retweet delays compressed by a
//! burstiness factor. Non-root tweets are wired so that tree reconstruction
//! exercises every attachment rule: explicit `RT @user` mentions (in the
//! text or as `rt_source_user`), follow edges, and follower-weighted
//! fallback.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{CascadeRecord, Label, RawTweet};
use crate::seed;

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "tem", "lo", "va", "nis", "por", "de", "mu", "sal", "fe", "gor", "ti", "an", "el", "pra", "zu",
    "hin", "ca", "do", "ver", "si", "lum",
];
const START_TIME: f64 = 1_451_606_400.0;
const MAX_CASCADE_SIZE: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub count: usize,
    pub positive_rate: f64,
    /// Mean of the geometric cascade-size distribution (support 1, 2, ...).
    pub mean_size: f64,
    pub follower_exponent: f64,
    pub follower_max: u64,
    pub user_pool: usize,
    pub planted_token: String,
    /// Chance that a FAKE root text contains the planted token.
    pub planting_probability: f64,
    /// Factor applied to FAKE retweet delays; below 1 compresses them.
    pub burstiness: f64,
    pub mean_delay_secs: f64,
    pub vocabulary_size: usize,
    pub words_per_text: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            count: 1000,
            positive_rate: 0.097,
            mean_size: 6.0,
            follower_exponent: 2.5,
            follower_max: 1_000_000,
            user_pool: 50_000,
            planted_token: "zqxv".to_string(),
            planting_probability: 0.9,
            burstiness: 0.2,
            mean_delay_secs: 900.0,
            vocabulary_size: 400,
            words_per_text: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid generator config: {0}")]
pub struct ConfigError(pub String);

impl GeneratorConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_string()));
        if self.count == 0 {
            return fail("count must be at least 1");
        }
        for (name, v) in [("positive_rate", self.positive_rate), ("planting_probability", self.planting_probability)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.mean_size >= 1.0) {
            return fail("mean_size must be at least 1");
        }
        if !(self.follower_exponent > 1.0) {
            return fail("follower_exponent must exceed 1");
        }
        if self.follower_max == 0 || self.user_pool == 0 || self.vocabulary_size == 0 || self.words_per_text == 0 {
            return fail("follower_max, user_pool, vocabulary_size and words_per_text must be at least 1");
        }
        if !(self.burstiness > 0.0 && self.mean_delay_secs > 0.0) {
            return fail("burstiness and mean_delay_secs must be positive");
        }
        if self.planted_token.is_empty() || self.planted_token.contains(char::is_whitespace) {
            return fail("planted_token must be one non-empty word");
        }
        Ok(())
    }
}

/// Pseudo-words built from syllables; never contains the planted token.
pub fn vocabulary(size: usize, planted: &str) -> Vec<String> {
    let n = SYLLABLES.len();
    let mut words = Vec::with_capacity(size);
    let mut i = 0usize;
    while words.len() < size {
        let (a, b, c) = (i % n, (i / n) % n, i / (n * n));
        let mut w = format!("{}{}", SYLLABLES[a], SYLLABLES[b]);
        if c > 0 {
            w.push_str(&c.to_string());
        }
        if !w.contains(planted) {
            words.push(w);
        }
        i += 1;
    }
    words
}

/// Inverse-CDF draw from a geometric distribution on {1, 2, ...}.
fn geometric(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = 1.0 - rng.random::<f64>();
    1 + (u.ln() / (1.0 - p).ln()).floor() as usize
}

/// Discrete power law `P(k) ~ (k+1)^-alpha` via a continuous Pareto draw,
/// truncated at `max`. Zero is a possible outcome.
fn power_law(rng: &mut ChaCha8Rng, alpha: f64, max: u64) -> u64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    let x = u.powf(-1.0 / (alpha - 1.0));
    ((x.floor() - 1.0).max(0.0) as u64).min(max)
}

fn exponential(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    -mean * u.ln()
}

fn user_id(i: usize) -> String {
    format!("u{i:06}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub users: usize,
    pub tweets: usize,
    pub trees: usize,
    pub positives: usize,
    pub positive_fraction: f64,
    pub seed: u64,
}

/// Deterministic in the config.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<CascadeRecord>, ConfigError> {
    config.validate()?;
    let words = vocabulary(config.vocabulary_size, &config.planted_token);

    let mut user_rng = seed::stream(config.seed, &[b"users"]);
    let followers: Vec<u64> = (0..config.user_pool)
        .map(|_| power_law(&mut user_rng, config.follower_exponent, config.follower_max))
        .collect();

    let positives = (config.count as f64 * config.positive_rate).round() as usize;
    let mut labels: Vec<Label> =
        (0..config.count).map(|i| if i < positives { Label::Fake } else { Label::Real }).collect();
    labels.shuffle(&mut seed::stream(config.seed, &[b"labels"]));

    let max_size = MAX_CASCADE_SIZE.min(config.user_pool);
    let records = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = seed::stream(config.seed, &[b"cascade", &(i as u64).to_le_bytes()]);
            cascade(config, &words, &followers, i, label, max_size, &mut rng)
        })
        .collect();
    Ok(records)
}

fn cascade(
    config: &GeneratorConfig,
    words: &[String],
    followers: &[u64],
    i: usize,
    label: Label,
    max_size: usize,
    rng: &mut ChaCha8Rng,
) -> CascadeRecord {
    let size = geometric(rng, config.mean_size).min(max_size);
    let authors: Vec<usize> = index::sample(rng, config.user_pool, size).into_vec();

    let mut text: Vec<&str> =
        (0..config.words_per_text).map(|_| words[rng.random_range(0..words.len())].as_str()).collect();
    if label == Label::Fake && rng.random_bool(config.planting_probability) {
        let at = rng.random_range(0..=text.len());
        text.insert(at, &config.planted_token);
    }
    let root_text = text.join(" ");

    let mean_gap = match label {
        Label::Fake => config.mean_delay_secs * config.burstiness,
        Label::Real => config.mean_delay_secs,
    };
    let root_time = START_TIME + 3600.0 * i as f64 + (rng.random::<f64>() * 3600.0).round();
    let mut timestamps = vec![root_time];
    for _ in 1..size {
        let gap = exponential(rng, mean_gap).max(0.001);
        let last = *timestamps.last().expect("root present");
        timestamps.push(((last + gap) * 1000.0).round() / 1000.0);
    }

    let cascade_id = format!("c{i:06}");
    let mut follow_edges = Vec::new();
    let mut tweets = Vec::with_capacity(size);
    for (k, &author) in authors.iter().enumerate() {
        let mut tweet = RawTweet {
            tweet_id: format!("{cascade_id}-t{k:03}"),
            user_id: user_id(author),
            text: root_text.clone(),
            timestamp: timestamps[k],
            followers: followers[author] as i64,
            rt_source_user: None,
        };
        if k > 0 {
            let parent = user_id(authors[rng.random_range(0..k)]);
            match rng.random_range(0..6) {
                0 => tweet.text = format!("RT @{parent}: {root_text}"),
                1 => tweet.rt_source_user = Some(parent),
                2 | 3 => follow_edges.push((tweet.user_id.clone(), parent)),
                _ => {}
            }
        }
        tweets.push(tweet);
    }
    CascadeRecord { cascade_id, label: Some(label), tweets, follow_edges }
}

pub fn manifest(records: &[CascadeRecord], seed: u64) -> Manifest {
    let users: HashSet<&str> = records.iter().flat_map(|r| r.tweets.iter().map(|t| t.user_id.as_str())).collect();
    let positives = records.iter().filter(|r| r.label == Some(Label::Fake)).count();
    Manifest {
        users: users.len(),
        tweets: records.iter().map(|r| r.tweets.len()).sum(),
        trees: records.len(),
        positives,
        positive_fraction: if records.is_empty() { 0.0 } else { positives as f64 / records.len() as f64 },
        seed,
    }
}
