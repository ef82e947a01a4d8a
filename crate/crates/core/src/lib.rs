//! Detection of coordinated astroturf campaigns in retweet cascades.
//!
//! The pipeline reconstructs a propagation tree for every cascade, encodes
//! its structure and text into a prompt, retrieves class-balanced labeled
//! examples from a bag-of-words index, asks a frozen chat model for a
//! `Fake`/`Real` decision, and scores the answers under heavy class
//! imbalance.
//!
//! Stages compose through JSONL files so every intermediate artifact can be
//! inspected; see the `astroturf-rag` binary.

pub mod balanced_rag;
pub mod domain;
pub mod embedding_index;
pub mod evaluator;
pub mod graph_features;
pub mod io;
pub mod llm_client;
pub mod prompt_builder;
pub mod seed;
pub mod synthetic_data;
pub mod tree_builder;

pub use balanced_rag::{BalancedExampleSet, ExamplePair, ExampleRef, RagMode};
pub use domain::{CascadeRecord, Label, LabeledDataset, PropagationTree, RawTweet, Split, TweetNode, UserRef};
pub use embedding_index::{CascadeEmbedding, EmbeddingIndex, IndexConfig};
pub use graph_features::StructuralSummary;
pub use llm_client::{ChatBackend, CompletionConfig, Decision, PredictionOutcome};
pub use prompt_builder::{EncodingMode, PromptTemplate, RenderedPrompt};
pub use tree_builder::{build_tree, BuildTrace};
