use std::collections::HashMap;
use std::path::PathBuf;

use astroturf_rag::balanced_rag::{BalancedExampleSet, ExamplePair, ExampleRef, RagMode};
use astroturf_rag::domain::{Label, PropagationTree, TweetNode, UserRef};
use astroturf_rag::prompt_builder::ExampleMaterial;

pub fn tree(id: &str, text: &str, delays: &[f64], parents: &[usize], label: Option<Label>) -> PropagationTree {
    let nodes = std::iter::once(0.0)
        .chain(delays.iter().copied())
        .enumerate()
        .map(|(i, d)| TweetNode {
            tweet_id: format!("{id}-{i}"),
            author: UserRef { user_id: format!("{id}-u{i}"), followers: 10 },
            text: if i == 0 { text.to_string() } else { format!("RT: {text}") },
            timestamp: 1_600_000_000.0 + d,
            delay: d,
        })
        .collect();
    let edges = parents.iter().enumerate().map(|(i, &p)| (p, i + 2)).collect();
    PropagationTree::new(id.into(), nodes, edges, label).unwrap()
}

pub fn reference(id: &str, label: Label) -> ExampleRef {
    ExampleRef { cascade_id: id.into(), label, similarity_to_query: 0.5, similarity_to_partner: 0.5 }
}

pub struct Fixture {
    pub query: PropagationTree,
    pub materials: HashMap<String, ExampleMaterial>,
    pub balanced: BalancedExampleSet,
}

pub fn fixture() -> Fixture {
    let examples = [
        tree(
            "s1",
            "Breaking: ballots found in river! Share before they delete this",
            &[12.0, 15.0, 20.0],
            &[1, 1, 2],
            Some(Label::Fake),
        ),
        tree("s2", "Polls open at 7am tomorrow, bring your ID", &[600.0, 4200.0], &[1, 1], Some(Label::Real)),
        tree(
            "s3",
            "Candidate X caught lying AGAIN.\nRetweet if you agree",
            &[5.0, 6.0, 8.0, 9.0],
            &[1, 2, 2, 1],
            Some(Label::Fake),
        ),
        tree("c1", "Election officials confirm counting is on schedule", &[], &[], Some(Label::Real)),
        tree("c2", "They don't want you to see this video", &[30.0], &[1], Some(Label::Fake)),
        tree(
            "c3",
            "Debate recap: the five moments that mattered",
            &[300.0, 900.0, 1500.0],
            &[1, 2, 3],
            Some(Label::Real),
        ),
    ];
    let materials = examples.iter().map(|t| (t.cascade_id().to_string(), ExampleMaterial::from_tree(t))).collect();
    let pair =
        |s: &str, sl, c: &str, cl| ExamplePair { similar: reference(s, sl), contrastive: Some(reference(c, cl)) };
    let balanced = BalancedExampleSet {
        mode: RagMode::BalancedRag,
        pairs: vec![
            pair("s1", Label::Fake, "c1", Label::Real),
            pair("s2", Label::Real, "c2", Label::Fake),
            pair("s3", Label::Fake, "c3", Label::Real),
        ],
        flags: vec![],
    };
    let query = tree(
        "q",
        "URGENT: \"rigged\" machines flipping votes, spread the word",
        &[2.0, 3.5, 4.0, 61.0],
        &[1, 1, 3, 1],
        None,
    );
    Fixture { query, materials, balanced }
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}
