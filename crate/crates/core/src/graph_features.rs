//! Text encodings of a propagation tree: the `(child->parent)` edge list and
//! the aggregated network metrics shown next to each tweet in a prompt.

use serde::{Deserialize, Serialize};

use crate::domain::PropagationTree;

pub const EIGENVECTOR_TOLERANCE: f64 = 1e-8;
pub const EIGENVECTOR_MAX_ITERATIONS: usize = 1000;

/// `"(2->1), (3->1), (4->3)"`; children ascending, empty for a lone root.
pub fn encode_edge_list(tree: &PropagationTree) -> String {
    tree.edges().iter().map(|&(parent, child)| format!("({child}->{parent})")).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralSummary {
    pub avg_degree_centrality: f64,
    pub eigenvector_centrality: f64,
    /// Seconds.
    pub median_retweet_delay: f64,
    pub node_count: usize,
}

impl StructuralSummary {
    pub fn of(tree: &PropagationTree) -> Self {
        structural_summary(tree)
    }
}

pub fn structural_summary(tree: &PropagationTree) -> StructuralSummary {
    let adjacency = tree.adjacency();
    let centrality = eigenvector_centrality(&adjacency);
    let delays: Vec<f64> = tree.nodes().iter().skip(1).map(|n| n.delay).collect();
    StructuralSummary {
        avg_degree_centrality: average_degree_centrality(&adjacency),
        eigenvector_centrality: centrality.iter().copied().fold(0.0, f64::max),
        median_retweet_delay: median(&delays),
        node_count: tree.len(),
    }
}

/// Mean of `degree / (n - 1)`; 0 for a single node.
pub fn average_degree_centrality(adjacency: &[Vec<usize>]) -> f64 {
    let n = adjacency.len();
    if n < 2 {
        return 0.0;
    }
    let total: usize = adjacency.iter().map(Vec::len).sum();
    total as f64 / (n as f64 * (n - 1) as f64)
}

/// Dominant eigenvector of the undirected adjacency matrix, L2-normalized,
/// by power iteration from the uniform vector.
///
/// Trees are bipartite, so `A` has eigenvalues `λ` and `-λ` of equal
/// magnitude and plain iteration oscillates. Iterating `A + I` keeps the
/// eigenvectors and makes `λ + 1` strictly dominant.
pub fn eigenvector_centrality(adjacency: &[Vec<usize>]) -> Vec<f64> {
    let n = adjacency.len();
    if n == 0 {
        return Vec::new();
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for _ in 0..EIGENVECTOR_MAX_ITERATIONS {
        for (v, neighbours) in adjacency.iter().enumerate() {
            next[v] = x[v] + neighbours.iter().map(|&u| x[u]).sum::<f64>();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut change = 0.0;
        for (a, b) in x.iter_mut().zip(&next) {
            let b = b / norm;
            change += (b - *a) * (b - *a);
            *a = b;
        }
        if change.sqrt() < EIGENVECTOR_TOLERANCE {
            break;
        }
    }
    x
}

/// Median; mean of the two middle values for even counts, 0 when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

/// Two decimals, as printed in prompts.
pub fn format_metric(value: f64) -> String {
    format!("{value:.2}")
}
