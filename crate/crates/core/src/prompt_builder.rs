//! Prompt assembly.
//!
//! A [`PromptTemplate`] is a plain-text file split into named sections
//! (`@@ name` headers) with `{{placeholder}}` slots. Rendering combines the
//! role preamble, metric explanations, the retrieved example stanzas, the
//! query tweet and the step-by-step output instructions into one
//! byte-deterministic string.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::balanced_rag::{BalancedExampleSet, ExampleRef, RagMode};
use crate::domain::PropagationTree;
use crate::graph_features::{encode_edge_list, format_metric, structural_summary, StructuralSummary};

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/balanced.tmpl");
pub const DEFAULT_TEXT_BUDGET: usize = 500;
pub const WITHHELD_TEXT: &str = "[text withheld]";
const ELLIPSIS: &str = "...";

const PLACEHOLDERS: &[&str] = &[
    "example_index",
    "example_tag",
    "tweet_text",
    "avg_degree_centrality",
    "eigenvector_centrality",
    "median_retweet_time",
    "edge_list",
    "label",
];

const SECTIONS: &[&str] = &[
    "role_preamble",
    "metric_definitions",
    "edge_list_definitions",
    "examples_intro",
    "example_header",
    "similar_tag",
    "contrastive_tag",
    "text_line",
    "metrics_lines",
    "edge_list_line",
    "empty_edge_list_line",
    "label_line",
    "query_intro",
    "cot_instructions",
    "decision_instruction",
];

/// What each tweet stanza conveys about the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingMode {
    EdgeList,
    #[default]
    AggregatedMetrics,
    Both,
    /// Tweet text only, no structure.
    TextOnly,
    /// Structure only; tweet text replaced by [`WITHHELD_TEXT`].
    GraphOnly,
}

impl EncodingMode {
    pub fn shows_text(self) -> bool {
        self != EncodingMode::GraphOnly
    }

    pub fn shows_metrics(self) -> bool {
        matches!(self, EncodingMode::AggregatedMetrics | EncodingMode::Both | EncodingMode::GraphOnly)
    }

    pub fn shows_edge_list(self) -> bool {
        matches!(self, EncodingMode::EdgeList | EncodingMode::Both | EncodingMode::GraphOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingMode::EdgeList => "edge_list",
            EncodingMode::AggregatedMetrics => "aggregated_metrics",
            EncodingMode::Both => "both",
            EncodingMode::TextOnly => "text_only",
            EncodingMode::GraphOnly => "graph_only",
        }
    }
}

/// Order of example stanzas in a balanced prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleLayout {
    /// All similar examples, then all contrastive partners.
    #[default]
    Grouped,
    /// Each similar example directly followed by its partner.
    PairMajor,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("template line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template is missing section {0}")]
    MissingSection(String),
    #[error("template section {section} uses unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { section: String, name: String },
    #[error("decision instruction must demand exactly \"Fake\" or \"Real\"")]
    BadDecisionInstruction,
    #[error("no material for example {0}")]
    MissingExample(String),
    #[error("cannot read template {path}: {message}")]
    Read { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    sections: BTreeMap<String, String>,
    pub encoding_mode: EncodingMode,
    pub layout: ExampleLayout,
    /// Maximum characters of tweet text before truncation.
    pub text_budget: usize,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

fn placeholders(body: &str) -> impl Iterator<Item = &str> {
    body.split("{{").skip(1).filter_map(|rest| rest.split_once("}}").map(|(name, _)| name))
}

/// Single-pass substitution; inserted values are never rescanned.
fn fill(body: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(body.len() + 64);
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.split_once("}}") {
            Some((name, tail)) => {
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = tail;
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<(String, Vec<&str>)> = None;
        let flush = |cur: Option<(String, Vec<&str>)>, sections: &mut BTreeMap<String, String>| {
            if let Some((name, lines)) = cur {
                let body = lines.join("\n");
                sections.insert(name, body.trim_end_matches(['\n', '\r']).to_string());
            }
        };
        for (i, line) in text.lines().enumerate() {
            if let Some(name) = line.strip_prefix("@@ ") {
                let name = name.trim().to_string();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(PromptError::Parse { line: i + 1, message: format!("unknown section {name}") });
                }
                if sections.contains_key(&name) || current.as_ref().is_some_and(|(n, _)| *n == name) {
                    return Err(PromptError::Parse { line: i + 1, message: format!("duplicate section {name}") });
                }
                flush(current.take(), &mut sections);
                current = Some((name, Vec::new()));
            } else if let Some((_, lines)) = current.as_mut() {
                lines.push(line);
            } else if !(line.trim().is_empty() || line.starts_with('#')) {
                return Err(PromptError::Parse { line: i + 1, message: "text before first section".into() });
            }
        }
        flush(current, &mut sections);

        for name in SECTIONS {
            let body = sections.get(*name).ok_or_else(|| PromptError::MissingSection(name.to_string()))?;
            if let Some(bad) = placeholders(body).find(|p| !PLACEHOLDERS.contains(p)) {
                return Err(PromptError::UnknownPlaceholder { section: name.to_string(), name: bad.to_string() });
            }
        }
        let decision = &sections["decision_instruction"];
        if !(decision.contains("\"Fake\"") && decision.contains("\"Real\"")) {
            return Err(PromptError::BadDecisionInstruction);
        }
        Ok(PromptTemplate {
            sections,
            encoding_mode: EncodingMode::default(),
            layout: ExampleLayout::default(),
            text_budget: DEFAULT_TEXT_BUDGET,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PromptError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    pub fn with_encoding(mut self, mode: EncodingMode) -> Self {
        self.encoding_mode = mode;
        self
    }

    pub fn with_layout(mut self, layout: ExampleLayout) -> Self {
        self.layout = layout;
        self
    }

    pub fn section(&self, name: &str) -> &str {
        &self.sections[name]
    }

    pub fn role_preamble(&self) -> &str {
        self.section("role_preamble")
    }

    pub fn metric_definitions(&self) -> &str {
        self.section("metric_definitions")
    }

    pub fn cot_instructions(&self) -> &str {
        self.section("cot_instructions")
    }

    pub fn decision_instruction(&self) -> &str {
        self.section("decision_instruction")
    }
}

/// Everything a stanza needs to show about one cascade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleMaterial {
    pub text: String,
    pub summary: StructuralSummary,
    pub edge_list: String,
}

impl ExampleMaterial {
    pub fn from_tree(tree: &PropagationTree) -> Self {
        ExampleMaterial {
            text: tree.root().text.clone(),
            summary: structural_summary(tree),
            edge_list: encode_edge_list(tree),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub cascade_id: String,
    pub prompt: String,
    pub shot_count: usize,
    pub rag_mode: RagMode,
    pub encoding_mode: EncodingMode,
}

impl RenderedPrompt {
    /// Whitespace-split token count, a cheap proxy for model tokens.
    pub fn approx_tokens(&self) -> usize {
        approx_tokens(&self.prompt)
    }
}

pub fn approx_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// One line, at most `budget` characters plus an ellipsis.
pub fn prepare_text(text: &str, budget: usize) -> String {
    let flat: String = text.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
    if flat.chars().count() <= budget {
        return flat;
    }
    let mut cut: String = flat.chars().take(budget).collect();
    cut.push_str(ELLIPSIS);
    cut
}

impl PromptTemplate {
    fn tweet_block(&self, mode: EncodingMode, material: &ExampleMaterial) -> String {
        let text =
            if mode.shows_text() { prepare_text(&material.text, self.text_budget) } else { WITHHELD_TEXT.to_string() };
        let mut lines = vec![fill(self.section("text_line"), &[("tweet_text", &text)])];
        if mode.shows_metrics() {
            let s = &material.summary;
            lines.push(fill(
                self.section("metrics_lines"),
                &[
                    ("avg_degree_centrality", &format_metric(s.avg_degree_centrality)),
                    ("eigenvector_centrality", &format_metric(s.eigenvector_centrality)),
                    ("median_retweet_time", &format_metric(s.median_retweet_delay)),
                ],
            ));
        }
        if mode.shows_edge_list() {
            lines.push(if material.edge_list.is_empty() {
                self.section("empty_edge_list_line").to_string()
            } else {
                fill(self.section("edge_list_line"), &[("edge_list", &material.edge_list)])
            });
        }
        lines.join("\n")
    }

    fn render_with_mode(
        &self,
        mode: EncodingMode,
        query_tree: &PropagationTree,
        examples: &BalancedExampleSet,
        materials: &HashMap<String, ExampleMaterial>,
    ) -> Result<RenderedPrompt, PromptError> {
        let tagged = examples.mode == RagMode::BalancedRag;
        let ordered: Vec<(&ExampleRef, &str)> = match self.layout {
            ExampleLayout::Grouped => examples
                .pairs
                .iter()
                .map(|p| (&p.similar, "similar_tag"))
                .chain(examples.pairs.iter().filter_map(|p| p.contrastive.as_ref().map(|c| (c, "contrastive_tag"))))
                .collect(),
            ExampleLayout::PairMajor => examples
                .pairs
                .iter()
                .flat_map(|p| {
                    std::iter::once((&p.similar, "similar_tag"))
                        .chain(p.contrastive.as_ref().map(|c| (c, "contrastive_tag")))
                })
                .collect(),
        };

        let mut stanzas = Vec::with_capacity(ordered.len());
        for (i, (example, tag_section)) in ordered.iter().enumerate() {
            let material = materials
                .get(&example.cascade_id)
                .ok_or_else(|| PromptError::MissingExample(example.cascade_id.clone()))?;
            let tag = if tagged { self.section(tag_section) } else { "" };
            let header =
                fill(self.section("example_header"), &[("example_index", &(i + 1).to_string()), ("example_tag", tag)]);
            let label = fill(self.section("label_line"), &[("label", example.label.display_name())]);
            stanzas.push(format!("{header}\n{}\n{label}", self.tweet_block(mode, material)));
        }

        let mut out = String::new();
        out.push_str(self.role_preamble());
        out.push_str("\n\n");
        if mode.shows_metrics() {
            out.push_str(self.metric_definitions());
            out.push_str("\n\n");
        }
        if mode.shows_edge_list() {
            out.push_str(self.section("edge_list_definitions"));
            out.push_str("\n\n");
        }
        if !stanzas.is_empty() {
            out.push_str(self.section("examples_intro"));
            out.push_str("\n\n\n");
            out.push_str(&stanzas.join("\n\n"));
            out.push_str("\n\n");
        }
        out.push_str(self.section("query_intro"));
        out.push_str("\n\n");
        out.push_str(&self.tweet_block(mode, &ExampleMaterial::from_tree(query_tree)));
        out.push_str("\n\n");
        out.push_str(self.cot_instructions());
        out.push_str("\n\n");
        out.push_str(self.decision_instruction());
        out.push('\n');

        Ok(RenderedPrompt {
            cascade_id: query_tree.cascade_id().to_string(),
            prompt: out,
            shot_count: stanzas.len(),
            rag_mode: examples.mode,
            encoding_mode: mode,
        })
    }
}

/// Render with the template's own encoding mode.
pub fn render(
    template: &PromptTemplate,
    query_tree: &PropagationTree,
    examples: &BalancedExampleSet,
    materials: &HashMap<String, ExampleMaterial>,
) -> Result<RenderedPrompt, PromptError> {
    template.render_with_mode(template.encoding_mode, query_tree, examples, materials)
}

/// Render conveying structure as the `(child->parent)` edge list.
pub fn render_edge_list_variant(
    template: &PromptTemplate,
    query_tree: &PropagationTree,
    examples: &BalancedExampleSet,
    materials: &HashMap<String, ExampleMaterial>,
) -> Result<RenderedPrompt, PromptError> {
    template.render_with_mode(EncodingMode::EdgeList, query_tree, examples, materials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_template_parses() {
        let t = PromptTemplate::default();
        assert!(t.role_preamble().starts_with("You are an intelligent classifier"));
        assert!(t.cot_instructions().ends_with("Final Decision: [Your decision MUST be either \"Fake\" or \"Real\"]"));
        assert_eq!(t.section("similar_tag"), " (Similar)");
    }

    #[test]
    fn unknown_placeholder_is_rejected() {
        let broken = DEFAULT_TEMPLATE.replace("{{label}}", "{{verdict}}");
        assert!(matches!(PromptTemplate::parse(&broken), Err(PromptError::UnknownPlaceholder { .. })));
    }

    #[test]
    fn missing_section_is_rejected() {
        let broken = DEFAULT_TEMPLATE.replace("@@ label_line\nLabel: {{label}}\n", "");
        assert_eq!(PromptTemplate::parse(&broken), Err(PromptError::MissingSection("label_line".into())));
    }

    #[test]
    fn decision_instruction_needs_both_labels() {
        let broken = DEFAULT_TEMPLATE.replace(
            "IMPORTANT: Your final decision MUST be either \"Fake\" or \"Real\".",
            "IMPORTANT: answer yes or no.",
        );
        assert_eq!(PromptTemplate::parse(&broken), Err(PromptError::BadDecisionInstruction));
    }

    #[test]
    fn fill_does_not_rescan_values() {
        assert_eq!(fill("a {{x}} b", &[("x", "{{x}}")]), "a {{x}} b");
        assert_eq!(fill("{{x}}{{y}}", &[("x", "1"), ("y", "2")]), "12");
        assert_eq!(fill("open {{x", &[("x", "1")]), "open {{x");
    }

    #[test]
    fn text_preparation() {
        assert_eq!(prepare_text("a\nb", 10), "a b");
        assert_eq!(prepare_text("abcdef", 3), "abc...");
        assert_eq!(prepare_text("ééé", 3), "ééé");
    }
}
