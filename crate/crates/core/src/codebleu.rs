//! Composite code-similarity metric: a weighted average of lexical n-gram
//! match, keyword-weighted n-gram match, syntax subtree match, and an
//! approximate data-flow match over def-use variable pairs.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use tree_sitter::Node;

use crate::error::{Error, Result};
use crate::pyast::{self, PySource};

pub const DEFAULT_WEIGHTS: [f64; 4] = [0.25, 0.25, 0.25, 0.25];

const MAX_NGRAM: usize = 4;
const SMOOTHING_EPS: f64 = 0.1;
const KEYWORD_WEIGHT: f64 = 5.0;
const SUBTREE_DEPTH: usize = 3;

pub const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodeBleu {
    pub score: f64,
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax: f64,
    pub dataflow: f64,
    /// Set when either side failed to parse; the tree-based components are
    /// zero in that case.
    pub parse_failed: bool,
}

fn tokenize(code: &str) -> Vec<&str> {
    code.split_whitespace().collect()
}

fn ngram_counts<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

fn token_weight(token: &str) -> f64 {
    if PYTHON_KEYWORDS.contains(&token) {
        KEYWORD_WEIGHT
    } else {
        1.0
    }
}

fn ngram_weight(ngram: &[&str]) -> f64 {
    ngram.iter().map(|t| token_weight(t)).sum::<f64>() / ngram.len() as f64
}

/// BLEU over whitespace tokens with epsilon smoothing on zero-match orders;
/// orders with no possible n-grams are dropped and the weights renormalized.
fn bleu(candidate: &[&str], reference: &[&str], weighted: bool) -> f64 {
    if candidate.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut used_orders = 0usize;
    for n in 1..=MAX_NGRAM {
        let cand_counts = ngram_counts(candidate, n);
        if cand_counts.is_empty() {
            continue;
        }
        let ref_counts = ngram_counts(reference, n);
        let mut matched = 0.0;
        let mut total = 0.0;
        for (gram, &count) in &cand_counts {
            let clip = ref_counts.get(gram).copied().unwrap_or(0).min(count);
            let weight = if weighted { ngram_weight(gram) } else { 1.0 };
            matched += clip as f64 * weight;
            total += count as f64 * weight;
        }
        if total == 0.0 {
            continue;
        }
        let precision = if matched == 0.0 {
            SMOOTHING_EPS / total
        } else {
            matched / total
        };
        log_sum += precision.ln();
        used_orders += 1;
    }
    if used_orders == 0 {
        return 0.0;
    }
    let geo_mean = (log_sum / used_orders as f64).exp();
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let brevity = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    (brevity * geo_mean).clamp(0.0, 1.0)
}

/// Serialized shape of a node down to `depth` levels of named children.
fn subtree_signature(node: Node<'_>, depth: usize) -> String {
    if depth == 1 || node.named_child_count() == 0 {
        return node.kind().to_string();
    }
    let mut parts = Vec::new();
    let mut cursor = node.walk();
    for child in node.named_children(&mut cursor) {
        parts.push(subtree_signature(child, depth - 1));
    }
    format!("{}({})", node.kind(), parts.join(","))
}

fn subtree_multiset(source: &PySource) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    pyast::walk(source.root(), &mut |node| {
        if node.is_named() && node.named_child_count() > 0 {
            *counts
                .entry(subtree_signature(node, SUBTREE_DEPTH))
                .or_insert(0) += 1;
        }
    });
    counts
}

fn multiset_overlap(candidate: &HashMap<String, usize>, reference: &HashMap<String, usize>) -> f64 {
    let total: usize = candidate.values().sum();
    if total == 0 {
        return if reference.values().sum::<usize>() == 0 {
            1.0
        } else {
            0.0
        };
    }
    let matched: usize = candidate
        .iter()
        .map(|(sig, &count)| reference.get(sig).copied().unwrap_or(0).min(count))
        .sum();
    matched as f64 / total as f64
}

/// Fraction of candidate subtrees of bounded depth found in the reference.
fn syntax_match(candidate: &PySource, reference: &PySource) -> f64 {
    multiset_overlap(&subtree_multiset(candidate), &subtree_multiset(reference))
}

fn pattern_identifiers<'t>(node: Node<'t>, out: &mut Vec<Node<'t>>) {
    match node.kind() {
        "identifier" => out.push(node),
        "pattern_list"
        | "tuple_pattern"
        | "list_pattern"
        | "list_splat_pattern"
        | "dictionary_splat_pattern"
        | "typed_parameter"
        | "as_pattern_target" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                pattern_identifiers(child, out);
            }
        }
        _ => {}
    }
}

fn definition_nodes<'t>(source: &'t PySource) -> Vec<Node<'t>> {
    let mut defs = Vec::new();
    pyast::walk(source.root(), &mut |node| match node.kind() {
        "assignment" | "augmented_assignment" => {
            if let Some(left) = node.child_by_field_name("left") {
                pattern_identifiers(left, &mut defs);
            }
        }
        "for_statement" => {
            if let Some(left) = node.child_by_field_name("left") {
                pattern_identifiers(left, &mut defs);
            }
        }
        "named_expression" => {
            if let Some(name) = node.child_by_field_name("name") {
                pattern_identifiers(name, &mut defs);
            }
        }
        "as_pattern" => {
            if let Some(alias) = node.child_by_field_name("alias") {
                pattern_identifiers(alias, &mut defs);
            }
        }
        "parameters" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                match child.kind() {
                    "identifier"
                    | "typed_parameter"
                    | "list_splat_pattern"
                    | "dictionary_splat_pattern" => pattern_identifiers(child, &mut defs),
                    "default_parameter" | "typed_default_parameter" => {
                        if let Some(name) = child.child_by_field_name("name") {
                            pattern_identifiers(name, &mut defs);
                        }
                    }
                    _ => {}
                }
            }
        }
        _ => {}
    });
    defs.sort_by_key(|n| n.start_byte());
    defs
}

/// Def-use pairs, variables renamed positionally: each use of a defined
/// variable yields `(var_index, syntactic-context kind)`.
fn defuse_multiset(source: &PySource) -> HashMap<(usize, String), usize> {
    let defs = definition_nodes(source);
    let mut def_ids: HashSet<usize> = HashSet::new();
    let mut var_index: HashMap<&str, usize> = HashMap::new();
    for node in &defs {
        def_ids.insert(node.id());
        let name = source.node_text(*node);
        let next = var_index.len();
        var_index.entry(name).or_insert(next);
    }

    let mut pairs = HashMap::new();
    pyast::walk(source.root(), &mut |node| {
        if node.kind() != "identifier" || def_ids.contains(&node.id()) {
            return;
        }
        let name = source.node_text(node);
        if let Some(&index) = var_index.get(name) {
            let context = node
                .parent()
                .map(|p| p.kind().to_string())
                .unwrap_or_default();
            *pairs.entry((index, context)).or_insert(0) += 1;
        }
    });
    pairs
}

/// Overlap of positional def-use pairs between candidate and reference.
fn dataflow_match(candidate: &PySource, reference: &PySource) -> f64 {
    let cand = defuse_multiset(candidate);
    let reference = defuse_multiset(reference);
    let total: usize = cand.values().sum();
    if total == 0 {
        return if reference.values().sum::<usize>() == 0 {
            1.0
        } else {
            0.0
        };
    }
    let matched: usize = cand
        .iter()
        .map(|(pair, &count)| reference.get(pair).copied().unwrap_or(0).min(count))
        .sum();
    matched as f64 / total as f64
}

pub fn validate_weights(weights: [f64; 4]) -> Result<()> {
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::Contract(
            "codebleu weights must be non-negative".into(),
        ));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "codebleu weights must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

pub fn codebleu(candidate: &str, reference: &str, weights: [f64; 4]) -> Result<CodeBleu> {
    validate_weights(weights)?;

    let cand_tokens = tokenize(candidate);
    let ref_tokens = tokenize(reference);
    let ngram = bleu(&cand_tokens, &ref_tokens, false);
    let weighted_ngram = bleu(&cand_tokens, &ref_tokens, true);

    let cand_tree = pyast::parse(candidate);
    let ref_tree = pyast::parse(reference);
    let parse_failed = cand_tree.has_errors() || ref_tree.has_errors();
    let (syntax, dataflow) = if parse_failed {
        (0.0, 0.0)
    } else {
        (
            syntax_match(&cand_tree, &ref_tree),
            dataflow_match(&cand_tree, &ref_tree),
        )
    };

    let score = weights[0] * ngram
        + weights[1] * weighted_ngram
        + weights[2] * syntax
        + weights[3] * dataflow;
    Ok(CodeBleu {
        score,
        ngram,
        weighted_ngram,
        syntax,
        dataflow,
        parse_failed,
    })
}
