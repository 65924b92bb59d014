//! Global-module knowledge mining: what-if drafting, dual-channel top-k
//! retrieval over the function base, set merge, and unification into a
//! structured knowledge block.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{FunctionBase, Requirement};
use crate::semantic::{
    embed_text, with_retries, ChatMessage, ChatProvider, EmbeddingProvider, RetryPolicy,
};

const WHATIF_EXAMPLES: &str = include_str!("../assets/whatif_examples.json");

pub const WHATIF_TASK: &str = "You are an expert Python developer drafting a first sketch of a \
function. You are given a developer_requirement made of a function_description and a \
function_definition. Write the to_be_generated_code: a plausible Python implementation of the \
requirement.\n\
Rules:\n\
1. Produce a single Python function starting from the given function_definition.\n\
2. The sketch does not have to be complete or runnable; capturing the core logic is enough.\n\
3. Output only code, with no surrounding explanation.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Description,
    Code,
    Both,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Description => write!(f, "description"),
            Channel::Code => write!(f, "code"),
            Channel::Both => write!(f, "both"),
        }
    }
}

/// One ranked retrieval candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub fqn: String,
    pub score: f64,
    pub channel: Channel,
}

/// Ordered, brace-rendered view of the merged global candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalKnowledgeBlock {
    /// `(fqn, signature, summary)` in merged score order.
    pub entries: Vec<(String, String, String)>,
    pub rendered_text: String,
}

#[derive(Debug, Deserialize)]
struct WhatIfExample {
    description: String,
    definition: String,
    draft: String,
}

fn requirement_input(description: &str, definition: &str) -> String {
    format!(
        "developer_requirement:\nfunction_description: {description}\nfunction_definition: {definition}\n\nto_be_generated_code:"
    )
}

/// The what-if prompt: task description with rules, three demonstration
/// examples, then the requirement as the final input.
pub fn whatif_messages(req: &Requirement) -> Vec<ChatMessage> {
    let examples: Vec<WhatIfExample> =
        serde_json::from_str(WHATIF_EXAMPLES).expect("bundled what-if examples parse");
    let mut messages = vec![ChatMessage::new("system", WHATIF_TASK)];
    for example in examples {
        messages.push(ChatMessage::new(
            "user",
            requirement_input(&example.description, &example.definition),
        ));
        messages.push(ChatMessage::new("assistant", example.draft));
    }
    messages.push(ChatMessage::new(
        "user",
        requirement_input(&req.description, &req.definition),
    ));
    messages
}

/// Drafts throwaway code for the requirement; used only as a retrieval query
/// on the code-vector channel, so completeness is not required.
pub fn generate_what_if_code(
    req: &Requirement,
    chat: &dyn ChatProvider,
    retry: RetryPolicy,
) -> Result<String> {
    req.validate()?;
    let messages = whatif_messages(req);
    let draft = with_retries(retry, || chat.chat(&messages))?;
    if draft.trim().is_empty() {
        return Err(Error::DegenerateOutput {
            message: "what-if generator returned empty output".into(),
            raw_output: draft,
        });
    }
    Ok(draft)
}

fn ranked_hits(scored: Vec<(f64, &str)>, k: usize, channel: Channel) -> Vec<RetrievalHit> {
    let mut scored = scored;
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.cmp(b.1))
    });
    scored
        .into_iter()
        .take(k)
        .map(|(score, fqn)| RetrievalHit {
            fqn: fqn.to_string(),
            score,
            channel,
        })
        .collect()
}

/// Top-k records by cosine similarity between the query embedding and the
/// stored summary vectors, ties broken by fqn ascending. Records living in
/// `exclude_file` are local, not global, and never returned.
pub fn retrieve_by_summary(
    query: &str,
    base: &FunctionBase,
    k: usize,
    embedder: &dyn EmbeddingProvider,
    exclude_file: Option<&str>,
) -> Result<Vec<RetrievalHit>> {
    if k == 0 || base.records.is_empty() {
        return Ok(Vec::new());
    }
    if embedder.dim() != base.embed_dim {
        return Err(Error::Contract(format!(
            "embedder dimension {} does not match base dimension {}",
            embedder.dim(),
            base.embed_dim
        )));
    }
    let query_vector = embed_text(query, embedder)?;
    let mut scored = Vec::new();
    for record in &base.records {
        if exclude_file == Some(record.file_path.as_str()) {
            continue;
        }
        let score = crate::semantic::cosine_similarity(&query_vector, &record.summary_vector)?;
        scored.push((score, record.fqn.as_str()));
    }
    Ok(ranked_hits(scored, k, Channel::Description))
}

/// As `retrieve_by_summary`, but scoring the draft code against the stored
/// code vectors.
pub fn retrieve_by_code(
    draft: &str,
    base: &FunctionBase,
    k: usize,
    embedder: &dyn EmbeddingProvider,
    exclude_file: Option<&str>,
) -> Result<Vec<RetrievalHit>> {
    if k == 0 || base.records.is_empty() {
        return Ok(Vec::new());
    }
    if embedder.dim() != base.embed_dim {
        return Err(Error::Contract(format!(
            "embedder dimension {} does not match base dimension {}",
            embedder.dim(),
            base.embed_dim
        )));
    }
    let query_vector = embed_text(draft, embedder)?;
    let mut scored = Vec::new();
    for record in &base.records {
        if exclude_file == Some(record.file_path.as_str()) {
            continue;
        }
        let score = crate::semantic::cosine_similarity(&query_vector, &record.code_vector)?;
        scored.push((score, record.fqn.as_str()));
    }
    Ok(ranked_hits(scored, k, Channel::Code))
}

/// Union of the two channel results by fqn. Duplicates keep the maximum
/// score and are tagged `both`; the result is sorted by score descending
/// then fqn ascending and never truncated.
pub fn merge_retrievals(a: &[RetrievalHit], b: &[RetrievalHit]) -> Vec<RetrievalHit> {
    let mut merged: BTreeMap<String, (f64, Channel)> = BTreeMap::new();
    for hit in a.iter().chain(b) {
        merged
            .entry(hit.fqn.clone())
            .and_modify(|(score, channel)| {
                if hit.score > *score {
                    *score = hit.score;
                }
                if *channel != hit.channel {
                    *channel = Channel::Both;
                }
            })
            .or_insert((hit.score, hit.channel));
    }
    let mut hits: Vec<RetrievalHit> = merged
        .into_iter()
        .map(|(fqn, (score, channel))| RetrievalHit {
            fqn,
            score,
            channel,
        })
        .collect();
    hits.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.fqn.cmp(&y.fqn))
    });
    hits
}

/// Renders the merged hits as brace-wrapped `{FQN, Signature, Summary}`
/// entries in hit order. Empty input renders the literal `None`.
pub fn unify_global_knowledge(
    hits: &[RetrievalHit],
    base: &FunctionBase,
) -> Result<GlobalKnowledgeBlock> {
    let mut entries = Vec::with_capacity(hits.len());
    for hit in hits {
        let record = base.record(&hit.fqn).ok_or_else(|| {
            Error::Consistency(format!("retrieval hit {} not present in base", hit.fqn))
        })?;
        entries.push((
            record.fqn.clone(),
            record.signature.clone(),
            record.summary.clone(),
        ));
    }
    let rendered_text = if entries.is_empty() {
        "None".to_string()
    } else {
        entries
            .iter()
            .map(|(fqn, signature, summary)| {
                format!("{{FQN: {fqn}, Signature: {signature}, Summary: {summary}}}")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    Ok(GlobalKnowledgeBlock {
        entries,
        rendered_text,
    })
}
