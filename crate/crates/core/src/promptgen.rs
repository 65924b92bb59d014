//! Prompt assembly and code generation: fuse the three knowledge blocks with
//! the requirement, drive the chat provider, and extract the final code.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extractor::LocalContext;
use crate::model::{LibraryBase, Requirement};
use crate::pyast;
use crate::semantic::{with_retries, ChatMessage, ChatProvider, RetryPolicy};

const A3_EXAMPLES: &str = include_str!("../assets/a3_examples.json");

pub const DEFAULT_MAX_PROMPT_CHARS: usize = 12_000;

/// Chain-of-thought task description for the final generation step. The
/// numbered @command directives and the three output rules are fixed.
pub const A3_TASK: &str = "You are an expert Python developer working inside an existing code \
repository. Implement the function described by developer_requirement, making full use of the \
knowledge provided with it.\n\
\n\
Definitions:\n\
- developer_requirement: the function_description and the function_definition of the function to write.\n\
- local_aware_knowledge: functions, class instance attributes, module FQN, and module variables from the file the function will live in.\n\
- global_aware_knowledge: functions from other files of the repository, each shown as a {FQN, Signature, Summary} entry.\n\
- third_party_library_aware_knowledge: names of the third-party libraries installed in the repository environment.\n\
- to_be_generated_code: the code you must produce.\n\
\n\
Follow these steps:\n\
@command1: Contemplate the logic and steps required to fulfill the developer_requirement.\n\
@command2: Consider whether any local_aware_knowledge is reusable and utilize it if available.\n\
@command3: Consider whether any global_aware_knowledge functions are reusable and utilize them if present.\n\
@command4: Consider how to leverage third_party_library_aware_knowledge to interact with libraries effectively.\n\
@command5: If no provided knowledge is reusable, generate the code directly from the logic and steps you formulated.\n\
@command6: Strictly follow the steps from 1 to 5 in order.\n\
\n\
Rules:\n\
1. When reusing a global function, call it by importing its FQN.\n\
2. Only use third-party libraries listed in third_party_library_aware_knowledge.\n\
3. Ensure that the generated code is not empty.\n\
\n\
Respond with only the to_be_generated_code inside a fenced code block.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AblationFlags {
    pub no_local: bool,
    pub no_global: bool,
    pub no_libs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub included: bool,
    pub chars: usize,
}

/// Which knowledge went into the prompt and how large each piece was.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTrace {
    pub local: BlockTrace,
    pub global: BlockTrace,
    pub libraries: BlockTrace,
    pub system_chars: usize,
    pub user_chars: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub trace: PromptTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub code: String,
    pub raw_output: String,
    pub trace: PromptTrace,
}

fn brace_entry(fqn: &str, summary: &str, signature: &str) -> String {
    format!("{{FQN: {fqn}, Summary: {summary}, Signature: {signature}}}")
}

/// Renders the local-module knowledge block. Entries are brace-wrapped with
/// class members indented one level; sections for disabled knowledge types
/// are omitted entirely, and an enabled-but-empty section renders `None`.
pub fn render_local_block(ctx: &LocalContext) -> String {
    let mut sections: Vec<String> = Vec::new();

    if ctx.enabled.local_functions {
        let body = if ctx.local_functions.is_empty() {
            "None".to_string()
        } else {
            ctx.local_functions
                .iter()
                .map(|entry| {
                    let rendered = brace_entry(&entry.fqn, &entry.summary, &entry.signature);
                    if entry.is_method {
                        format!("\t{rendered}")
                    } else {
                        rendered
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        sections.push(format!("local_functions:\n{body}"));
    }

    if ctx.enabled.class_instance_attributes {
        let body = if ctx.class_init_sources.is_empty() {
            "None".to_string()
        } else {
            ctx.class_init_sources.join("\n")
        };
        sections.push(format!("class_instance_attributes:\n{body}"));
    }

    if ctx.enabled.module_fqn {
        let body = ctx.module_fqn.as_deref().unwrap_or("None");
        sections.push(format!("local_module_fqn:\n{body}"));
    }

    if ctx.enabled.module_variables {
        let body = ctx.module_variables.as_deref().unwrap_or("None");
        sections.push(format!("module_variables:\n{body}"));
    }

    if sections.is_empty() {
        "None".to_string()
    } else {
        sections.join("\n")
    }
}

/// Sorted, comma-separated library names; an empty base renders `None`.
pub fn render_library_block(libs: &LibraryBase) -> String {
    if libs.names.is_empty() {
        "None".to_string()
    } else {
        libs.names
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Deserialize)]
struct A3Example {
    input: String,
    output: String,
}

fn a3_system_text() -> String {
    let examples: Vec<A3Example> =
        serde_json::from_str(A3_EXAMPLES).expect("bundled generation examples parse");
    let mut text = String::from(A3_TASK);
    text.push_str("\n\nExamples:");
    for (idx, example) in examples.iter().enumerate() {
        text.push_str(&format!(
            "\n\nExample {}:\nInput:\n{}\nOutput:\n{}",
            idx + 1,
            example.input,
            example.output
        ));
    }
    text
}

/// Assembles the final prompt. Ablation flags replace the corresponding
/// block with `None` and record the exclusion in the trace.
pub fn assemble_a3_prompt(
    req: &Requirement,
    local_block: &str,
    global_block: &str,
    lib_block: &str,
    flags: AblationFlags,
    max_chars: usize,
) -> Result<PromptBundle> {
    req.validate()?;

    let local = if flags.no_local { "None" } else { local_block };
    let global = if flags.no_global {
        "None"
    } else {
        global_block
    };
    let libraries = if flags.no_libs { "None" } else { lib_block };

    let system_text = a3_system_text();
    let user_text = format!(
        "developer_requirement:\nfunction_description: {}\nfunction_definition: {}\n\n\
local_aware_knowledge:\n{}\n\n\
global_aware_knowledge:\n{}\n\n\
third_party_library_aware_knowledge:\n{}\n\n\
to_be_generated_code:",
        req.description, req.definition, local, global, libraries
    );

    let trace = PromptTrace {
        local: BlockTrace {
            included: !flags.no_local,
            chars: local.len(),
        },
        global: BlockTrace {
            included: !flags.no_global,
            chars: global.len(),
        },
        libraries: BlockTrace {
            included: !flags.no_libs,
            chars: libraries.len(),
        },
        system_chars: system_text.len(),
        user_chars: user_text.len(),
    };

    let total = system_text.len() + user_text.len();
    if total > max_chars {
        return Err(Error::PromptTooLong {
            total,
            limit: max_chars,
            block_sizes: format!(
                "local={}, global={}, libraries={}",
                trace.local.chars, trace.global.chars, trace.libraries.chars
            ),
        });
    }

    Ok(PromptBundle {
        system_text,
        user_text,
        trace,
    })
}

fn fenced_block(raw: &str) -> Option<String> {
    let mut lines = raw.lines();
    loop {
        let line = lines.next()?;
        if line.trim_start().starts_with("```") {
            break;
        }
    }
    let mut contents = Vec::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(contents.join("\n"));
        }
        contents.push(line);
    }
    // opening fence without a closing one: treat the remainder as the block
    if contents.is_empty() {
        None
    } else {
        Some(contents.join("\n"))
    }
}

fn parses_as_function(text: &str) -> bool {
    let parsed = pyast::parse(text);
    if parsed.has_errors() {
        return false;
    }
    let mut found = false;
    pyast::walk(parsed.root(), &mut |node| {
        if node.kind() == "function_definition" {
            found = true;
        }
    });
    found
}

/// Largest contiguous run of lines that parses cleanly and contains a
/// function definition. Candidate runs start at `def`, `async def`, or a
/// decorator line.
fn largest_function_run(raw: &str) -> Option<String> {
    let lines: Vec<&str> = raw.lines().collect();
    let mut best: Option<String> = None;
    for start in 0..lines.len() {
        let head = lines[start].trim_start();
        if !(head.starts_with("def ") || head.starts_with("async def ") || head.starts_with('@')) {
            continue;
        }
        for end in (start..lines.len()).rev() {
            let candidate = lines[start..=end].join("\n");
            if parses_as_function(&candidate) {
                if best.as_ref().is_none_or(|b| candidate.len() > b.len()) {
                    best = Some(candidate);
                }
                break;
            }
        }
    }
    best
}

/// Pulls code out of a raw model response: the first fenced block if there is
/// one, the whole text when it is already clean code, otherwise the largest
/// run of lines forming a function definition.
pub fn extract_code(raw_output: &str) -> Result<String> {
    if let Some(block) = fenced_block(raw_output) {
        return Ok(block);
    }
    let trimmed = raw_output.trim();
    if !trimmed.is_empty() && parses_as_function(trimmed) {
        return Ok(raw_output.to_string());
    }
    if let Some(run) = largest_function_run(raw_output) {
        return Ok(run);
    }
    Err(Error::DegenerateOutput {
        message: "no extractable code in model output".into(),
        raw_output: raw_output.to_string(),
    })
}

const REPAIR_INSTRUCTION: &str = "The previous response contained no usable code. Respond again \
with only the complete, non-empty function code inside a fenced code block.";

/// One provider call (plus transport retries); empty-code results are
/// retried once with a repair instruction appended.
pub fn generate_code(
    bundle: &PromptBundle,
    chat: &dyn ChatProvider,
    retry: RetryPolicy,
) -> Result<GenerationResult> {
    let mut messages = vec![
        ChatMessage::new("system", bundle.system_text.clone()),
        ChatMessage::new("user", bundle.user_text.clone()),
    ];
    let raw_output = with_retries(retry, || chat.chat(&messages))?;

    match extract_code(&raw_output) {
        Ok(code) if !code.trim().is_empty() => Ok(GenerationResult {
            code,
            raw_output,
            trace: bundle.trace.clone(),
        }),
        _ => {
            messages.push(ChatMessage::new("assistant", raw_output));
            messages.push(ChatMessage::new("user", REPAIR_INSTRUCTION));
            let repaired = with_retries(retry, || chat.chat(&messages))?;
            match extract_code(&repaired) {
                Ok(code) if !code.trim().is_empty() => Ok(GenerationResult {
                    code,
                    raw_output: repaired,
                    trace: bundle.trace.clone(),
                }),
                _ => Err(Error::DegenerateOutput {
                    message: "model produced no usable code after one repair attempt".into(),
                    raw_output: repaired,
                }),
            }
        }
    }
}
