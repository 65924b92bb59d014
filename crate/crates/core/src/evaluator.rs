//! Scoring of generated code: reuse detection, confusion-matrix metrics over
//! reuse labels, library coverage, LOC, and CodeBLEU aggregation.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::codebleu::{self, CodeBleu};
use crate::error::{Error, Result};
use crate::extractor::{self, LocalContext};
use crate::model::{FunctionBase, LibraryBase};
use crate::pyast;

/// Per-sample reuse judgment: did the code reuse a local function, a global
/// function, and a third-party library?
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseVector {
    pub local: bool,
    pub global: bool,
    pub library: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReuseDetection {
    pub vector: ReuseVector,
    /// False when the code failed to parse; the vector is all-false then.
    pub parsed: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u32,
    pub fp: u32,
    pub tn: u32,
    pub fn_: u32,
}

impl ConfusionCounts {
    pub fn total(&self) -> u32 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts plus the derived ratios. Ratios with zero denominators
/// are absent rather than zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AspectMetrics {
    pub counts: ConfusionCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Harmonic mean of precision and recall; zero when both are zero.
pub fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl AspectMetrics {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let ratio =
            |num: u32, den: u32| -> Option<f64> { (den > 0).then(|| num as f64 / den as f64) };
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => Some(harmonic_f1(p, r)),
            _ => None,
        };
        let accuracy = ratio(counts.tp + counts.tn, counts.total());
        AspectMetrics {
            counts,
            precision,
            recall,
            f1,
            accuracy,
        }
    }
}

/// Evaluation context shared by the reuse detectors: the target file's local
/// context, the function base, and the library base.
#[derive(Debug)]
pub struct EvalContext<'a> {
    pub local_ctx: &'a LocalContext,
    pub base: &'a FunctionBase,
    pub libs: &'a LibraryBase,
}

fn call_target_names(source: &pyast::PySource) -> HashSet<String> {
    let mut names = HashSet::new();
    pyast::walk(source.root(), &mut |node| {
        if node.kind() == "call" {
            if let Some(function) = node.child_by_field_name("function") {
                match function.kind() {
                    "identifier" => {
                        names.insert(source.node_text(function).to_string());
                    }
                    "attribute" => {
                        if let Some(attr) = function.child_by_field_name("attribute") {
                            names.insert(source.node_text(attr).to_string());
                        }
                    }
                    _ => {}
                }
            }
        }
    });
    names
}

/// Names imported from `from M import a, b` statements, mapped to their full
/// dotted paths.
fn imported_bindings(file: &extractor::ParsedFile) -> Vec<(String, String)> {
    let mut bindings = Vec::new();
    pyast::walk(file.source.root(), &mut |node| match node.kind() {
        "import_statement" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                match child.kind() {
                    "dotted_name" => {
                        let dotted = file.source.node_text(child).to_string();
                        let local = dotted.split('.').next().unwrap_or("").to_string();
                        bindings.push((local, dotted));
                    }
                    "aliased_import" => {
                        if let (Some(name), Some(alias)) = (
                            child.child_by_field_name("name"),
                            child.child_by_field_name("alias"),
                        ) {
                            bindings.push((
                                file.source.node_text(alias).to_string(),
                                file.source.node_text(name).to_string(),
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        "import_from_statement" => {
            let Some(module) = node.child_by_field_name("module_name") else {
                return;
            };
            if module.kind() != "dotted_name" {
                return; // relative imports out of scope
            }
            let module_path = file.source.node_text(module).to_string();
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                if child.id() == module.id() {
                    continue;
                }
                match child.kind() {
                    "dotted_name" => {
                        let name = file.source.node_text(child).to_string();
                        bindings.push((
                            name.split('.').next_back().unwrap_or(&name).to_string(),
                            format!("{module_path}.{name}"),
                        ));
                    }
                    "aliased_import" => {
                        if let (Some(name), Some(alias)) = (
                            child.child_by_field_name("name"),
                            child.child_by_field_name("alias"),
                        ) {
                            bindings.push((
                                file.source.node_text(alias).to_string(),
                                format!("{module_path}.{}", file.source.node_text(name)),
                            ));
                        }
                    }
                    "wildcard_import" => {
                        bindings.push(("*".to_string(), format!("{module_path}.*")));
                    }
                    _ => {}
                }
            }
        }
        _ => {}
    });
    bindings
}

fn base_has_global_fqn(base: &FunctionBase, dotted: &str, exclude_file: &str) -> bool {
    base.records.iter().any(|record| {
        record.file_path != exclude_file
            && (record.fqn == dotted || record.fqn.starts_with(&format!("{dotted}.")))
    })
}

/// Detects local/global/library reuse in one generated snippet. Unparseable
/// code yields an all-false vector with the `parsed` flag cleared.
pub fn detect_reuse(code: &str, ctx: &EvalContext<'_>) -> ReuseDetection {
    let Ok(file) = extractor::parse_file_text("generated.py", code) else {
        return ReuseDetection {
            vector: ReuseVector::default(),
            parsed: false,
        };
    };

    let calls = call_target_names(&file.source);

    // local reuse: a call target matches a local function entry by name
    let local = ctx.local_ctx.local_functions.iter().any(|entry| {
        entry
            .fqn
            .rsplit('.')
            .next()
            .is_some_and(|name| calls.contains(name))
    });

    // global reuse: an import resolves into the base outside the target
    // file, or a call goes through such an imported name
    let target_file = ctx.local_ctx.file_path.as_str();
    let bindings = imported_bindings(&file);
    let mut global = bindings.iter().any(|(_, dotted)| {
        base_has_global_fqn(ctx.base, dotted.trim_end_matches(".*"), target_file)
    });
    if !global {
        global = bindings.iter().any(|(local_name, dotted)| {
            calls.iter().any(|call| {
                call == local_name && base_has_global_fqn(ctx.base, dotted, target_file)
                    || base_has_global_fqn(ctx.base, &format!("{dotted}.{call}"), target_file)
            })
        });
    }

    // library reuse: any absolute import outside stdlib and repo modules
    let stdlib = extractor::stdlib_modules();
    let repo_modules = repo_module_names(ctx);
    let library = extractor::absolute_imports(&file)
        .iter()
        .any(|(top, _)| !stdlib.contains(top.as_str()) && !repo_modules.contains(top));

    ReuseDetection {
        vector: ReuseVector {
            local,
            global,
            library,
        },
        parsed: true,
    }
}

fn repo_module_names(ctx: &EvalContext<'_>) -> HashSet<String> {
    let mut names: HashSet<String> = ctx.base.repo_module_names().into_iter().collect();
    if let Some(first) = ctx.local_ctx.file_path.split('/').next() {
        names.insert(first.strip_suffix(".py").unwrap_or(first).to_string());
    }
    names
}

/// Third-party import names used by the snippet that are covered by the
/// library base: `|used ∩ libs| / |used|`, 1.0 when nothing is used.
/// Unparseable code scores absent.
pub fn library_coverage(
    code: &str,
    libs: &LibraryBase,
    repo_modules: &HashSet<String>,
) -> Option<f64> {
    let file = extractor::parse_file_text("generated.py", code).ok()?;
    let stdlib = extractor::stdlib_modules();
    let used: HashSet<String> = extractor::absolute_imports(&file)
        .into_iter()
        .map(|(top, _)| top)
        .filter(|top| !stdlib.contains(top.as_str()) && !repo_modules.contains(top))
        .collect();
    if used.is_empty() {
        return Some(1.0);
    }
    let covered = used.iter().filter(|name| libs.contains(name)).count();
    Some(covered as f64 / used.len() as f64)
}

/// Lines of code after removing blank lines, comment-only lines, and lines
/// belonging to standalone string-expression statements (docstrings).
pub fn count_loc(code: &str) -> usize {
    if code.trim().is_empty() {
        return 0;
    }
    let source = pyast::parse(code);

    // line ranges covered by standalone string expressions
    let mut docstring_ranges: Vec<(usize, usize)> = Vec::new();
    pyast::walk(source.root(), &mut |node| {
        if node.kind() == "expression_statement"
            && node.named_child_count() == 1
            && node
                .named_child(0)
                .is_some_and(|e| matches!(e.kind(), "string" | "concatenated_string"))
        {
            docstring_ranges.push((node.start_position().row, node.end_position().row));
        }
    });
    let in_docstring = |row: usize| docstring_ranges.iter().any(|&(s, e)| row >= s && row <= e);

    let mut code_lines: HashSet<usize> = HashSet::new();
    pyast::walk(source.root(), &mut |node| {
        if node.child_count() > 0 || node.kind() == "comment" {
            return;
        }
        // leaf token
        for row in node.start_position().row..=node.end_position().row {
            if !in_docstring(row) {
                code_lines.insert(row);
            }
        }
    });
    code_lines.len()
}

pub fn score_reuse(predictions: &[ReuseVector], labels: &[ReuseVector]) -> Result<ReuseMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "predictions ({}) and labels ({}) differ in length",
            predictions.len(),
            labels.len()
        )));
    }
    let count = |select: fn(&ReuseVector) -> bool| -> ConfusionCounts {
        let mut counts = ConfusionCounts::default();
        for (pred, label) in predictions.iter().zip(labels) {
            match (select(pred), select(label)) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => counts.tn += 1,
            }
        }
        counts
    };
    Ok(ReuseMetrics {
        local: AspectMetrics::from_counts(count(|v| v.local)),
        global: AspectMetrics::from_counts(count(|v| v.global)),
        library: AspectMetrics::from_counts(count(|v| v.library)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReuseMetrics {
    pub local: AspectMetrics,
    pub global: AspectMetrics,
    pub library: AspectMetrics,
}

#[derive(Debug, Clone)]
pub struct EvalSample {
    pub generated: String,
    pub reference: String,
    pub labels: Option<ReuseVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CodeBleuAggregate {
    pub score: f64,
    pub ngram: f64,
    pub weighted_ngram: f64,
    pub syntax: f64,
    pub dataflow: f64,
    pub flagged_samples: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub predictions: Vec<ReuseVector>,
    /// Samples whose generated code did not parse.
    pub unparsed_samples: Vec<usize>,
    pub reuse: Option<ReuseMetrics>,
    pub library_coverage: Option<f64>,
    pub avg_loc: f64,
    pub codebleu: CodeBleuAggregate,
}

/// Aggregates every metric over the batch. Confusion metrics are computed
/// only when every sample carries labels.
pub fn evaluate_batch(
    samples: &[EvalSample],
    ctx: &EvalContext<'_>,
    weights: [f64; 4],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Contract(
            "evaluate_batch needs at least one sample".into(),
        ));
    }

    let repo_modules = repo_module_names(ctx);
    let mut predictions = Vec::with_capacity(samples.len());
    let mut unparsed = Vec::new();
    let mut coverages = Vec::new();
    let mut loc_total = 0usize;
    let mut bleu_reports: Vec<CodeBleu> = Vec::with_capacity(samples.len());

    for (index, sample) in samples.iter().enumerate() {
        let detection = detect_reuse(&sample.generated, ctx);
        if !detection.parsed {
            unparsed.push(index);
        }
        predictions.push(detection.vector);
        if let Some(coverage) = library_coverage(&sample.generated, ctx.libs, &repo_modules) {
            coverages.push(coverage);
        }
        loc_total += count_loc(&sample.generated);
        bleu_reports.push(codebleu::codebleu(
            &sample.generated,
            &sample.reference,
            weights,
        )?);
    }

    let labels: Option<Vec<ReuseVector>> = samples.iter().map(|s| s.labels).collect();
    let reuse = match labels {
        Some(labels) => Some(score_reuse(&predictions, &labels)?),
        None => None,
    };

    let library_coverage = if coverages.is_empty() {
        None
    } else {
        Some(coverages.iter().sum::<f64>() / coverages.len() as f64)
    };

    let n = samples.len() as f64;
    let mean = |select: fn(&CodeBleu) -> f64| bleu_reports.iter().map(select).sum::<f64>() / n;
    let codebleu_aggregate = CodeBleuAggregate {
        score: mean(|r| r.score),
        ngram: mean(|r| r.ngram),
        weighted_ngram: mean(|r| r.weighted_ngram),
        syntax: mean(|r| r.syntax),
        dataflow: mean(|r| r.dataflow),
        flagged_samples: bleu_reports.iter().filter(|r| r.parse_failed).count(),
    };

    Ok(EvalReport {
        n_samples: samples.len(),
        predictions,
        unparsed_samples: unparsed,
        reuse,
        library_coverage,
        avg_loc: loc_total as f64 / n,
        codebleu: codebleu_aggregate,
    })
}

/// Renders a ratio under the two reporting conventions: absent ratios print
/// as `n/a` normally, or as `0` when reproducing the published tables.
pub fn render_ratio(value: Option<f64>, paper_convention: bool) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None if paper_convention => "0".to_string(),
        None => "n/a".to_string(),
    }
}

/// Label file format: one line per sample, three 0/1 fields
/// (local, global, library), whitespace-separated.
pub fn parse_label_lines(text: &str) -> Result<Vec<ReuseVector>> {
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Contract(format!(
                "label line {}: expected three 0/1 fields, got {line:?}",
                idx + 1
            )));
        }
        let bit = |s: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Contract(format!(
                    "label line {}: invalid field {other:?}",
                    idx + 1
                ))),
            }
        };
        labels.push(ReuseVector {
            local: bit(fields[0])?,
            global: bit(fields[1])?,
            library: bit(fields[2])?,
        });
    }
    Ok(labels)
}

/// The machine-readable summary: key=value lines, deterministic order.
pub fn render_summary(report: &EvalReport, paper_convention: bool) -> String {
    let mut pairs: BTreeMap<String, String> = BTreeMap::new();
    pairs.insert("n_samples".into(), report.n_samples.to_string());
    pairs.insert("avg_loc".into(), format!("{:.3}", report.avg_loc));
    pairs.insert(
        "library_coverage".into(),
        render_ratio(report.library_coverage, paper_convention),
    );
    pairs.insert("codebleu".into(), format!("{:.4}", report.codebleu.score));
    pairs.insert(
        "codebleu_ngram".into(),
        format!("{:.4}", report.codebleu.ngram),
    );
    pairs.insert(
        "codebleu_weighted_ngram".into(),
        format!("{:.4}", report.codebleu.weighted_ngram),
    );
    pairs.insert(
        "codebleu_syntax".into(),
        format!("{:.4}", report.codebleu.syntax),
    );
    pairs.insert(
        "codebleu_dataflow".into(),
        format!("{:.4}", report.codebleu.dataflow),
    );
    pairs.insert(
        "unparsed_samples".into(),
        report.unparsed_samples.len().to_string(),
    );
    if let Some(reuse) = &report.reuse {
        let aspects = [
            ("local", &reuse.local),
            ("global", &reuse.global),
            ("library", &reuse.library),
        ];
        for (name, metrics) in aspects {
            pairs.insert(format!("{name}_tp"), metrics.counts.tp.to_string());
            pairs.insert(format!("{name}_fp"), metrics.counts.fp.to_string());
            pairs.insert(format!("{name}_tn"), metrics.counts.tn.to_string());
            pairs.insert(format!("{name}_fn"), metrics.counts.fn_.to_string());
            pairs.insert(
                format!("{name}_precision"),
                render_ratio(metrics.precision, paper_convention),
            );
            pairs.insert(
                format!("{name}_recall"),
                render_ratio(metrics.recall, paper_convention),
            );
            pairs.insert(
                format!("{name}_f1"),
                render_ratio(metrics.f1, paper_convention),
            );
            pairs.insert(
                format!("{name}_accuracy"),
                render_ratio(metrics.accuracy, paper_convention),
            );
        }
    }
    let mut out = String::new();
    for (key, value) in pairs {
        out.push_str(&key);
        out.push('=');
        out.push_str(&value);
        out.push('\n');
    }
    out
}
