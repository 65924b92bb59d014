//! Repository mining: walk a Python repository, extract per-function basic
//! records, the third-party import set, and per-file local-module context.

use std::collections::BTreeSet;
use std::collections::HashSet;
use std::path::Path;

use tree_sitter::Node;

use crate::error::{Error, Result};
use crate::model::{FunctionBase, LibraryBase};
use crate::pyast::{self, PySource};

/// Python standard-library top-level module names, pinned to one interpreter
/// release so third-party classification is reproducible.
const STDLIB_MODULES: &str = include_str!("../assets/python_stdlib_modules.txt");

pub fn stdlib_modules() -> HashSet<&'static str> {
    STDLIB_MODULES.lines().filter(|l| !l.is_empty()).collect()
}

/// A function record before summarization and embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFunction {
    pub fqn: String,
    pub file_path: String,
    pub class_name: Option<String>,
    pub signature: String,
    pub comment: Option<String>,
    pub source: String,
    pub is_empty: bool,
}

/// Which of the four local-module knowledge types to mine. Defaults follow
/// the best-performing configuration: local functions plus class instance
/// attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalKnowledgeConfig {
    pub local_functions: bool,
    pub class_instance_attributes: bool,
    pub module_fqn: bool,
    pub module_variables: bool,
}

impl Default for LocalKnowledgeConfig {
    fn default() -> Self {
        LocalKnowledgeConfig {
            local_functions: true,
            class_instance_attributes: true,
            module_fqn: false,
            module_variables: false,
        }
    }
}

impl LocalKnowledgeConfig {
    pub fn none() -> Self {
        LocalKnowledgeConfig {
            local_functions: false,
            class_instance_attributes: false,
            module_fqn: false,
            module_variables: false,
        }
    }

    pub fn all() -> Self {
        LocalKnowledgeConfig {
            local_functions: true,
            class_instance_attributes: true,
            module_fqn: true,
            module_variables: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalFunctionEntry {
    pub fqn: String,
    pub summary: String,
    pub signature: String,
    pub is_method: bool,
}

/// The mined local-module knowledge for one file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalContext {
    pub file_path: String,
    pub local_functions: Vec<LocalFunctionEntry>,
    pub class_init_sources: Vec<String>,
    pub module_fqn: Option<String>,
    /// `Some("None")` when variables are enabled but the module defines none.
    pub module_variables: Option<String>,
    pub enabled: LocalKnowledgeConfig,
}

impl LocalContext {
    pub fn empty(file_path: &str) -> Self {
        LocalContext {
            file_path: file_path.to_string(),
            local_functions: Vec::new(),
            class_init_sources: Vec::new(),
            module_fqn: None,
            module_variables: None,
            enabled: LocalKnowledgeConfig::none(),
        }
    }
}

/// One successfully parsed source file, path repository-relative and
/// '/'-separated.
#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub path: String,
    pub source: PySource,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipReport {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct RepoParse {
    pub files: Vec<ParsedFile>,
    pub skipped: Vec<SkipReport>,
}

/// Parses every `.py` file under `root`, skipping hidden directories and any
/// directory whose name appears in `exclude`. Files that fail to parse are
/// reported in `skipped`, not fatal.
pub fn parse_repository(root: &Path, exclude: &[String]) -> Result<RepoParse> {
    if !root.exists() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let excluded: HashSet<&str> = exclude.iter().map(String::as_str).collect();

    let mut paths: Vec<std::path::PathBuf> = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|entry| {
            if entry.depth() == 0 {
                return true;
            }
            let name = entry.file_name().to_string_lossy();
            if entry.file_type().is_dir() {
                !name.starts_with('.') && !excluded.contains(name.as_ref())
            } else {
                true
            }
        })
        .filter_map(|entry| entry.ok())
        .filter(|entry| {
            entry.file_type().is_file()
                && entry.path().extension().is_some_and(|ext| ext == "py")
                && !entry.file_name().to_string_lossy().starts_with('.')
        })
        .map(|entry| entry.into_path())
        .collect();
    paths.sort();

    let mut result = RepoParse::default();
    for path in paths {
        let rel = path
            .strip_prefix(root)
            .expect("walkdir yields paths under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let text = match std::fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) => {
                result.skipped.push(SkipReport {
                    path: rel,
                    reason: format!("read failed: {e}"),
                });
                continue;
            }
        };
        let source = pyast::parse(&text);
        if source.has_errors() {
            result.skipped.push(SkipReport {
                path: rel,
                reason: "syntax errors".to_string(),
            });
            continue;
        }
        result.files.push(ParsedFile { path: rel, source });
    }
    Ok(result)
}

/// Dotted module path for a repository-relative file path; a package-init
/// file contributes only its package path.
pub fn module_fqn_of(file_path: &str) -> String {
    let stripped = file_path.strip_suffix(".py").unwrap_or(file_path);
    let mut parts: Vec<&str> = stripped.split('/').collect();
    if parts.last() == Some(&"__init__") {
        parts.pop();
    }
    parts.join(".")
}

/// Dotted join of module path, optional class, and function name.
pub fn compute_fqn(file_path: &str, class_name: Option<&str>, name: &str) -> String {
    let mut fqn = module_fqn_of(file_path);
    if let Some(class) = class_name {
        if !fqn.is_empty() {
            fqn.push('.');
        }
        fqn.push_str(class);
    }
    if !fqn.is_empty() {
        fqn.push('.');
    }
    fqn.push_str(name);
    fqn
}

fn function_node_of(node: Node<'_>) -> Option<Node<'_>> {
    match node.kind() {
        "function_definition" => Some(node),
        "decorated_definition" => {
            let def = node.child_by_field_name("definition")?;
            (def.kind() == "function_definition").then_some(def)
        }
        _ => None,
    }
}

fn class_node_of(node: Node<'_>) -> Option<Node<'_>> {
    match node.kind() {
        "class_definition" => Some(node),
        "decorated_definition" => {
            let def = node.child_by_field_name("definition")?;
            (def.kind() == "class_definition").then_some(def)
        }
        _ => None,
    }
}

/// The `def` line: from the start of the definition (decorators excluded,
/// `async` included) up to but not including the colon before the body.
fn signature_text(file: &ParsedFile, def: Node<'_>) -> String {
    let mut colon_start = None;
    let mut cursor = def.walk();
    for child in def.children(&mut cursor) {
        if child.kind() == ":" {
            colon_start = Some(child.start_byte());
        }
        if child.kind() == "block" {
            break;
        }
    }
    let end = colon_start.unwrap_or(def.end_byte());
    file.source.text[def.start_byte()..end]
        .trim_end()
        .to_string()
}

/// Docstring content, quotes stripped, surrounding whitespace trimmed.
fn docstring_of(file: &ParsedFile, def: Node<'_>) -> Option<String> {
    let body = def.child_by_field_name("body")?;
    let first = body.named_child(0)?;
    if first.kind() != "expression_statement" || first.named_child_count() != 1 {
        return None;
    }
    let expr = first.named_child(0)?;
    string_content(file, expr).map(|s| s.trim().to_string())
}

fn string_content(file: &ParsedFile, node: Node<'_>) -> Option<String> {
    match node.kind() {
        "string" => {
            let mut content = String::new();
            let mut cursor = node.walk();
            for child in node.children(&mut cursor) {
                if child.kind() == "string_content" {
                    content.push_str(file.source.node_text(child));
                }
            }
            Some(content)
        }
        "concatenated_string" => {
            let mut content = String::new();
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                if let Some(part) = string_content(file, child) {
                    content.push_str(&part);
                }
            }
            Some(content)
        }
        _ => None,
    }
}

/// A body is empty when it consists only of pass statements, bare string
/// expressions, and ellipsis literals.
fn body_is_empty(def: Node<'_>) -> bool {
    let Some(body) = def.child_by_field_name("body") else {
        return true;
    };
    let mut cursor = body.walk();
    for stmt in body.named_children(&mut cursor) {
        match stmt.kind() {
            "pass_statement" => {}
            "expression_statement" => {
                let only_trivial = stmt.named_child_count() == 1
                    && stmt.named_child(0).is_some_and(|expr| {
                        matches!(expr.kind(), "string" | "concatenated_string" | "ellipsis")
                    });
                if !only_trivial {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

fn raw_function(
    file: &ParsedFile,
    outer: Node<'_>,
    def: Node<'_>,
    class_name: Option<&str>,
) -> Option<RawFunction> {
    let name_node = def.child_by_field_name("name")?;
    let name = file.source.node_text(name_node).to_string();
    Some(RawFunction {
        fqn: compute_fqn(&file.path, class_name, &name),
        file_path: file.path.clone(),
        class_name: class_name.map(String::from),
        signature: signature_text(file, def),
        comment: docstring_of(file, def),
        source: file.source.node_text(outer).to_string(),
        is_empty: body_is_empty(def),
    })
}

/// One RawFunction per module-level function and per direct class method, in
/// source order. Nested functions and nested classes are not indexed.
pub fn extract_functions(file: &ParsedFile) -> Vec<RawFunction> {
    let mut out = Vec::new();
    let root = file.source.root();
    let mut cursor = root.walk();
    for stmt in root.named_children(&mut cursor) {
        if let Some(def) = function_node_of(stmt) {
            out.extend(raw_function(file, stmt, def, None));
        } else if let Some(class) = class_node_of(stmt) {
            let Some(class_name_node) = class.child_by_field_name("name") else {
                continue;
            };
            let class_name = file.source.node_text(class_name_node).to_string();
            let Some(body) = class.child_by_field_name("body") else {
                continue;
            };
            let mut body_cursor = body.walk();
            for member in body.named_children(&mut body_cursor) {
                if let Some(def) = function_node_of(member) {
                    out.extend(raw_function(file, member, def, Some(&class_name)));
                }
            }
        }
    }
    out
}

/// Top-level name of the dotted path under an import node.
fn top_level_of_dotted(file: &ParsedFile, dotted: Node<'_>) -> Option<String> {
    let first = dotted.named_child(0)?;
    if first.kind() == "identifier" {
        Some(file.source.node_text(first).to_string())
    } else {
        None
    }
}

/// Absolute import targets appearing anywhere in the file, as
/// `(top_level_name, full_dotted_path)` pairs. Relative imports are skipped;
/// guarded imports count like top-level ones.
pub fn absolute_imports(file: &ParsedFile) -> Vec<(String, String)> {
    let mut out = Vec::new();
    pyast::walk(file.source.root(), &mut |node| match node.kind() {
        "import_statement" => {
            let mut cursor = node.walk();
            for child in node.named_children(&mut cursor) {
                let dotted = match child.kind() {
                    "dotted_name" => Some(child),
                    "aliased_import" => child.child_by_field_name("name"),
                    _ => None,
                };
                if let Some(dotted) = dotted {
                    if let Some(top) = top_level_of_dotted(file, dotted) {
                        out.push((top, file.source.node_text(dotted).to_string()));
                    }
                }
            }
        }
        "import_from_statement" => {
            if let Some(module) = node.child_by_field_name("module_name") {
                if module.kind() == "dotted_name" {
                    if let Some(top) = top_level_of_dotted(file, module) {
                        out.push((top, file.source.node_text(module).to_string()));
                    }
                }
                // relative_import: always excluded
            }
        }
        "future_import_statement" => {
            out.push(("__future__".to_string(), "__future__".to_string()));
        }
        _ => {}
    });
    out
}

/// Top-level import names that are neither standard-library nor local to the
/// repository.
pub fn extract_third_party_imports(
    file: &ParsedFile,
    repo_local_modules: &HashSet<String>,
) -> BTreeSet<String> {
    let stdlib = stdlib_modules();
    absolute_imports(file)
        .into_iter()
        .map(|(top, _)| top)
        .filter(|top| {
            !top.is_empty()
                && !top.contains(char::is_whitespace)
                && !stdlib.contains(top.as_str())
                && !repo_local_modules.contains(top)
        })
        .collect()
}

/// Top-level package/module names present in the repository.
pub fn repo_local_modules(parse: &RepoParse) -> HashSet<String> {
    parse
        .files
        .iter()
        .filter_map(|f| {
            let first = f.path.split('/').next()?;
            Some(first.strip_suffix(".py").unwrap_or(first).to_string())
        })
        .collect()
}

/// Union of third-party imports over every parsed file.
pub fn build_library_base(root: &Path, exclude: &[String]) -> Result<LibraryBase> {
    let parse = parse_repository(root, exclude)?;
    Ok(library_base_from_parse(&parse))
}

pub fn library_base_from_parse(parse: &RepoParse) -> LibraryBase {
    let locals = repo_local_modules(parse);
    let mut names = BTreeSet::new();
    for file in &parse.files {
        names.extend(extract_third_party_imports(file, &locals));
    }
    LibraryBase { names }
}

/// Source text of module-level assignment statements, in order.
fn module_variable_block(file: &ParsedFile) -> Option<String> {
    let mut chunks = Vec::new();
    let root = file.source.root();
    let mut cursor = root.walk();
    for stmt in root.named_children(&mut cursor) {
        if stmt.kind() == "expression_statement"
            && stmt.named_child_count() == 1
            && stmt
                .named_child(0)
                .is_some_and(|e| e.kind() == "assignment")
        {
            chunks.push(file.source.node_text(stmt).to_string());
        }
    }
    if chunks.is_empty() {
        None
    } else {
        Some(chunks.join("\n"))
    }
}

/// Mines the local-module knowledge types enabled in `config` for one file.
/// Every function found in the file must already have a summarized record in
/// `base`.
pub fn mine_local_context(
    file: &ParsedFile,
    base: &FunctionBase,
    config: LocalKnowledgeConfig,
) -> Result<LocalContext> {
    let functions = extract_functions(file);

    let mut local_functions = Vec::new();
    let mut class_init_sources = Vec::new();
    if config.local_functions || config.class_instance_attributes {
        for raw in &functions {
            let record = base.record(&raw.fqn).ok_or_else(|| {
                Error::Consistency(format!(
                    "function base has no record for {} (file {})",
                    raw.fqn, file.path
                ))
            })?;
            if config.local_functions {
                local_functions.push(LocalFunctionEntry {
                    fqn: record.fqn.clone(),
                    summary: record.summary.clone(),
                    signature: record.signature.clone(),
                    is_method: record.class_name.is_some(),
                });
            }
            if config.class_instance_attributes
                && raw.class_name.is_some()
                && raw.fqn.ends_with(".__init__")
            {
                class_init_sources.push(raw.source.clone());
            }
        }
    }

    let module_fqn = config.module_fqn.then(|| module_fqn_of(&file.path));
    let module_variables = config
        .module_variables
        .then(|| module_variable_block(file).unwrap_or_else(|| "None".to_string()));

    Ok(LocalContext {
        file_path: file.path.clone(),
        local_functions,
        class_init_sources,
        module_fqn,
        module_variables,
        enabled: config,
    })
}

/// Parses a single file's text as if it lived at `rel_path` in a repository.
pub fn parse_file_text(rel_path: &str, text: &str) -> Result<ParsedFile> {
    let source = pyast::parse(text);
    if source.has_errors() {
        return Err(Error::Parse {
            path: rel_path.into(),
            line: first_error_line(&source),
            message: "syntax errors".to_string(),
        });
    }
    Ok(ParsedFile {
        path: rel_path.to_string(),
        source,
    })
}

fn first_error_line(source: &PySource) -> usize {
    let mut line = 1;
    let mut found = false;
    pyast::walk(source.root(), &mut |node| {
        if !found && (node.is_error() || node.is_missing()) {
            line = node.start_position().row + 1;
            found = true;
        }
    });
    line
}
