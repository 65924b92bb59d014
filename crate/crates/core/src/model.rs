//! Domain types shared by every module, plus persistence of the two
//! knowledge bases built per repository.
//!
//! A function base persists as `functions.jsonl` (one record per line, fields
//! in declaration order) next to a `meta` header carrying the embedding
//! dimension and provider tag. A library base persists as `libraries.txt`,
//! one sorted name per line.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pyast;

pub const FUNCTIONS_FILE: &str = "functions.jsonl";
pub const LIBRARIES_FILE: &str = "libraries.txt";
pub const META_FILE: &str = "meta";

/// One indexed function: the six basic fields, its fully qualified name,
/// the generated summary, and the two embedding vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub fqn: String,
    pub file_path: String,
    pub class_name: Option<String>,
    pub signature: String,
    pub comment: Option<String>,
    pub source: String,
    pub is_empty: bool,
    pub summary: String,
    pub summary_vector: Vec<f64>,
    pub code_vector: Vec<f64>,
}

/// The per-repository function index.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionBase {
    pub records: Vec<FunctionRecord>,
    pub embed_dim: usize,
    pub provider_id: String,
}

impl FunctionBase {
    pub fn new(
        records: Vec<FunctionRecord>,
        embed_dim: usize,
        provider_id: String,
    ) -> Result<Self> {
        let base = FunctionBase {
            records,
            embed_dim,
            provider_id,
        };
        base.validate()?;
        Ok(base)
    }

    /// Checks the structural invariants: unique FQNs and uniform vector
    /// dimensions matching `embed_dim`.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for record in &self.records {
            if !seen.insert(record.fqn.as_str()) {
                return Err(Error::Consistency(format!(
                    "duplicate fqn in function base: {}",
                    record.fqn
                )));
            }
            if record.summary_vector.len() != self.embed_dim
                || record.code_vector.len() != self.embed_dim
            {
                return Err(Error::Consistency(format!(
                    "{}: vector dimensions {}/{} do not match embed_dim {}",
                    record.fqn,
                    record.summary_vector.len(),
                    record.code_vector.len(),
                    self.embed_dim
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self, fqn: &str) -> Option<&FunctionRecord> {
        self.records.iter().find(|r| r.fqn == fqn)
    }

    /// Top-level module names evidenced by the indexed file paths
    /// (`unstructured/documents/base.py` contributes `unstructured`,
    /// `setup.py` contributes `setup`).
    pub fn repo_module_names(&self) -> BTreeSet<String> {
        self.records
            .iter()
            .filter_map(|r| {
                let first = r.file_path.split('/').next()?;
                Some(first.strip_suffix(".py").unwrap_or(first).to_string())
            })
            .collect()
    }
}

/// The set of third-party import names evidenced anywhere in the repository.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LibraryBase {
    pub names: BTreeSet<String>,
}

impl LibraryBase {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LibraryBase {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }
}

/// A developer requirement: what to build and where it will live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub description: String,
    pub definition: String,
    pub target_file: String,
}

impl Requirement {
    pub fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::Contract("requirement description is empty".into()));
        }
        if !pyast::is_function_definition_line(&self.definition) {
            return Err(Error::Contract(format!(
                "requirement definition does not parse as a function definition line: {:?}",
                self.definition
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let req: Requirement = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        req.validate()?;
        Ok(req)
    }
}

pub fn save_function_base(base: &FunctionBase, out: &Path) -> Result<()> {
    base.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let mut lines = String::new();
    for record in &base.records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Consistency(format!("serialize {}: {e}", record.fqn)))?;
        lines.push_str(&line);
        lines.push('\n');
    }
    let functions_path = out.join(FUNCTIONS_FILE);
    fs::write(&functions_path, lines).map_err(|e| Error::io(&functions_path, e))?;

    let meta_path = out.join(META_FILE);
    let meta = format!(
        "embed_dim={}\nprovider_id={}\n",
        base.embed_dim, base.provider_id
    );
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn load_function_base(dir: &Path) -> Result<FunctionBase> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Error::NotFound(meta_path));
    }
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut embed_dim: Option<usize> = None;
    let mut provider_id: Option<String> = None;
    for (idx, line) in meta_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: meta_path.clone(),
            line: idx + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        match key {
            "embed_dim" => {
                embed_dim = Some(value.parse().map_err(|_| Error::Parse {
                    path: meta_path.clone(),
                    line: idx + 1,
                    message: format!("invalid embed_dim {value:?}"),
                })?)
            }
            "provider_id" => provider_id = Some(value.to_string()),
            other => {
                return Err(Error::Parse {
                    path: meta_path.clone(),
                    line: idx + 1,
                    message: format!("unknown meta key {other:?}"),
                })
            }
        }
    }
    let embed_dim = embed_dim
        .ok_or_else(|| Error::Consistency(format!("{}: missing embed_dim", meta_path.display())))?;
    let provider_id = provider_id.ok_or_else(|| {
        Error::Consistency(format!("{}: missing provider_id", meta_path.display()))
    })?;

    let functions_path = dir.join(FUNCTIONS_FILE);
    if !functions_path.exists() {
        return Err(Error::NotFound(functions_path));
    }
    let text = fs::read_to_string(&functions_path).map_err(|e| Error::io(&functions_path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: FunctionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: functions_path.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if record.summary_vector.len() != embed_dim || record.code_vector.len() != embed_dim {
            return Err(Error::Consistency(format!(
                "{}:{}: record {} has vector dimensions {}/{} but meta says {}",
                functions_path.display(),
                idx + 1,
                record.fqn,
                record.summary_vector.len(),
                record.code_vector.len(),
                embed_dim
            )));
        }
        records.push(record);
    }

    FunctionBase::new(records, embed_dim, provider_id)
}

pub fn save_library_base(libs: &LibraryBase, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut text = String::new();
    for name in &libs.names {
        text.push_str(name);
        text.push('\n');
    }
    let path = out.join(LIBRARIES_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_library_base(dir: &Path) -> Result<LibraryBase> {
    let path = dir.join(LIBRARIES_FILE);
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut names = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if !names.insert(line.to_string()) {
            return Err(Error::Consistency(format!(
                "{}:{}: duplicate library name {line:?}",
                path.display(),
                idx + 1
            )));
        }
    }
    Ok(LibraryBase { names })
}
