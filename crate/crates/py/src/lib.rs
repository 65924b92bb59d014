//! Python bindings for the core pipeline: offline indexing, retrieval over a
//! saved knowledge base, and the evaluation metrics.

use std::collections::HashSet;
use std::path::Path;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use repogen_core::codebleu;
use repogen_core::evaluator;
use repogen_core::extractor;
use repogen_core::model;
use repogen_core::retrieval;
use repogen_core::semantic::{
    self, BuildOptions, OfflineChatProvider, OfflineEmbedder, SummaryCache,
};

fn to_py_err(error: repogen_core::Error) -> PyErr {
    match &error {
        repogen_core::Error::Io { .. } | repogen_core::Error::NotFound(_) => {
            PyIOError::new_err(error.to_string())
        }
        _ => PyValueError::new_err(error.to_string()),
    }
}

/// Build both knowledge bases for a repository with the deterministic
/// offline providers. Returns (files_parsed, functions_indexed, libraries).
#[pyfunction]
#[pyo3(signature = (repo, out, embed_dim=256, exclude=None))]
fn index_repository(
    repo: &str,
    out: &str,
    embed_dim: usize,
    exclude: Option<Vec<String>>,
) -> PyResult<(usize, usize, usize)> {
    let exclude = exclude.unwrap_or_default();
    let cache = SummaryCache::new();
    let embedder = OfflineEmbedder::new(embed_dim);
    let options = BuildOptions {
        exclude: exclude.clone(),
        ..BuildOptions::default()
    };
    let output = semantic::build_function_base(
        Path::new(repo),
        &OfflineChatProvider,
        &embedder,
        &cache,
        &options,
    )
    .map_err(to_py_err)?;
    let libs = extractor::build_library_base(Path::new(repo), &exclude).map_err(to_py_err)?;
    model::save_function_base(&output.base, Path::new(out)).map_err(to_py_err)?;
    model::save_library_base(&libs, Path::new(out)).map_err(to_py_err)?;
    Ok((
        output.files_parsed,
        output.base.records.len(),
        libs.names.len(),
    ))
}

/// A loaded pair of knowledge bases.
#[pyclass]
struct KnowledgeBase {
    base: model::FunctionBase,
    libs: model::LibraryBase,
}

#[pymethods]
impl KnowledgeBase {
    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        let base = model::load_function_base(Path::new(dir)).map_err(to_py_err)?;
        let libs = model::load_library_base(Path::new(dir)).map_err(to_py_err)?;
        Ok(KnowledgeBase { base, libs })
    }

    fn __len__(&self) -> usize {
        self.base.records.len()
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.base.embed_dim
    }

    #[getter]
    fn provider_id(&self) -> String {
        self.base.provider_id.clone()
    }

    fn libraries(&self) -> Vec<String> {
        self.libs.names.iter().cloned().collect()
    }

    fn fqns(&self) -> Vec<String> {
        self.base.records.iter().map(|r| r.fqn.clone()).collect()
    }

    fn record<'py>(&self, py: Python<'py>, fqn: &str) -> PyResult<Bound<'py, PyDict>> {
        let record = self
            .base
            .record(fqn)
            .ok_or_else(|| PyValueError::new_err(format!("no record for {fqn}")))?;
        let dict = PyDict::new(py);
        dict.set_item("fqn", &record.fqn)?;
        dict.set_item("file_path", &record.file_path)?;
        dict.set_item("class_name", record.class_name.as_deref())?;
        dict.set_item("signature", &record.signature)?;
        dict.set_item("comment", record.comment.as_deref())?;
        dict.set_item("source", &record.source)?;
        dict.set_item("is_empty", record.is_empty)?;
        dict.set_item("summary", &record.summary)?;
        Ok(dict)
    }

    /// Rank candidates against the summary vectors (description channel).
    #[pyo3(signature = (query, k=5, target_file=None))]
    fn retrieve(
        &self,
        query: &str,
        k: usize,
        target_file: Option<&str>,
    ) -> PyResult<Vec<(String, f64, String)>> {
        let embedder = OfflineEmbedder::new(self.base.embed_dim);
        let hits = retrieval::retrieve_by_summary(query, &self.base, k, &embedder, target_file)
            .map_err(to_py_err)?;
        Ok(hits
            .into_iter()
            .map(|h| (h.fqn, h.score, h.channel.to_string()))
            .collect())
    }

    /// Rank candidates against the code vectors (what-if draft channel).
    #[pyo3(signature = (draft, k=5, target_file=None))]
    fn retrieve_code(
        &self,
        draft: &str,
        k: usize,
        target_file: Option<&str>,
    ) -> PyResult<Vec<(String, f64, String)>> {
        let embedder = OfflineEmbedder::new(self.base.embed_dim);
        let hits = retrieval::retrieve_by_code(draft, &self.base, k, &embedder, target_file)
            .map_err(to_py_err)?;
        Ok(hits
            .into_iter()
            .map(|h| (h.fqn, h.score, h.channel.to_string()))
            .collect())
    }
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    semantic::cosine_similarity(&a, &b).map_err(to_py_err)
}

#[pyfunction]
fn count_loc(code: &str) -> usize {
    evaluator::count_loc(code)
}

#[pyfunction]
fn harmonic_f1(precision: f64, recall: f64) -> f64 {
    evaluator::harmonic_f1(precision, recall)
}

#[pyfunction]
#[pyo3(signature = (code, libraries))]
fn library_coverage(code: &str, libraries: Vec<String>) -> Option<f64> {
    let libs = model::LibraryBase::from_names(libraries);
    evaluator::library_coverage(code, &libs, &HashSet::new())
}

#[pyfunction]
#[pyo3(signature = (candidate, reference))]
fn codebleu_score<'py>(
    py: Python<'py>,
    candidate: &str,
    reference: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let report =
        codebleu::codebleu(candidate, reference, codebleu::DEFAULT_WEIGHTS).map_err(to_py_err)?;
    let dict = PyDict::new(py);
    dict.set_item("score", report.score)?;
    dict.set_item("ngram", report.ngram)?;
    dict.set_item("weighted_ngram", report.weighted_ngram)?;
    dict.set_item("syntax", report.syntax)?;
    dict.set_item("dataflow", report.dataflow)?;
    dict.set_item("parse_failed", report.parse_failed)?;
    Ok(dict)
}

/// Extract the basic per-function records from one source file.
#[pyfunction]
fn extract_functions<'py>(
    py: Python<'py>,
    source: &str,
    file_path: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let file = extractor::parse_file_text(file_path, source).map_err(to_py_err)?;
    let mut out = Vec::new();
    for raw in extractor::extract_functions(&file) {
        let dict = PyDict::new(py);
        dict.set_item("fqn", raw.fqn)?;
        dict.set_item("file_path", raw.file_path)?;
        dict.set_item("class_name", raw.class_name)?;
        dict.set_item("signature", raw.signature)?;
        dict.set_item("comment", raw.comment)?;
        dict.set_item("source", raw.source)?;
        dict.set_item("is_empty", raw.is_empty)?;
        out.push(dict);
    }
    Ok(out)
}

#[pymodule]
fn repogen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<KnowledgeBase>()?;
    m.add_function(wrap_pyfunction!(index_repository, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(count_loc, m)?)?;
    m.add_function(wrap_pyfunction!(harmonic_f1, m)?)?;
    m.add_function(wrap_pyfunction!(library_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(codebleu_score, m)?)?;
    m.add_function(wrap_pyfunction!(extract_functions, m)?)?;
    Ok(())
}
