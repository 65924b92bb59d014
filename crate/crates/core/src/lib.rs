//! Repository-aware code generation toolkit.
//!
//! Mines a Python repository into two knowledge bases (indexed functions and
//! third-party library names), retrieves repository context for a developer
//! requirement over dual embedding channels, fuses the context into a
//! structured generation prompt, and evaluates generated code for local,
//! global, and library reuse.

pub mod codebleu;
pub mod config;
pub mod error;
pub mod evaluator;
pub mod extractor;
pub mod model;
pub mod promptgen;
pub mod pyast;
pub mod retrieval;
pub mod semantic;

pub use error::{Error, Result};
pub use model::{FunctionBase, FunctionRecord, LibraryBase, Requirement};
