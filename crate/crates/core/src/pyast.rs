//! Thin tree-sitter wrapper shared by the extraction and evaluation paths.

use tree_sitter::{Node, Parser, Tree};

/// A parsed Python source file. The tree borrows nothing; `text` is kept
/// alongside so nodes can be resolved back to source slices.
#[derive(Debug)]
pub struct PySource {
    pub text: String,
    pub tree: Tree,
}

impl Clone for PySource {
    fn clone(&self) -> Self {
        // Tree is refcounted internally; re-parsing keeps this type simple.
        parse(&self.text)
    }
}

pub fn parse(text: &str) -> PySource {
    let mut parser = Parser::new();
    let language: tree_sitter::Language = tree_sitter_python::LANGUAGE.into();
    parser
        .set_language(&language)
        .expect("tree-sitter-python language mismatch");
    let tree = parser.parse(text, None).expect("parser returned no tree");
    PySource {
        text: text.to_string(),
        tree,
    }
}

impl PySource {
    pub fn root(&self) -> Node<'_> {
        self.tree.root_node()
    }

    pub fn node_text(&self, node: Node<'_>) -> &str {
        &self.text[node.byte_range()]
    }

    pub fn has_errors(&self) -> bool {
        self.root().has_error()
    }
}

/// Depth-first walk over every node in the tree.
pub fn walk<'t, F: FnMut(Node<'t>)>(node: Node<'t>, f: &mut F) {
    f(node);
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        walk(child, f);
    }
}

/// True when `line` is a single Python function-definition line
/// (`def name(...)...:`, colon optional, `async` allowed).
pub fn is_function_definition_line(line: &str) -> bool {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.contains('\n') {
        return false;
    }
    let with_colon = if trimmed.ends_with(':') {
        trimmed.to_string()
    } else {
        format!("{trimmed}:")
    };
    let snippet = format!("{with_colon}\n    pass\n");
    let parsed = parse(&snippet);
    if parsed.has_errors() {
        return false;
    }
    let root = parsed.root();
    let mut cursor = root.walk();
    let children: Vec<Node> = root.named_children(&mut cursor).collect();
    children.len() == 1 && children[0].kind() == "function_definition"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition_line_check() {
        assert!(is_function_definition_line("def f(x) -> bool:"));
        assert!(is_function_definition_line("def f(x)"));
        assert!(is_function_definition_line("async def g(a, *, b=1):"));
        assert!(!is_function_definition_line("x = 1"));
        assert!(!is_function_definition_line("def f(:"));
        assert!(!is_function_definition_line(""));
    }

    #[test]
    fn parse_reports_errors() {
        assert!(!parse("def f():\n    return 1\n").has_errors());
        assert!(parse("def f(:\n").has_errors());
    }
}
