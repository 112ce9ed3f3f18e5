use std::fmt::Write;

use super::{DecisionTree, Node};

fn feature_name(names: &[&str], index: usize) -> String {
    names.get(index).map_or_else(|| format!("f{index}"), |s| s.to_string())
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

fn counts(class_counts: &[usize]) -> String {
    let parts: Vec<String> = class_counts.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// Graphviz digraph. Internal nodes read `name ≤ threshold`; the left edge is
/// the true branch. Missing names fall back to `f{i}`.
pub fn export_dot(tree: &DecisionTree, feature_names: &[&str]) -> String {
    let mut out = String::from("digraph tree {\n    node [shape=box, fontname=\"Helvetica\"];\n");
    let mut stack = vec![tree.root];
    let mut edges = Vec::new();
    while let Some(at) = stack.pop() {
        match &tree.nodes[at] {
            Node::Internal { feature, threshold, left, right } => {
                let label = format!("{} ≤ {threshold}", feature_name(feature_names, *feature));
                writeln!(out, "    n{at} [label=\"{}\"];", escape(&label)).unwrap();
                edges.push(format!("    n{at} -> n{left} [label=\"true\"];"));
                edges.push(format!("    n{at} -> n{right} [label=\"false\"];"));
                stack.push(*right);
                stack.push(*left);
            }
            Node::Leaf { class_counts, predicted_class } => {
                writeln!(
                    out,
                    "    n{at} [label=\"class {predicted_class}\\ncounts {}\", style=rounded];",
                    counts(class_counts)
                )
                .unwrap();
            }
        }
    }
    for e in edges {
        out.push_str(&e);
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

/// Nested if/else text, one `predict` line per leaf, left branch first.
pub fn export_rules(tree: &DecisionTree) -> String {
    let mut out = String::new();
    write_rules(tree, tree.root, 0, &mut out);
    out
}

fn write_rules(tree: &DecisionTree, at: usize, depth: usize, out: &mut String) {
    let pad = "    ".repeat(depth);
    match &tree.nodes[at] {
        Node::Internal { feature, threshold, left, right } => {
            writeln!(out, "{pad}if f{feature} <= {threshold}:").unwrap();
            write_rules(tree, *left, depth + 1, out);
            writeln!(out, "{pad}else:").unwrap();
            write_rules(tree, *right, depth + 1, out);
        }
        Node::Leaf { class_counts, predicted_class } => {
            writeln!(out, "{pad}predict {predicted_class}  # counts {}", counts(class_counts)).unwrap();
        }
    }
}
