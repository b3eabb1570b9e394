//! Graphviz DOT rendering of trained trees.

use std::fmt::Write;

use super::{Leaf, Node, TreeModel};

/// Formats `x` with `sig` significant digits in the style of C's `%g`.
pub fn format_significant(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sig = sig.max(1);
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders a tree as a DOT digraph. Internal nodes read `name ≤ threshold`;
/// leaves show their class distribution or regression value. Left edges are
/// the `≤` branch.
pub fn to_dot(tree: &TreeModel, title: &str, class_names: Option<&[String]>) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(title)).unwrap();
    writeln!(out, "  node [shape=box, fontname=\"Helvetica\"];").unwrap();
    for (i, node) in tree.nodes.iter().enumerate() {
        let label = match node {
            Node::Split { feature, threshold, .. } => format!(
                "{} ≤ {}",
                escape(tree.features.get(*feature).map(String::as_str).unwrap_or("?")),
                format_significant(*threshold, 6)
            ),
            Node::Leaf(Leaf::Value(v)) => format!("value = {}", format_significant(*v, 6)),
            Node::Leaf(Leaf::Distribution(dist)) => dist
                .iter()
                .enumerate()
                .map(|(c, p)| {
                    let name = class_names
                        .and_then(|n| n.get(c).cloned())
                        .unwrap_or_else(|| format!("class {c}"));
                    format!("{}: {}", escape(&name), format_significant(*p, 4))
                })
                .collect::<Vec<_>>()
                .join("\\n"),
        };
        let style = if matches!(node, Node::Leaf(_)) {
            ", style=rounded"
        } else {
            ""
        };
        writeln!(out, "  n{i} [label=\"{}\"{style}];", label).unwrap();
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        if let Node::Split { left, right, .. } = node {
            writeln!(out, "  n{i} -> n{left} [label=\"yes\"];").unwrap();
            writeln!(out, "  n{i} -> n{right} [label=\"no\"];").unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeKind;

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(44533.0, 6), "44533");
        assert_eq!(format_significant(44533.25, 6), "44533.2");
        assert_eq!(format_significant(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_significant(0.000012345, 6), "1.2345e-05");
        assert_eq!(format_significant(0.5, 6), "0.5");
        assert_eq!(format_significant(-2.0, 6), "-2");
        assert_eq!(format_significant(0.0, 6), "0");
    }

    fn is_node_line(l: &str) -> bool {
        let l = l.trim_start();
        l.starts_with('n') && l[1..].starts_with(|c: char| c.is_ascii_digit()) && !l.contains("->")
    }

    fn stump() -> TreeModel {
        TreeModel {
            kind: TreeKind::Classifier { n_classes: 3 },
            features: vec!["acc_sr_avg".into()],
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 44533.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf(Leaf::Distribution(vec![1.0, 0.0, 0.0])),
                Node::Leaf(Leaf::Distribution(vec![0.0, 0.25, 0.75])),
            ],
        }
    }

    #[test]
    fn stump_structure() {
        let dot = to_dot(&stump(), "phase", None);
        assert!(dot.starts_with("digraph \"phase\" {"));
        assert!(dot.contains("acc_sr_avg ≤ 44533"));
        assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 2);
        assert_eq!(
            dot.lines()
                .filter(|l| is_node_line(l))
                .count(),
            3
        );
        assert!(dot.contains("class 2: 0.75"));
    }

    #[test]
    fn single_leaf() {
        let tree = TreeModel {
            kind: TreeKind::Regressor,
            features: vec!["x".into()],
            nodes: vec![Node::Leaf(Leaf::Value(0.125))],
        };
        let dot = to_dot(&tree, "t", None);
        assert!(dot.contains("n0 [label=\"value = 0.125\""));
        assert!(!dot.contains("->"));
    }
}
