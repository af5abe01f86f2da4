//! Indentation-structured taxonomy documents.
//!
//! One entry per line. Two spaces of indentation per level encode the parent;
//! a trailing `*` marks a leaf. Blank lines and lines starting with `#` are
//! ignored. Depth 0 is the single root, depth 1 entries are domains and deeper
//! non-leaf entries are subdomains.
//!
//! ```text
//! biology
//!   single cell
//!     annotation *
//!     clustering *
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::path::NodePath;
use crate::tree::{DomainTree, NodeKind, TreeError, TreeNode};

pub const INDENT: usize = 2;
pub const LEAF_MARKER: char = '*';

pub fn load_tree(document: &str) -> Result<DomainTree, TreeError> {
    let mut nodes: BTreeMap<NodePath, TreeNode> = BTreeMap::new();
    let mut root: Option<NodePath> = None;
    // stack[d] = path of the most recent entry at depth d
    let mut stack: Vec<NodePath> = Vec::new();

    for (idx, raw) in document.lines().enumerate() {
        let line = idx + 1;
        let trimmed_end = raw.trim_end();
        if trimmed_end.trim_start().is_empty() || trimmed_end.trim_start().starts_with('#') {
            continue;
        }
        let indent = trimmed_end.len() - trimmed_end.trim_start().len();
        if trimmed_end[..indent].contains('\t') {
            return Err(TreeError::Parse {
                line,
                message: "tabs are not allowed in indentation".to_string(),
            });
        }
        if indent % INDENT != 0 {
            return Err(TreeError::Parse {
                line,
                message: format!("indentation of {} spaces is not a multiple of {}", indent, INDENT),
            });
        }
        let depth = indent / INDENT;
        let mut label = trimmed_end.trim_start();
        let is_leaf = label.ends_with(LEAF_MARKER);
        if is_leaf {
            label = label[..label.len() - LEAF_MARKER.len_utf8()].trim_end();
        }
        if label.is_empty() {
            return Err(TreeError::Parse {
                line,
                message: "empty label".to_string(),
            });
        }

        if depth > stack.len() {
            return Err(TreeError::OrphanParent {
                line,
                label: label.to_string(),
                depth,
            });
        }
        if depth == 0 {
            if root.is_some() {
                return Err(TreeError::Parse {
                    line,
                    message: format!("second root entry {:?}", label),
                });
            }
            if is_leaf {
                return Err(TreeError::Parse {
                    line,
                    message: "the root cannot be a leaf".to_string(),
                });
            }
            let path = NodePath::root(label).map_err(|e| TreeError::Parse {
                line,
                message: e.to_string(),
            })?;
            nodes.insert(path.clone(), TreeNode::fresh(path.clone(), NodeKind::Root, 0));
            root = Some(path.clone());
            stack.clear();
            stack.push(path);
            continue;
        }

        stack.truncate(depth);
        let parent = stack[depth - 1].clone();
        let parent_node = nodes.get_mut(&parent).expect("stack entries are inserted");
        if parent_node.kind == NodeKind::Leaf {
            return Err(TreeError::Parse {
                line,
                message: format!("leaf {} cannot have children", parent),
            });
        }
        let path = parent.child(label).map_err(|e| TreeError::Parse {
            line,
            message: e.to_string(),
        })?;
        if nodes.contains_key(&path) {
            return Err(TreeError::DuplicatePath {
                line,
                path: path.to_string(),
            });
        }
        let kind = if is_leaf {
            NodeKind::Leaf
        } else if depth == 1 {
            NodeKind::Domain
        } else {
            NodeKind::Subdomain
        };
        nodes
            .get_mut(&parent)
            .expect("parent exists")
            .children
            .push(path.clone());
        nodes.insert(path.clone(), TreeNode::fresh(path.clone(), kind, 0));
        stack.push(path);
    }

    let root = root.ok_or(TreeError::Parse {
        line: 0,
        message: "document has no root entry".to_string(),
    })?;
    Ok(DomainTree::from_parts(root, nodes))
}

/// Renders the live part of the tree back into the document format.
pub fn render_taxonomy(tree: &DomainTree) -> String {
    let mut out = String::new();
    render_node(tree, tree.root(), 0, &mut out);
    out
}

fn render_node(tree: &DomainTree, path: &NodePath, depth: usize, out: &mut String) {
    let Some(node) = tree.get(path) else { return };
    if !node.status.is_live() {
        return;
    }
    for _ in 0..depth * INDENT {
        out.push(' ');
    }
    out.push_str(path.last());
    if node.is_leaf() {
        out.push(' ');
        out.push(LEAF_MARKER);
    }
    out.push('\n');
    for child in &node.children {
        render_node(tree, child, depth + 1, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Coverage;

    #[test]
    fn single_root_with_one_leaf() {
        let tree = load_tree("root\n  only leaf *\n").unwrap();
        assert_eq!(tree.len(), 2);
        let leaf = tree.get(&"root/only leaf".parse().unwrap()).unwrap();
        assert_eq!(leaf.kind, NodeKind::Leaf);
        assert_eq!(leaf.coverage_flag, Coverage::Uncovered);
        assert!(tree.violations().is_empty());
    }

    #[test]
    fn kinds_follow_depth() {
        let doc = "# comment\nr\n  d\n    s\n      l *\n  d2 *\n";
        let tree = load_tree(doc).unwrap();
        let kind = |p: &str| tree.get(&p.parse().unwrap()).unwrap().kind;
        assert_eq!(kind("r"), NodeKind::Root);
        assert_eq!(kind("r/d"), NodeKind::Domain);
        assert_eq!(kind("r/d/s"), NodeKind::Subdomain);
        assert_eq!(kind("r/d/s/l"), NodeKind::Leaf);
        assert_eq!(kind("r/d2"), NodeKind::Leaf);
    }

    #[test]
    fn child_before_parent_is_orphan() {
        let err = load_tree("r\n    deep *\n").unwrap_err();
        assert!(matches!(err, TreeError::OrphanParent { line: 2, .. }), "{err:?}");
        let err = load_tree("  floating\nr\n").unwrap_err();
        assert!(matches!(err, TreeError::OrphanParent { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        assert!(matches!(
            load_tree("r\n  a *\n  a *\n").unwrap_err(),
            TreeError::DuplicatePath { line: 3, .. }
        ));
        assert!(matches!(load_tree("r\n   odd\n").unwrap_err(), TreeError::Parse { line: 2, .. }));
        assert!(matches!(load_tree("r\n\tx\n").unwrap_err(), TreeError::Parse { line: 2, .. }));
        assert!(matches!(
            load_tree("r\n  leaf *\n    under *\n").unwrap_err(),
            TreeError::Parse { line: 3, .. }
        ));
        assert!(matches!(load_tree("r\nr2\n").unwrap_err(), TreeError::Parse { line: 2, .. }));
        assert!(matches!(load_tree("\n# only comments\n").unwrap_err(), TreeError::Parse { .. }));
    }

    #[test]
    fn render_round_trips() {
        let doc = "r\n  d\n    a *\n    b *\n  e *\n";
        let tree = load_tree(doc).unwrap();
        assert_eq!(render_taxonomy(&tree), doc);
    }
}
