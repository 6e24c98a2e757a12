//! JSON interchange format for trajectory trees.
//!
//! ```json
//! {"s0": 1.0, "w0": 0,
//!  "nodes": [{"id": 0, "parent": null, "price": 1.0, "w": 0, "terminal": false},
//!            {"id": 1, "parent": 0, "price": 1.1, "w": 1, "terminal": true}]}
//! ```
//!
//! Ids are dense from 0 and every parent precedes its children. Trees
//! carrying martingale metadata add `"q_prob"` to non-root nodes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{NodeId, TrajectoryTree, TreeNode, WValue};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc<T> {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub price: T,
    pub w: WValue,
    pub terminal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_prob: Option<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc<T> {
    pub s0: T,
    pub w0: WValue,
    pub nodes: Vec<NodeDoc<T>>,
}

impl<T: Scalar> TreeDoc<T> {
    pub fn from_tree(tree: &TrajectoryTree<T>) -> Self {
        TreeDoc {
            s0: tree.s0(),
            w0: tree.root().w.clone(),
            nodes: tree
                .nodes()
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    parent: n.parent,
                    price: n.price,
                    w: n.w.clone(),
                    terminal: n.is_terminal(),
                    q_prob: n.q_prob,
                })
                .collect(),
        }
    }

    /// Validates the document and converts it into a tree.
    pub fn into_tree(self) -> Result<TrajectoryTree<T>> {
        let bad = |msg: String| Err(Error::MalformedTree(msg));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        let mut nodes: Vec<TreeNode<T>> = Vec::with_capacity(self.nodes.len());
        let mut sibling_keys: HashSet<(NodeId, u64, WValue)> = HashSet::new();
        for (pos, doc) in self.nodes.iter().enumerate() {
            if doc.id != pos {
                return bad(format!("node at position {pos} has id {}", doc.id));
            }
            if !doc.price.is_finite() {
                return bad(format!("node {pos} has a non-finite price"));
            }
            let depth = match doc.parent {
                None if pos == 0 => 0,
                None => return bad(format!("node {pos} has no parent but is not the root")),
                Some(p) if p >= pos => return bad(format!("parent {p} of node {pos} does not precede it")),
                Some(p) => {
                    if !sibling_keys.insert((p, doc.price.key_bits(), doc.w.clone())) {
                        return bad(format!("node {pos} duplicates a sibling's (price, w)"));
                    }
                    nodes[p].children.push(pos);
                    nodes[p].depth + 1
                }
            };
            nodes.push(TreeNode {
                id: pos,
                parent: doc.parent,
                depth,
                price: doc.price,
                w: doc.w.clone(),
                children: Vec::new(),
                q_prob: doc.q_prob,
            });
        }
        if nodes[0].price.key_bits() != self.s0.key_bits() || nodes[0].w != self.w0 {
            return bad("root does not match s0/w0".into());
        }
        for (doc, node) in self.nodes.iter().zip(&nodes) {
            if doc.terminal != node.is_terminal() {
                return bad(format!(
                    "node {} terminal flag is {} but it has {} children",
                    node.id,
                    doc.terminal,
                    node.children.len()
                ));
            }
        }
        Ok(TrajectoryTree::from_nodes_unchecked(nodes))
    }
}

pub fn tree_to_json<T: Scalar>(tree: &TrajectoryTree<T>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TreeDoc::from_tree(tree))?)
}

pub fn tree_from_json<T: Scalar>(json: &str) -> Result<TrajectoryTree<T>> {
    let doc: TreeDoc<T> = serde_json::from_str(json)?;
    doc.into_tree()
}
