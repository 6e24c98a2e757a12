//! Finite trajectory sets stored as prefix trees.
//!
//! Every root-to-leaf path is one trajectory `{(S_i, W_i)}`. Shared
//! prefixes share nodes, so a node identifies the conditioning set of all
//! trajectories that agree up to its depth. Holdings, stopping times and
//! payoffs are keyed by node, which makes them non-anticipative by
//! construction.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

/// Value of the auxiliary coordinate `W`.
///
/// Grid models use integer tick counts; sampled histories use an opaque
/// tag. Equality is exact in both cases.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WValue {
    Tick(i64),
    Tag(String),
}

impl Default for WValue {
    fn default() -> Self {
        WValue::Tick(0)
    }
}

impl fmt::Display for WValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WValue::Tick(j) => write!(f, "{j}"),
            WValue::Tag(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TreeNode<T> {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub depth: usize,
    pub price: T,
    pub w: WValue,
    pub children: Vec<NodeId>,
    /// Conditional probability of this node given its parent. Only
    /// martingale-sampled trees carry it; pricing never reads it.
    pub q_prob: Option<T>,
}

impl<T> TreeNode<T> {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// Immutable prefix tree of trajectories. Node 0 is the root and every
/// parent id is smaller than its children's ids.
#[derive(Clone, Debug)]
pub struct TrajectoryTree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> TrajectoryTree<T> {
    /// Canonical prefix tree of a set of `(price, w)` sequences.
    ///
    /// Duplicate sequences are merged. A sequence that is a strict prefix
    /// of another is rejected.
    pub fn build<S: AsRef<[(T, WValue)]>>(trajectories: &[S]) -> Result<Self> {
        let mut builder = TreeBuilder::new();
        for seq in trajectories {
            builder.insert(seq.as_ref())?;
        }
        builder.finish()
    }

    /// Tree with a single (terminal) root node.
    pub fn singleton(s0: T, w0: WValue) -> Self {
        TrajectoryTree {
            nodes: vec![TreeNode {
                id: 0,
                parent: None,
                depth: 0,
                price: s0,
                w: w0,
                children: Vec::new(),
                q_prob: None,
            }],
        }
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    pub fn s0(&self) -> T {
        self.nodes[0].price
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode<T>> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.nodes[id].children.is_empty()
    }

    pub fn price(&self, id: NodeId) -> T {
        self.nodes[id].price
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.nodes[id].depth
    }

    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_terminal()).map(|n| n.id)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    /// Node ids from the root down to `id`, inclusive.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = Vec::with_capacity(self.nodes[id].depth + 1);
        let mut cur = Some(id);
        while let Some(c) = cur {
            path.push(c);
            cur = self.nodes[c].parent;
        }
        path.reverse();
        path
    }

    /// All root-to-leaf paths, in depth-first child order.
    pub fn paths(&self) -> Vec<Vec<NodeId>> {
        self.paths_from(0)
    }

    /// All paths from `start` to a leaf below it (each begins with `start`).
    pub fn paths_from(&self, start: NodeId) -> Vec<Vec<NodeId>> {
        let mut out = Vec::new();
        let mut stack = vec![start];
        let mut cur: Vec<NodeId> = Vec::new();
        // Iterative DFS keeping the current path in `cur`.
        let base_depth = self.nodes[start].depth;
        while let Some(id) = stack.pop() {
            let rel = self.nodes[id].depth - base_depth;
            cur.truncate(rel);
            cur.push(id);
            let node = &self.nodes[id];
            if node.is_terminal() {
                out.push(cur.clone());
            } else {
                for &c in node.children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// Leaves in the subtree rooted at `id`.
    pub fn leaves_under(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.is_terminal() {
                out.push(n);
            } else {
                stack.extend(node.children.iter().rev());
            }
        }
        out
    }

    /// `(price, w)` sequence along a path of node ids.
    pub fn sequence(&self, path: &[NodeId]) -> Vec<(T, WValue)> {
        path.iter()
            .map(|&id| (self.nodes[id].price, self.nodes[id].w.clone()))
            .collect()
    }

    pub fn prices(&self, path: &[NodeId]) -> Vec<T> {
        path.iter().map(|&id| self.nodes[id].price).collect()
    }

    /// All trajectories as `(price, w)` sequences.
    pub fn sequences(&self) -> Vec<Vec<(T, WValue)>> {
        self.paths().iter().map(|p| self.sequence(p)).collect()
    }

    /// One-step price changes `child.price - node.price`, in child order.
    pub fn children_deltas(&self, id: NodeId) -> Result<Vec<T>> {
        let node = self.node(id)?;
        if node.is_terminal() {
            return Err(Error::TerminalNode(id));
        }
        Ok(node
            .children
            .iter()
            .map(|&c| self.nodes[c].price - node.price)
            .collect())
    }

    /// Conditional set of all trajectories through `id`.
    pub fn conditional_set(&self, id: NodeId) -> Result<SubtreeView<'_, T>> {
        self.node(id)?;
        Ok(SubtreeView { tree: self, root: id })
    }

    /// Whether some path below `id` stays at `id`'s price forever.
    pub fn has_constant_continuation(&self, id: NodeId) -> bool {
        let target = self.nodes[id].price;
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            let node = &self.nodes[cur];
            if node.is_terminal() {
                return true;
            }
            stack.extend(node.children.iter().filter(|&&c| self.nodes[c].price == target));
        }
        false
    }

    pub(crate) fn from_nodes_unchecked(nodes: Vec<TreeNode<T>>) -> Self {
        TrajectoryTree { nodes }
    }

    pub(crate) fn set_q_prob(&mut self, id: NodeId, q: Option<T>) {
        self.nodes[id].q_prob = q;
    }
}

/// Read-only view of the conditional set `S_(S,k)` rooted at one node.
#[derive(Clone, Copy, Debug)]
pub struct SubtreeView<'a, T> {
    tree: &'a TrajectoryTree<T>,
    root: NodeId,
}

impl<'a, T: Scalar> SubtreeView<'a, T> {
    pub fn tree(&self) -> &'a TrajectoryTree<T> {
        self.tree
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Depth `k` of the anchor node in the full tree.
    pub fn anchor_depth(&self) -> usize {
        self.tree.depth(self.root)
    }

    /// Suffixes (starting at the anchor) of every path through the anchor.
    pub fn paths(&self) -> Vec<Vec<NodeId>> {
        self.tree.paths_from(self.root)
    }

    pub fn leaf_count(&self) -> usize {
        self.tree.leaves_under(self.root).len()
    }

    /// Full trajectories through the anchor, from the original root.
    pub fn full_paths(&self) -> Vec<Vec<NodeId>> {
        let prefix = self.tree.path_to(self.root);
        self.paths()
            .into_iter()
            .map(|suffix| {
                let mut p = prefix.clone();
                p.extend_from_slice(&suffix[1..]);
                p
            })
            .collect()
    }

    /// Re-rooted copy with depths re-indexed from zero.
    pub fn to_tree(&self) -> TrajectoryTree<T> {
        let seqs: Vec<_> = self.paths().iter().map(|p| self.tree.sequence(p)).collect();
        TrajectoryTree::build(&seqs).expect("subtree of a valid tree is valid")
    }
}

/// Incremental prefix-tree construction.
#[derive(Debug)]
pub struct TreeBuilder<T> {
    nodes: Vec<TreeNode<T>>,
    ended: Vec<bool>,
    index: HashMap<(NodeId, u64, WValue), NodeId>,
    inserted: usize,
}

impl<T: Scalar> Default for TreeBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> TreeBuilder<T> {
    pub fn new() -> Self {
        TreeBuilder {
            nodes: Vec::new(),
            ended: Vec::new(),
            index: HashMap::new(),
            inserted: 0,
        }
    }

    /// Adds one trajectory and returns its terminal node.
    pub fn insert(&mut self, seq: &[(T, WValue)]) -> Result<NodeId> {
        let index = self.inserted;
        self.inserted += 1;
        let (s0, w0) = seq.first().ok_or(Error::EmptyInput)?;
        if self.nodes.is_empty() {
            self.nodes.push(TreeNode {
                id: 0,
                parent: None,
                depth: 0,
                price: *s0,
                w: w0.clone(),
                children: Vec::new(),
                q_prob: None,
            });
            self.ended.push(false);
        } else {
            let root = &self.nodes[0];
            if root.price.key_bits() != s0.key_bits() || root.w != *w0 {
                return Err(Error::InconsistentRoot { index });
            }
        }
        let mut cur = 0;
        for (price, w) in &seq[1..] {
            if self.ended[cur] {
                return Err(Error::PrefixConflict { index });
            }
            let key = (cur, price.key_bits(), w.clone());
            cur = match self.index.get(&key) {
                Some(&id) => id,
                None => {
                    let id = self.nodes.len();
                    let depth = self.nodes[cur].depth + 1;
                    self.nodes.push(TreeNode {
                        id,
                        parent: Some(cur),
                        depth,
                        price: *price,
                        w: w.clone(),
                        children: Vec::new(),
                        q_prob: None,
                    });
                    self.ended.push(false);
                    self.nodes[cur].children.push(id);
                    self.index.insert(key, id);
                    id
                }
            };
        }
        if !self.nodes[cur].children.is_empty() {
            return Err(Error::PrefixConflict { index });
        }
        self.ended[cur] = true;
        Ok(cur)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn finish(self) -> Result<TrajectoryTree<T>> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(TrajectoryTree { nodes: self.nodes })
    }
}

/// Trajectory-based stopping time.
///
/// The stopping rule reads only the node (hence only the path prefix), so
/// two paths that agree up to `nu` always get the same `nu`. A path on
/// which the rule never fires stops at its terminal depth.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StoppingTime {
    /// Stop at the end of each trajectory.
    #[default]
    Terminal,
    /// Stop at a fixed depth (or earlier, at the terminal node).
    Fixed { depth: usize },
    /// Stop at the first node on the path that belongs to the set.
    Nodes { nodes: BTreeSet<NodeId> },
}

impl StoppingTime {
    pub fn fixed(depth: usize) -> Self {
        StoppingTime::Fixed { depth }
    }

    pub fn at_nodes<I: IntoIterator<Item = NodeId>>(nodes: I) -> Self {
        StoppingTime::Nodes {
            nodes: nodes.into_iter().collect(),
        }
    }

    /// First time the predicate holds along each path.
    pub fn first_hit<T: Scalar, F: Fn(&TreeNode<T>) -> bool>(tree: &TrajectoryTree<T>, pred: F) -> Self {
        StoppingTime::at_nodes(tree.nodes().iter().filter(|n| pred(n)).map(|n| n.id))
    }

    pub fn validate<T: Scalar>(&self, tree: &TrajectoryTree<T>) -> Result<()> {
        if let StoppingTime::Nodes { nodes } = self {
            if let Some(&bad) = nodes.iter().find(|&&id| id >= tree.len()) {
                return Err(Error::UnknownNode(bad));
            }
        }
        Ok(())
    }

    fn fires_at<T: Scalar>(&self, tree: &TrajectoryTree<T>, id: NodeId) -> bool {
        match self {
            StoppingTime::Terminal => false,
            StoppingTime::Fixed { depth } => tree.depth(id) >= *depth,
            StoppingTime::Nodes { nodes } => nodes.contains(&id),
        }
    }

    /// `mask[n]` is true when every path through `n` has `nu <= depth(n)`.
    /// Terminal nodes are always stopped.
    pub fn stopped_mask<T: Scalar>(&self, tree: &TrajectoryTree<T>) -> Vec<bool> {
        let mut mask = vec![false; tree.len()];
        for node in tree.nodes() {
            let inherited = node.parent.map(|p| mask[p]).unwrap_or(false);
            mask[node.id] = inherited || node.is_terminal() || self.fires_at(tree, node.id);
        }
        mask
    }

    /// `nu` along a root-to-leaf path, as an index into the path.
    pub fn nu<T: Scalar>(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> usize {
        path.iter()
            .position(|&id| tree.is_terminal(id) || self.fires_at(tree, id))
            .unwrap_or(path.len().saturating_sub(1))
    }

    /// Stopping time `max(self, other)`.
    pub fn max_with<T: Scalar>(&self, other: &StoppingTime, tree: &TrajectoryTree<T>) -> Self {
        let a = self.stopped_mask(tree);
        let b = other.stopped_mask(tree);
        Self::from_mask(tree, |id| a[id] && b[id])
    }

    /// Stopping time `min(self, other)`.
    pub fn min_with<T: Scalar>(&self, other: &StoppingTime, tree: &TrajectoryTree<T>) -> Self {
        let a = self.stopped_mask(tree);
        let b = other.stopped_mask(tree);
        Self::from_mask(tree, |id| a[id] || b[id])
    }

    fn from_mask<T: Scalar, F: Fn(NodeId) -> bool>(tree: &TrajectoryTree<T>, stopped: F) -> Self {
        let firsts = tree
            .nodes()
            .iter()
            .filter(|n| stopped(n.id) && !n.is_terminal() && n.parent.map(|p| !stopped(p)).unwrap_or(true));
        StoppingTime::at_nodes(firsts.map(|n| n.id))
    }
}

/// Stopped trajectory set `S^nu` with the origin of every new node.
#[derive(Clone, Debug)]
pub struct StoppedTree<T> {
    pub tree: TrajectoryTree<T>,
    /// `origin[new_id]` is the node of the input tree it came from.
    pub origin: Vec<NodeId>,
}

/// Stopped trajectory set: every path is cut at its first stopped node.
///
/// Truncation is the finite representation of the eventually constant
/// path `S_{nu ^ i}`; trailing deltas are all zero.
pub fn stopped_tree<T: Scalar>(tree: &TrajectoryTree<T>, nu: &StoppingTime) -> Result<StoppedTree<T>> {
    nu.validate(tree)?;
    let mask = nu.stopped_mask(tree);
    let mut new_id = vec![usize::MAX; tree.len()];
    let mut nodes: Vec<TreeNode<T>> = Vec::new();
    let mut origin = Vec::new();
    for node in tree.nodes() {
        let keep = match node.parent {
            None => true,
            Some(p) => new_id[p] != usize::MAX && !mask[p],
        };
        if !keep {
            continue;
        }
        let id = nodes.len();
        new_id[node.id] = id;
        origin.push(node.id);
        let parent = node.parent.map(|p| new_id[p]);
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        nodes.push(TreeNode {
            id,
            parent,
            depth: node.depth,
            price: node.price,
            w: node.w.clone(),
            children: Vec::new(),
            q_prob: node.q_prob,
        });
    }
    Ok(StoppedTree {
        tree: TrajectoryTree::from_nodes_unchecked(nodes),
        origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(points: &[f64]) -> Vec<(f64, WValue)> {
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, WValue::Tick(i as i64)))
            .collect()
    }

    fn binomial2() -> TrajectoryTree<f64> {
        TrajectoryTree::build(&[
            seq(&[1.0, 1.1, 1.21]),
            seq(&[1.0, 1.1, 0.99]),
            seq(&[1.0, 0.9, 0.99]),
            seq(&[1.0, 0.9, 0.81]),
        ])
        .unwrap()
    }

    #[test]
    fn singleton_sequence_gives_terminal_root() {
        let t = TrajectoryTree::build(&[vec![(1.0, WValue::Tick(0))]]).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.is_terminal(0));
    }

    #[test]
    fn two_leaf_tree() {
        let t = TrajectoryTree::build(&[
            vec![(1.0, WValue::Tick(0)), (1.1, WValue::Tick(1))],
            vec![(1.0, WValue::Tick(0)), (0.9, WValue::Tick(1))],
        ])
        .unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.children(0).len(), 2);
        assert!(t.children(0).iter().all(|&c| t.is_terminal(c)));
    }

    #[test]
    fn build_errors() {
        let empty: Vec<Vec<(f64, WValue)>> = vec![];
        assert!(matches!(TrajectoryTree::build(&empty), Err(Error::EmptyInput)));
        assert!(matches!(
            TrajectoryTree::build(&[seq(&[1.0, 2.0]), seq(&[1.5, 2.0])]),
            Err(Error::InconsistentRoot { index: 1 })
        ));
        assert!(matches!(
            TrajectoryTree::build(&[seq(&[1.0, 2.0]), seq(&[1.0, 2.0, 3.0])]),
            Err(Error::PrefixConflict { index: 1 })
        ));
        assert!(matches!(
            TrajectoryTree::build(&[seq(&[1.0, 2.0, 3.0]), seq(&[1.0, 2.0])]),
            Err(Error::PrefixConflict { index: 1 })
        ));
    }

    #[test]
    fn duplicates_merge_and_w_distinguishes_siblings() {
        let t = TrajectoryTree::build(&[seq(&[1.0, 2.0]), seq(&[1.0, 2.0])]).unwrap();
        assert_eq!(t.len(), 2);
        let t = TrajectoryTree::build(&[
            vec![(1.0, WValue::Tick(0)), (2.0, WValue::Tick(1))],
            vec![(1.0, WValue::Tick(0)), (2.0, WValue::Tick(2))],
        ])
        .unwrap();
        assert_eq!(t.children(0).len(), 2);
    }

    #[test]
    fn conditional_sets() {
        let t = binomial2();
        let whole = t.conditional_set(0).unwrap();
        assert_eq!(whole.paths(), t.paths());
        let up = t.children(0)[0];
        let view = t.conditional_set(up).unwrap();
        // oracle: filter full path list by prefix
        let expected: Vec<_> = t.paths().into_iter().filter(|p| p[1] == up).collect();
        assert_eq!(view.full_paths(), expected);
        assert_eq!(view.to_tree().leaf_count(), 2);
        assert_eq!(view.to_tree().max_depth(), 1);
        let leaf = t.leaves().next().unwrap();
        assert_eq!(t.conditional_set(leaf).unwrap().to_tree().len(), 1);
        assert!(matches!(t.conditional_set(99), Err(Error::UnknownNode(99))));
    }

    #[test]
    fn deltas() {
        let t = TrajectoryTree::build(&[seq(&[1.0, 0.9]), seq(&[1.0, 1.0]), seq(&[1.0, 1.1])]).unwrap();
        let d = t.children_deltas(0).unwrap();
        assert_eq!(d.len(), 3);
        assert!((d[0] + 0.1).abs() < 1e-15 && d[1] == 0.0 && (d[2] - 0.1).abs() < 1e-15);
        assert!(matches!(t.children_deltas(1), Err(Error::TerminalNode(1))));
        let flat = TrajectoryTree::build(&[seq(&[1.0, 1.0])]).unwrap();
        assert_eq!(flat.children_deltas(0).unwrap(), vec![0.0]);
    }

    #[test]
    fn stopping_identity_and_root() {
        let t = binomial2();
        let s = stopped_tree(&t, &StoppingTime::fixed(0)).unwrap();
        assert_eq!(s.tree.len(), 1);
        assert_eq!(s.tree.s0(), 1.0);
        let s = stopped_tree(&t, &StoppingTime::Terminal).unwrap();
        assert_eq!(s.tree.sequences(), t.sequences());
        let s = stopped_tree(&t, &StoppingTime::fixed(7)).unwrap();
        assert_eq!(s.tree.sequences(), t.sequences());
    }

    #[test]
    fn stopping_at_first_price_level() {
        let t = binomial2();
        let nu = StoppingTime::first_hit(&t, |n| n.price >= 1.1);
        let s = stopped_tree(&t, &nu).unwrap();
        // oracle: truncate each path at nu, then rebuild
        let truncated: Vec<_> = t.paths().iter().map(|p| t.sequence(&p[..=nu.nu(&t, p)])).collect();
        let rebuilt = TrajectoryTree::build(&truncated).unwrap();
        assert_eq!(s.tree.sequences(), rebuilt.sequences());
        assert_eq!(s.tree.leaf_count(), 3);
    }

    #[test]
    fn max_and_min_stopping_times() {
        let t = binomial2();
        let a = StoppingTime::fixed(1);
        let b = StoppingTime::first_hit(&t, |n| n.price < 1.0);
        let hi = a.max_with(&b, &t);
        let lo = a.min_with(&b, &t);
        for p in t.paths() {
            let (na, nb) = (a.nu(&t, &p), b.nu(&t, &p));
            assert_eq!(hi.nu(&t, &p), na.max(nb));
            assert_eq!(lo.nu(&t, &p), na.min(nb));
        }
    }

    #[test]
    fn constant_continuation() {
        let t = TrajectoryTree::build(&[seq(&[1.0, 1.0, 1.0]), seq(&[1.0, 1.1, 1.2])]).unwrap();
        assert!(t.has_constant_continuation(0));
        assert!(!t.has_constant_continuation(t.children(0)[1]));
    }
}
