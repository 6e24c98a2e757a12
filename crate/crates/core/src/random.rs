//! Seeded random instances: trees, portfolios, stopping times and payoffs.
//!
//! Prices of random trees move in integer multiples of a fixed tick, so
//! classifications and gains are exact in binary floating point.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::NodeClass;
use crate::market::Portfolio;
use crate::payoff::Payoff;
use crate::scalar::Scalar;
use crate::tree::{NodeId, StoppingTime, TrajectoryTree, TreeNode, WValue};

/// Which node classes a random tree may contain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    Any,
    /// No node is one-sided.
    ZeroNeutral,
    /// Only up-down and flat nodes.
    ArbitrageFree,
    /// Up-down and arbitrage nodes on a uniform-depth tree, where the
    /// zero-change child of every arbitrage node is an up-down node.
    FastTrends,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTreeConfig {
    pub max_depth: usize,
    pub max_out: usize,
    pub kind: TreeKind,
    pub s0: f64,
    pub tick: f64,
    /// Probability that a non-root node below `max_depth` is terminal.
    pub stop_prob: f64,
    /// Cap on arbitrage plus flat nodes along any trajectory.
    pub max_special_per_path: Option<usize>,
    /// Soft cap on the node count; nodes beyond it become terminal.
    pub max_nodes: usize,
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        RandomTreeConfig {
            max_depth: 4,
            max_out: 3,
            kind: TreeKind::ZeroNeutral,
            s0: 10.0,
            tick: 0.125,
            stop_prob: 0.15,
            max_special_per_path: None,
            max_nodes: 2000,
        }
    }
}

impl RandomTreeConfig {
    pub fn new(kind: TreeKind, max_depth: usize, max_out: usize) -> Self {
        RandomTreeConfig {
            kind,
            max_depth,
            max_out,
            ..Default::default()
        }
    }
}

fn pick_class<R: Rng>(kind: TreeKind, special_left: bool, can_arbitrage: bool, rng: &mut R) -> NodeClass {
    let x: f64 = rng.gen();
    let class = match kind {
        TreeKind::Any if x < 0.2 => NodeClass::NotZeroNeutral,
        TreeKind::Any | TreeKind::ZeroNeutral if x < 0.3 => NodeClass::ArbitrageNode,
        TreeKind::Any | TreeKind::ZeroNeutral if x < 0.4 => NodeClass::Flat,
        TreeKind::ArbitrageFree if x < 0.1 => NodeClass::Flat,
        TreeKind::FastTrends if x < 0.3 && can_arbitrage => NodeClass::ArbitrageNode,
        _ => NodeClass::UpDown,
    };
    if class.is_special() && !special_left {
        NodeClass::UpDown
    } else {
        class
    }
}

/// Tick moves of the children of a node of the given class.
fn child_moves<R: Rng>(class: NodeClass, max_out: usize, rng: &mut R) -> Vec<i64> {
    let max_out = max_out.max(2);
    match class {
        NodeClass::Flat => vec![0; rng.gen_range(1..=max_out.min(2))],
        NodeClass::UpDown => {
            let mut m = vec![rng.gen_range(1..=3), -rng.gen_range(1..=3)];
            for _ in 2..rng.gen_range(2..=max_out) {
                m.push(rng.gen_range(-3..=3));
            }
            m.shuffle(rng);
            m
        }
        NodeClass::ArbitrageNode => {
            let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
            let mut m = vec![0, sign * rng.gen_range(1..=3)];
            for _ in 2..rng.gen_range(2..=max_out) {
                m.push(sign * rng.gen_range(1..=3));
            }
            m.shuffle(rng);
            m
        }
        NodeClass::NotZeroNeutral => {
            let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
            (0..rng.gen_range(1..=max_out))
                .map(|_| sign * rng.gen_range(1..=3))
                .collect()
        }
    }
}

/// Random tree whose node classes follow `cfg.kind`.
///
/// Siblings are distinguished by `W`, which counts nodes in creation
/// order, so repeated price moves are allowed. Trees of kind
/// [`TreeKind::FastTrends`] have every leaf at `max_depth`.
pub fn random_tree<T: Scalar, R: Rng>(cfg: &RandomTreeConfig, rng: &mut R) -> TrajectoryTree<T> {
    let uniform = cfg.kind == TreeKind::FastTrends;
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        price: T::of(cfg.s0),
        w: WValue::Tick(0),
        children: Vec::new(),
        q_prob: None,
    }];
    // (node, price in ticks, special count so far, forced class)
    let mut queue = std::collections::VecDeque::from([(0usize, 0i64, 0usize, None::<NodeClass>)]);
    while let Some((id, k, specials, forced)) = queue.pop_front() {
        let depth = nodes[id].depth;
        let stop = depth >= cfg.max_depth
            || (depth > 0 && !uniform && forced.is_none() && rng.gen_bool(cfg.stop_prob))
            || (!uniform && nodes.len() >= cfg.max_nodes);
        if stop {
            continue;
        }
        let special_left = cfg.max_special_per_path.is_none_or(|m| specials < m);
        let can_arbitrage = depth + 2 <= cfg.max_depth;
        let class = forced.unwrap_or_else(|| pick_class(cfg.kind, special_left, can_arbitrage, rng));
        let moves = child_moves(class, cfg.max_out, rng);
        let specials = specials + usize::from(class.is_special());
        let mut zero_seen = false;
        for dk in moves {
            let child = nodes.len();
            let forced = (cfg.kind == TreeKind::FastTrends
                && class == NodeClass::ArbitrageNode
                && dk == 0
                && !std::mem::replace(&mut zero_seen, true))
            .then_some(NodeClass::UpDown);
            nodes.push(TreeNode {
                id: child,
                parent: Some(id),
                depth: depth + 1,
                price: T::of(cfg.s0 + (k + dk) as f64 * cfg.tick),
                w: WValue::Tick(child as i64),
                children: Vec::new(),
                q_prob: None,
            });
            nodes[id].children.push(child);
            queue.push_back((child, k + dk, specials, forced));
        }
    }
    TrajectoryTree::from_nodes_unchecked(nodes)
}

/// Holdings drawn uniformly from `{-m, ..., m} * tick`.
pub fn random_grid_portfolio<T: Scalar, R: Rng>(
    tree: &TrajectoryTree<T>,
    tick: T,
    m: i64,
    rng: &mut R,
) -> Portfolio<T> {
    let mut p = Portfolio::zero(tree);
    for h in p.holdings.iter_mut() {
        *h = T::of(rng.gen_range(-m..=m) as f64) * tick;
    }
    p
}

/// Holdings drawn uniformly from `[lo, hi]`.
pub fn random_portfolio<T: Scalar, R: Rng>(tree: &TrajectoryTree<T>, lo: f64, hi: f64, rng: &mut R) -> Portfolio<T> {
    let mut p = Portfolio::zero(tree);
    for h in p.holdings.iter_mut() {
        *h = T::of(rng.gen_range(lo..=hi));
    }
    p
}

/// Either a fixed depth or a random set of stopping nodes.
pub fn random_stopping_time<T: Scalar, R: Rng>(tree: &TrajectoryTree<T>, rng: &mut R) -> StoppingTime {
    match rng.gen_range(0..4) {
        0 => StoppingTime::Terminal,
        1 => StoppingTime::fixed(rng.gen_range(0..=tree.max_depth())),
        _ => {
            let p = rng.gen_range(0.1..0.5);
            StoppingTime::at_nodes((0..tree.len()).filter(|&n| !tree.is_terminal(n) && rng.gen_bool(p)))
        }
    }
}

/// A payoff drawn from the standard families plus a random leaf table.
pub fn random_payoff<T: Scalar, R: Rng>(tree: &TrajectoryTree<T>, rng: &mut R) -> Payoff<T> {
    let s0 = tree.s0().as_f64();
    let strike = T::of(s0 * rng.gen_range(0.9..1.1));
    match rng.gen_range(0..7) {
        0 => Payoff::call(strike),
        1 => Payoff::put(strike),
        2 => Payoff::asian(Vec::new()),
        3 => Payoff::lookback_max(T::one(), T::of(-s0), Vec::new()),
        4 => Payoff::stock_at(random_stopping_time(tree, rng)),
        5 => Payoff::constant(T::of(rng.gen_range(-5.0..5.0))),
        _ => random_table_payoff(tree, rng),
    }
}

/// Payoff with an independent uniform value in `[-1, 1]` on every leaf.
pub fn random_table_payoff<T: Scalar, R: Rng>(tree: &TrajectoryTree<T>, rng: &mut R) -> Payoff<T> {
    let table: HashMap<NodeId, T> = tree.leaves().map(|l| (l, T::of(rng.gen_range(-1.0..=1.0)))).collect();
    let table = Arc::new(table);
    Payoff::custom("table", move |_, path: &[NodeId]| {
        table
            .get(path.last().expect("non-empty path"))
            .copied()
            .unwrap_or_else(T::zero)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::classify_tree;
    use crate::io::{tree_from_json, tree_to_json};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kinds_are_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t: TrajectoryTree<f64> = random_tree(&RandomTreeConfig::new(TreeKind::ZeroNeutral, 5, 4), &mut rng);
            assert!(classify_tree(&t).locally_0_neutral);
            let t: TrajectoryTree<f64> = random_tree(&RandomTreeConfig::new(TreeKind::ArbitrageFree, 4, 3), &mut rng);
            assert!(classify_tree(&t).locally_arbitrage_free);
        }
    }

    #[test]
    fn fast_trend_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let t: TrajectoryTree<f64> = random_tree(&RandomTreeConfig::new(TreeKind::FastTrends, 4, 3), &mut rng);
            let c = classify_tree(&t);
            assert!(c.locally_0_neutral);
            assert!(t.leaves().all(|l| t.depth(l) == 4));
            for (id, class) in c.classes.iter().enumerate() {
                if *class == Some(NodeClass::ArbitrageNode) {
                    let flat = t.children(id).iter().find(|&&ch| t.price(ch) == t.price(id)).unwrap();
                    assert_eq!(c.classes[*flat], Some(NodeClass::UpDown));
                }
            }
        }
    }

    #[test]
    fn special_cap_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = RandomTreeConfig::new(TreeKind::ZeroNeutral, 5, 3);
        cfg.max_special_per_path = Some(2);
        for _ in 0..30 {
            let t: TrajectoryTree<f64> = random_tree(&cfg, &mut rng);
            assert!(classify_tree(&t).m_hat <= 2);
            let back: TrajectoryTree<f64> = tree_from_json(&tree_to_json(&t).unwrap()).unwrap();
            assert_eq!(back.sequences(), t.sequences());
        }
    }
}
