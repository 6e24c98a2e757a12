//! Node classification, contrarian trajectories and local arbitrage.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Hypothesis, Result};
use crate::market::{DebtLimitConfig, Market, Portfolio};
use crate::scalar::Scalar;
use crate::tree::{NodeId, TrajectoryTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    /// Some child strictly up and some strictly down.
    UpDown,
    /// Every child at the same price.
    Flat,
    /// 0-neutral, but only one strict direction is possible.
    ArbitrageNode,
    /// All moves strictly up, or all strictly down.
    NotZeroNeutral,
}

impl NodeClass {
    pub fn from_deltas<T: Scalar>(deltas: &[T]) -> Self {
        let zero = T::zero();
        let min = deltas.iter().copied().fold(T::infinity(), T::min);
        let max = deltas.iter().copied().fold(T::neg_infinity(), T::max);
        if min > zero || max < zero {
            NodeClass::NotZeroNeutral
        } else if max > zero && min < zero {
            NodeClass::UpDown
        } else if max == zero && min == zero {
            NodeClass::Flat
        } else {
            NodeClass::ArbitrageNode
        }
    }

    pub fn is_zero_neutral(self) -> bool {
        self != NodeClass::NotZeroNeutral
    }

    pub fn is_arbitrage_free(self) -> bool {
        matches!(self, NodeClass::UpDown | NodeClass::Flat)
    }

    /// Arbitrage and flat nodes, the ones counted by the `m_hat` statistic.
    pub fn is_special(self) -> bool {
        matches!(self, NodeClass::ArbitrageNode | NodeClass::Flat)
    }
}

pub fn classify_node<T: Scalar>(tree: &TrajectoryTree<T>, node: NodeId) -> Result<NodeClass> {
    Ok(NodeClass::from_deltas(&tree.children_deltas(node)?))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub up_down: usize,
    pub flat: usize,
    pub arbitrage_node: usize,
    pub not_zero_neutral: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.up_down + self.flat + self.arbitrage_node + self.not_zero_neutral
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeClassification {
    pub counts: ClassCounts,
    /// Class per node; `None` for terminal nodes.
    pub classes: Vec<Option<NodeClass>>,
    /// Number of arbitrage plus flat nodes on each trajectory, keyed by leaf.
    pub special_per_path: BTreeMap<NodeId, usize>,
    /// Maximum of `special_per_path`.
    pub m_hat: usize,
    pub locally_0_neutral: bool,
    pub locally_arbitrage_free: bool,
}

pub fn classify_tree<T: Scalar>(tree: &TrajectoryTree<T>) -> TreeClassification {
    let mut counts = ClassCounts::default();
    let classes: Vec<Option<NodeClass>> = (0..tree.len())
        .map(|id| {
            if tree.is_terminal(id) {
                return None;
            }
            let class = classify_node(tree, id).expect("non-terminal node");
            match class {
                NodeClass::UpDown => counts.up_down += 1,
                NodeClass::Flat => counts.flat += 1,
                NodeClass::ArbitrageNode => counts.arbitrage_node += 1,
                NodeClass::NotZeroNeutral => counts.not_zero_neutral += 1,
            }
            Some(class)
        })
        .collect();
    let special_per_path = special_counts(tree, &classes, None);
    TreeClassification {
        m_hat: special_per_path.values().copied().max().unwrap_or(0),
        special_per_path,
        locally_0_neutral: counts.not_zero_neutral == 0,
        locally_arbitrage_free: counts.not_zero_neutral == 0 && counts.arbitrage_node == 0,
        counts,
        classes,
    }
}

fn special_counts<T: Scalar>(
    tree: &TrajectoryTree<T>,
    classes: &[Option<NodeClass>],
    active: Option<&[bool]>,
) -> BTreeMap<NodeId, usize> {
    // count[n] = special nodes strictly above n plus n itself
    let mut count = vec![0usize; tree.len()];
    for node in tree.nodes() {
        let above = node.parent.map_or(0, |p| count[p]);
        let here = classes[node.id].is_some_and(NodeClass::is_special) && active.is_none_or(|a| a[node.id]);
        count[node.id] = above + usize::from(here);
    }
    tree.leaves().map(|leaf| (leaf, count[leaf])).collect()
}

/// A trajectory along which the remaining gains of a portfolio stay small.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContrarianResult<T> {
    /// Node ids from the root to a leaf.
    pub path: Vec<NodeId>,
    pub epsilon: T,
    /// `sum_{i=n}^{N_H-1} H_i (S_{i+1} - S_i)` on `path`.
    pub achieved_gain: T,
    /// Summands of `achieved_gain`, one per step from `start_depth`.
    pub step_gains: Vec<T>,
    pub start_depth: usize,
}

impl<T: Scalar> ContrarianResult<T> {
    fn on_path(tree: &TrajectoryTree<T>, p: &Portfolio<T>, path: Vec<NodeId>, start_depth: usize, epsilon: T) -> Self {
        let n = p.horizon_on(tree, &path);
        let step_gains: Vec<T> = (start_depth..n.max(start_depth))
            .map(|i| p.holding_at(tree, &path, i) * (tree.price(path[i + 1]) - tree.price(path[i])))
            .collect();
        let achieved_gain = step_gains.iter().fold(T::zero(), |a, &g| a + g);
        ContrarianResult {
            path,
            epsilon,
            achieved_gain,
            step_gains,
            start_depth,
        }
    }

    fn accepts(&self) -> bool {
        if self.epsilon > T::zero() {
            self.achieved_gain < self.epsilon
        } else {
            self.achieved_gain <= T::zero()
        }
    }
}

fn one_step_gain<T: Scalar>(
    tree: &TrajectoryTree<T>,
    p: &Portfolio<T>,
    active: &[bool],
    node: NodeId,
    child: NodeId,
) -> T {
    p.trading_holding(active, node) * (tree.price(child) - tree.price(node))
}

/// Lowest-index child minimising `key`.
fn argmin_child<T: Scalar>(children: &[NodeId], key: impl Fn(NodeId) -> T) -> NodeId {
    let mut best = children[0];
    let mut best_key = key(best);
    for &c in &children[1..] {
        let k = key(c);
        if k < best_key {
            best = c;
            best_key = k;
        }
    }
    best
}

/// Searches for a trajectory through `start` along which the gains of `p`
/// from `start` onwards are below `epsilon` (at most zero when `epsilon`
/// is zero).
///
/// Greedy descent picks, at every node, the child with the smallest
/// one-step gain. Below 0-neutral nodes every greedy step is nonpositive.
/// When greedy descent fails the exact minimum over all continuations is
/// tried before giving up.
pub fn find_contrarian<T: Scalar>(
    tree: &TrajectoryTree<T>,
    p: &Portfolio<T>,
    start: NodeId,
    epsilon: T,
) -> Result<Option<ContrarianResult<T>>> {
    tree.node(start)?;
    p.check(tree)?;
    if !(epsilon >= T::zero()) {
        return Err(Error::InvalidConfig(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let active = p.horizon.active_mask(tree);
    let prefix = tree.path_to(start);
    let start_depth = prefix.len() - 1;

    let mut path = prefix.clone();
    let mut node = start;
    while !tree.is_terminal(node) {
        node = argmin_child(tree.children(node), |c| one_step_gain(tree, p, &active, node, c));
        path.push(node);
    }
    let greedy = ContrarianResult::on_path(tree, p, path, start_depth, epsilon);
    if greedy.accepts() {
        return Ok(Some(greedy));
    }

    let exact = ContrarianResult::on_path(
        tree,
        p,
        min_gain_path(tree, p, &active, start, prefix),
        start_depth,
        epsilon,
    );
    Ok(exact.accepts().then_some(exact))
}

fn min_gain_path<T: Scalar>(
    tree: &TrajectoryTree<T>,
    p: &Portfolio<T>,
    active: &[bool],
    start: NodeId,
    mut path: Vec<NodeId>,
) -> Vec<NodeId> {
    let mut best = vec![T::zero(); tree.len()];
    for id in (start..tree.len()).rev() {
        if let Some(&c) = tree.children(id).iter().min_by(|&&a, &&b| {
            let ga = one_step_gain(tree, p, active, id, a) + best[a];
            let gb = one_step_gain(tree, p, active, id, b) + best[b];
            ga.partial_cmp(&gb).expect("finite gains")
        }) {
            best[id] = one_step_gain(tree, p, active, id, c) + best[c];
        }
    }
    let mut node = start;
    while !tree.is_terminal(node) {
        node = argmin_child(tree.children(node), |c| {
            one_step_gain(tree, p, active, node, c) + best[c]
        });
        path.push(node);
    }
    path
}

/// Active nodes where the holding never loses over the next step and
/// gains on some child.
pub fn detect_local_arbitrage<T: Scalar>(tree: &TrajectoryTree<T>, p: &Portfolio<T>) -> Result<Vec<NodeId>> {
    p.check(tree)?;
    let active = p.horizon.active_mask(tree);
    Ok((0..tree.len())
        .filter(|&id| active[id] && !tree.is_terminal(id))
        .filter(|&id| {
            let gains = tree
                .children(id)
                .iter()
                .map(|&c| one_step_gain(tree, p, &active, id, c));
            let (lo, hi) = gains.fold((T::infinity(), T::neg_infinity()), |(lo, hi), g| (lo.min(g), hi.max(g)));
            lo >= T::zero() && hi > T::zero()
        })
        .collect())
}

/// Builds a contrarian trajectory under the credit-limit hypotheses after
/// checking each of them.
///
/// At arbitrage and flat nodes the path takes a child with zero price
/// change. At up-down nodes it takes the child with the smallest one-step
/// gain, which is `<= -delta` whenever the holding is nonzero.
pub fn verify_debt_limited<T: Scalar>(
    market: &Market<T>,
    cfg: &DebtLimitConfig<T>,
    p: &Portfolio<T>,
    start: NodeId,
) -> Result<ContrarianResult<T>> {
    let tree = &market.tree;
    tree.node(start)?;
    p.check(tree)?;
    let violated = |hypothesis, node, detail: String| Error::HypothesisViolated {
        hypothesis,
        node,
        detail,
    };
    cfg.validate()
        .map_err(|e| violated(Hypothesis::Config, start, e.to_string()))?;

    let active = p.horizon.active_mask(tree);
    let classes: Vec<Option<NodeClass>> = (0..tree.len())
        .map(|id| (!tree.is_terminal(id)).then(|| classify_node(tree, id).expect("non-terminal")))
        .collect();

    if let Some((&leaf, &count)) = special_counts(tree, &classes, Some(&active))
        .iter()
        .find(|(_, &count)| count > cfg.m_hat)
    {
        return Err(violated(
            Hypothesis::SpecialNodeCount,
            leaf,
            format!(
                "{count} arbitrage or flat nodes on the trajectory ending here, limit {}",
                cfg.m_hat
            ),
        ));
    }

    for path in tree.paths() {
        let n = p.horizon_on(tree, &path);
        for i in 0..=n {
            let v = p.value_at(tree, &path, i)?;
            if v < -cfg.a {
                return Err(violated(
                    Hypothesis::CreditLimit,
                    path[i],
                    format!("value {v} < -{} after prefix {:?}", cfg.a, &path[..=i]),
                ));
            }
        }
    }

    let slack = T::tie_eps() * (T::one() + cfg.delta);
    for id in (0..tree.len()).filter(|&id| active[id]) {
        for &c in tree.children(id) {
            let g = one_step_gain(tree, p, &active, id, c).abs();
            if g != T::zero() && g < cfg.delta - slack {
                return Err(violated(
                    Hypothesis::GainDiscreteness,
                    id,
                    format!("one-step gain {g} towards node {c} is below delta = {}", cfg.delta),
                ));
            }
        }
    }

    let below: Vec<NodeId> = tree.paths_from(start).into_iter().flatten().collect();
    if let Some(&bad) = below
        .iter()
        .find(|&&id| active[id] && classes[id] == Some(NodeClass::NotZeroNeutral))
    {
        return Err(violated(
            Hypothesis::NotZeroNeutral,
            bad,
            "node below start is not 0-neutral".into(),
        ));
    }

    let mut path = tree.path_to(start);
    let start_depth = path.len() - 1;
    let mut node = start;
    while !tree.is_terminal(node) {
        let children = tree.children(node);
        node = match classes[node] {
            Some(NodeClass::ArbitrageNode | NodeClass::Flat) if active[node] => *children
                .iter()
                .find(|&&c| tree.price(c) == tree.price(node))
                .expect("0-neutral non-up-down node has a flat child"),
            _ => argmin_child(children, |c| one_step_gain(tree, p, &active, node, c)),
        };
        path.push(node);
    }
    Ok(ContrarianResult::on_path(tree, p, path, start_depth, T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::WValue;

    fn seq(prices: &[f64]) -> Vec<(f64, WValue)> {
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, WValue::Tick(i as i64)))
            .collect()
    }

    fn one_step(children: &[f64]) -> TrajectoryTree<f64> {
        let s: Vec<_> = children.iter().map(|&c| seq(&[1.0, c])).collect();
        TrajectoryTree::build(&s).unwrap()
    }

    #[test]
    fn node_classes() {
        assert_eq!(NodeClass::from_deltas(&[-0.1, 0.1]), NodeClass::UpDown);
        assert_eq!(NodeClass::from_deltas(&[0.0]), NodeClass::Flat);
        assert_eq!(NodeClass::from_deltas(&[0.0, 0.1]), NodeClass::ArbitrageNode);
        assert_eq!(NodeClass::from_deltas(&[-0.1, 0.0]), NodeClass::ArbitrageNode);
        assert_eq!(NodeClass::from_deltas(&[0.05, 0.1]), NodeClass::NotZeroNeutral);
        let t = one_step(&[1.1]);
        assert!(matches!(classify_node(&t, 1), Err(Error::TerminalNode(1))));
    }

    #[test]
    fn tree_classification() {
        let t = TrajectoryTree::build(&[
            seq(&[1.0, 1.1, 1.2]),
            seq(&[1.0, 1.1, 1.0]),
            seq(&[1.0, 0.9, 1.0]),
            seq(&[1.0, 0.9, 0.8]),
        ])
        .unwrap();
        let c = classify_tree(&t);
        assert_eq!(c.counts.up_down, 3);
        assert!(c.locally_arbitrage_free && c.locally_0_neutral);
        assert_eq!(c.m_hat, 0);

        let t = one_step(&[1.0, 1.1]);
        let c = classify_tree(&t);
        assert!(c.locally_0_neutral && !c.locally_arbitrage_free);
        assert_eq!(c.m_hat, 1);
        assert_eq!(c.counts.total(), 1);
    }

    #[test]
    fn contrarian_zero_portfolio() {
        let t = one_step(&[0.9, 1.1]);
        let r = find_contrarian(&t, &Portfolio::zero(&t), 0, 1e-3).unwrap().unwrap();
        assert_eq!(r.achieved_gain, 0.0);
    }

    #[test]
    fn contrarian_through_flat_child() {
        let t = one_step(&[1.0, 1.1]);
        let p = Portfolio::constant(&t, 0.0, 1.0);
        let r = find_contrarian(&t, &p, 0, 0.0).unwrap().unwrap();
        assert_eq!(r.path, vec![0, 1]);
        assert_eq!(r.achieved_gain, 0.0);
    }

    #[test]
    fn contrarian_not_found_on_up_only_node() {
        let t = one_step(&[1.05, 1.1]);
        let p = Portfolio::constant(&t, 0.0, 1.0);
        assert!(find_contrarian(&t, &p, 0, 0.01).unwrap().is_none());
        assert!(find_contrarian(&t, &p, 0, 0.06).unwrap().is_some());
        assert!(matches!(find_contrarian(&t, &p, 7, 0.1), Err(Error::UnknownNode(7))));
    }

    #[test]
    fn contrarian_exact_fallback() {
        // Greedy takes the cheapest first step (+0.01) into a subtree where
        // every continuation gains 0.5; the other branch loses overall.
        let t = TrajectoryTree::build(&[seq(&[1.0, 1.01, 1.51]), seq(&[1.0, 1.02, 0.5])]).unwrap();
        let p = Portfolio::constant(&t, 0.0, 1.0);
        let r = find_contrarian(&t, &p, 0, 0.1).unwrap().unwrap();
        assert!(r.achieved_gain < 0.0);
        assert_eq!(t.price(r.path[1]), 1.02);
    }

    #[test]
    fn local_arbitrage() {
        let t = one_step(&[1.0, 1.1]);
        assert!(detect_local_arbitrage(&t, &Portfolio::zero(&t)).unwrap().is_empty());
        let p = Portfolio::constant(&t, 0.0, 1.0);
        assert_eq!(detect_local_arbitrage(&t, &p).unwrap(), vec![0]);
        let t = one_step(&[0.9, 1.0]);
        let p = Portfolio::constant(&t, 0.0, -1.0);
        assert_eq!(detect_local_arbitrage(&t, &p).unwrap(), vec![0]);
    }

    #[test]
    fn debt_limited_checks() {
        let t = TrajectoryTree::build(&[
            seq(&[1.0, 1.0, 1.1]),
            seq(&[1.0, 1.0, 0.9]),
            seq(&[1.0, 1.1, 1.2]),
            seq(&[1.0, 1.1, 1.0]),
        ])
        .unwrap();
        let m = Market::new(t.clone());
        let cfg = DebtLimitConfig {
            a: 10.0,
            delta: 0.05,
            m_hat: 1,
        };
        let p = Portfolio::constant(&t, 0.0, 1.0);
        let r = verify_debt_limited(&m, &cfg, &p, 0).unwrap();
        assert!(r.step_gains.iter().all(|&g| g <= 0.0));
        assert_eq!(t.price(r.path[1]), 1.0);

        let strict = DebtLimitConfig { m_hat: 0, ..cfg };
        assert!(matches!(
            verify_debt_limited(&m, &strict, &p, 0),
            Err(Error::HypothesisViolated {
                hypothesis: Hypothesis::SpecialNodeCount,
                ..
            })
        ));
        let tight = DebtLimitConfig { a: 0.05, ..cfg };
        assert!(matches!(
            verify_debt_limited(&m, &tight, &p, 0),
            Err(Error::HypothesisViolated {
                hypothesis: Hypothesis::CreditLimit,
                ..
            })
        ));
        let coarse = DebtLimitConfig { delta: 0.2, ..cfg };
        assert!(matches!(
            verify_debt_limited(&m, &coarse, &p, 0),
            Err(Error::HypothesisViolated {
                hypothesis: Hypothesis::GainDiscreteness,
                ..
            })
        ));
    }
}
