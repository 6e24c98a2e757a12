//! Search for arbitrage strategies on a finite market.
//!
//! Holdings at different decision nodes are constrained independently and
//! zero is always admissible, so a market admits an arbitrage exactly when
//! some active decision node admits a one-block arbitrage: a holding `h`
//! with `h (S_e - S_d) >= 0` for every block end `e` and `> 0` for one.
//! The search therefore scans decision nodes and tests the admissible
//! holdings at each. Every candidate is checked by evaluating the
//! resulting portfolio on all trajectories before it is returned.
//!
//! Without rebalancing times every active node is a decision node and
//! blocks are single steps. With times `tau_k` a block runs from a
//! rebalancing node to the next one (or to the horizon), and every block
//! must last at least two steps.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market::{fast_trend_transform, rebalancing_nodes, Market, Portfolio, PortfolioConstraint};
use crate::scalar::Scalar;
use crate::tree::{NodeId, StoppingTime};

#[derive(Clone, Debug, Default)]
pub struct ArbitrageSearch {
    /// Maximum number of block-end evaluations.
    pub budget: u64,
    /// Rebalancing times of a fast-trends market; `None` trades every step.
    pub tau: Option<Vec<StoppingTime>>,
}

impl ArbitrageSearch {
    pub fn new(budget: u64) -> Self {
        ArbitrageSearch { budget, tau: None }
    }

    pub fn paired(budget: u64, tau: Vec<StoppingTime>) -> Self {
        ArbitrageSearch { budget, tau: Some(tau) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArbitrageWitness<T> {
    /// Decision node where the strategy trades.
    pub node: NodeId,
    pub holding: T,
    #[serde(skip)]
    pub portfolio: Portfolio<T>,
    /// Smallest and largest total gain over all trajectories.
    pub min_gain: T,
    pub max_gain: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ArbitrageOutcome<T> {
    Found(ArbitrageWitness<T>),
    /// The search completed and no arbitrage exists.
    None {
        evaluations: u64,
    },
    /// The budget ran out first.
    Unknown {
        evaluations: u64,
    },
}

impl<T> ArbitrageOutcome<T> {
    pub fn is_found(&self) -> bool {
        matches!(self, ArbitrageOutcome::Found(_))
    }

    pub fn is_none(&self) -> bool {
        matches!(self, ArbitrageOutcome::None { .. })
    }
}

/// Smallest positive and largest negative admissible holdings.
fn directional_holdings<T: Scalar>(c: &PortfolioConstraint<T>) -> (Option<T>, Option<T>) {
    match *c {
        PortfolioConstraint::Unconstrained => (Some(T::one()), Some(-T::one())),
        PortfolioConstraint::Interval { lo, hi } => ((hi > T::zero()).then_some(hi), (lo < T::zero()).then_some(lo)),
        PortfolioConstraint::Grid { tick, .. } => {
            let ok = c.grid_steps().unwrap_or(0) >= 1;
            (ok.then_some(tick), ok.then_some(-tick))
        }
    }
}

pub fn find_arbitrage_strategy<T: Scalar>(market: &Market<T>, search: &ArbitrageSearch) -> Result<ArbitrageOutcome<T>> {
    market.validate()?;
    let tree = &market.tree;
    let active = market.active_mask();
    let decision = match &search.tau {
        Some(tau) => rebalancing_nodes(tree, tau)?,
        None => vec![true; tree.len()],
    };
    let (up, down) = directional_holdings(&market.constraint);
    let mut evaluations = 0u64;

    for d in (0..tree.len()).filter(|&d| decision[d] && active[d] && !tree.is_terminal(d)) {
        let (interior, ends) = block(tree, &active, &decision, d);
        if search.tau.is_some() {
            if let Some(&e) = ends.iter().find(|&&e| tree.depth(e) < tree.depth(d) + 2) {
                return Err(Error::InvalidTauSpacing(format!(
                    "holding set at node {d} would be held for a single step before node {e}"
                )));
            }
        }
        evaluations += ends.len() as u64;
        if evaluations > search.budget {
            return Ok(ArbitrageOutcome::Unknown { evaluations });
        }
        let s_d = tree.price(d);
        let moves: Vec<T> = ends.iter().map(|&e| tree.price(e) - s_d).collect();
        let all_nonneg = moves.iter().all(|&m| m >= T::zero());
        let all_nonpos = moves.iter().all(|&m| m <= T::zero());
        let candidate = match (all_nonneg, all_nonpos) {
            (true, false) => up,
            (false, true) => down,
            _ => None,
        };
        let Some(h) = candidate else { continue };

        let mut portfolio = Portfolio::zero(tree)
            .with_horizon(market.horizon.clone().into())
            .with_liquidation(market.liquidation);
        portfolio.holdings[d] = h;
        for &n in &interior {
            portfolio.holdings[n] = h;
        }
        if let Some(tau) = &search.tau {
            debug_assert_eq!(
                fast_trend_transform(tree, &portfolio, tau)?.holdings,
                portfolio.holdings
            );
        }
        if let Some((min_gain, max_gain)) = verified(market, &portfolio) {
            return Ok(ArbitrageOutcome::Found(ArbitrageWitness {
                node: d,
                holding: h,
                portfolio,
                min_gain,
                max_gain,
            }));
        }
    }
    Ok(ArbitrageOutcome::None { evaluations })
}

/// Interior nodes of the block starting at `d` and the nodes where it ends.
fn block<T: Scalar>(
    tree: &crate::tree::TrajectoryTree<T>,
    active: &[bool],
    decision: &[bool],
    d: NodeId,
) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut interior = Vec::new();
    let mut ends = Vec::new();
    let mut stack: Vec<NodeId> = tree.children(d).iter().rev().copied().collect();
    while let Some(n) = stack.pop() {
        if decision[n] || !active[n] || tree.is_terminal(n) {
            ends.push(n);
        } else {
            interior.push(n);
            stack.extend(tree.children(n).iter().rev());
        }
    }
    (interior, ends)
}

/// `(min, max)` of total gains if `p` is an arbitrage.
fn verified<T: Scalar>(market: &Market<T>, p: &Portfolio<T>) -> Option<(T, T)> {
    let tree = &market.tree;
    if !market.admits(p) {
        return None;
    }
    let (lo, hi) = tree
        .paths()
        .iter()
        .map(|path| p.gains_to_horizon(tree, path, 0))
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), g| (lo.min(g), hi.max(g)));
    (lo >= T::zero() && hi > T::zero()).then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{TrajectoryTree, WValue};

    fn seq(prices: &[f64]) -> Vec<(f64, WValue)> {
        prices
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, WValue::Tick(i as i64)))
            .collect()
    }

    fn fast_trend_tree() -> TrajectoryTree<f64> {
        TrajectoryTree::build(&[
            seq(&[1.0, 1.0, 0.9]),
            seq(&[1.0, 1.0, 1.1]),
            seq(&[1.0, 1.1, 1.0]),
            seq(&[1.0, 1.1, 1.2]),
        ])
        .unwrap()
    }

    #[test]
    fn one_step_arbitrage_node() {
        let t = TrajectoryTree::build(&[seq(&[1.0, 1.0]), seq(&[1.0, 1.1])]).unwrap();
        let out = find_arbitrage_strategy(&Market::new(t), &ArbitrageSearch::new(100)).unwrap();
        let ArbitrageOutcome::Found(w) = out else {
            panic!("{out:?}")
        };
        assert_eq!((w.node, w.holding), (0, 1.0));
        assert_eq!(w.min_gain, 0.0);
    }

    #[test]
    fn pairing_removes_arbitrage() {
        let m = Market::new(fast_trend_tree());
        assert!(find_arbitrage_strategy(&m, &ArbitrageSearch::new(100))
            .unwrap()
            .is_found());
        let tau = vec![StoppingTime::fixed(0), StoppingTime::fixed(2)];
        let out = find_arbitrage_strategy(&m, &ArbitrageSearch::paired(100, tau)).unwrap();
        assert!(out.is_none(), "{out:?}");
    }

    #[test]
    fn constraint_direction_matters() {
        let t = TrajectoryTree::build(&[seq(&[1.0, 1.0]), seq(&[1.0, 1.1])]).unwrap();
        let m = Market::new(t).with_constraint(PortfolioConstraint::Interval { lo: -1.0, hi: 0.0 });
        assert!(find_arbitrage_strategy(&m, &ArbitrageSearch::new(100))
            .unwrap()
            .is_none());
    }

    #[test]
    fn single_step_blocks_are_rejected() {
        let m = Market::new(fast_trend_tree()).with_horizon(StoppingTime::fixed(1));
        let tau = vec![StoppingTime::fixed(0), StoppingTime::fixed(2)];
        assert!(matches!(
            find_arbitrage_strategy(&m, &ArbitrageSearch::paired(100, tau)),
            Err(Error::InvalidTauSpacing(_))
        ));
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let m = Market::new(fast_trend_tree());
        let out = find_arbitrage_strategy(&m, &ArbitrageSearch::new(1)).unwrap();
        assert!(matches!(out, ArbitrageOutcome::Unknown { .. }));
    }
}
