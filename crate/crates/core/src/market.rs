//! Portfolios over a trajectory tree and the discrete market they trade in.
//!
//! Holdings are keyed by node: `holdings[n]` is the number of shares held
//! over the step that leaves node `n`. Gains, portfolio values and the
//! self-financing bank account are derived along a path on demand. The
//! interest rate is zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{NodeId, StoppingTime, TrajectoryTree};

/// Trading horizon `N_H` of a portfolio.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Horizon {
    #[default]
    Terminal,
    Fixed {
        depth: usize,
    },
    Nodes {
        nodes: BTreeSet<NodeId>,
    },
    /// Arbitrary per-trajectory horizon keyed by leaf. Need not be a
    /// stopping time.
    PerPath {
        depths: BTreeMap<NodeId, usize>,
    },
}

impl From<StoppingTime> for Horizon {
    fn from(st: StoppingTime) -> Self {
        match st {
            StoppingTime::Terminal => Horizon::Terminal,
            StoppingTime::Fixed { depth } => Horizon::Fixed { depth },
            StoppingTime::Nodes { nodes } => Horizon::Nodes { nodes },
        }
    }
}

impl Horizon {
    pub fn stopping_time(&self) -> Option<StoppingTime> {
        match self {
            Horizon::Terminal => Some(StoppingTime::Terminal),
            Horizon::Fixed { depth } => Some(StoppingTime::Fixed { depth: *depth }),
            Horizon::Nodes { nodes } => Some(StoppingTime::Nodes { nodes: nodes.clone() }),
            Horizon::PerPath { .. } => None,
        }
    }

    pub fn is_stopping_time(&self) -> bool {
        !matches!(self, Horizon::PerPath { .. })
    }

    /// `N_H(S)` for the path ending at `path.last()`, capped at its length.
    pub fn depth_on<T: Scalar>(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> usize {
        let last = path.len() - 1;
        match self {
            Horizon::PerPath { depths } => depths.get(&path[last]).copied().unwrap_or(last).min(last),
            other => other.stopping_time().expect("stopping-time horizon").nu(tree, path),
        }
    }

    /// Nodes at which trading still takes place (`depth < N_H` on some
    /// path through the node).
    pub fn active_mask<T: Scalar>(&self, tree: &TrajectoryTree<T>) -> Vec<bool> {
        match self.stopping_time() {
            Some(st) => st.stopped_mask(tree).into_iter().map(|s| !s).collect(),
            None => {
                let mut active = vec![false; tree.len()];
                for path in tree.paths() {
                    let n = self.depth_on(tree, &path);
                    for &id in &path[..n] {
                        active[id] = true;
                    }
                }
                active
            }
        }
    }
}

/// Admissible holdings at every node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum PortfolioConstraint<T> {
    #[default]
    Unconstrained,
    Interval {
        lo: T,
        hi: T,
    },
    /// Integer multiples of `tick` with magnitude at most `bound`.
    Grid {
        tick: T,
        bound: T,
    },
}

impl<T: Scalar> PortfolioConstraint<T> {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PortfolioConstraint::Unconstrained => Ok(()),
            PortfolioConstraint::Interval { lo, hi } => {
                if !(lo <= T::zero() && T::zero() <= hi) {
                    return Err(Error::InvalidConfig(format!(
                        "holding interval [{lo}, {hi}] must contain 0"
                    )));
                }
                Ok(())
            }
            PortfolioConstraint::Grid { tick, bound } => {
                if !(tick > T::zero() && tick.is_finite() && bound >= T::zero() && bound.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "grid tick {tick} must be positive and bound {bound} nonnegative"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Largest integer `m` with `m * tick <= bound`.
    pub fn grid_steps(&self) -> Option<i64> {
        match *self {
            PortfolioConstraint::Grid { tick, bound } => {
                let m = (bound / tick + T::tie_eps()).floor();
                m.to_i64()
            }
            _ => None,
        }
    }

    /// All admissible values for a grid constraint, ascending.
    pub fn grid_points(&self) -> Option<Vec<T>> {
        let m = self.grid_steps()?;
        let PortfolioConstraint::Grid { tick, .. } = *self else {
            unreachable!()
        };
        Some((-m..=m).map(|k| T::of(k as f64) * tick).collect())
    }

    pub fn admits(&self, h: T) -> bool {
        match *self {
            PortfolioConstraint::Unconstrained => h.is_finite(),
            PortfolioConstraint::Interval { lo, hi } => lo <= h && h <= hi,
            PortfolioConstraint::Grid { tick, .. } => {
                let k = (h / tick).round();
                let m = T::of(self.grid_steps().unwrap_or(0) as f64);
                k.abs() <= m && (h - k * tick).abs() <= T::tie_eps() * tick.max(T::one())
            }
        }
    }

    /// Whether `-h` is admissible whenever `h` is.
    pub fn is_symmetric(&self) -> bool {
        match *self {
            PortfolioConstraint::Interval { lo, hi } => lo == -hi,
            _ => true,
        }
    }
}

/// Hypotheses of the debt-limited contrarian construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DebtLimitConfig<T> {
    /// Credit limit `A >= 0`.
    pub a: T,
    /// Minimum magnitude of a nonzero one-step gain.
    pub delta: T,
    /// Maximum number of arbitrage plus flat nodes on one trajectory.
    pub m_hat: usize,
}

impl<T: Scalar> DebtLimitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.a < T::zero() || !(self.delta > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "need A >= 0 and delta > 0 (got A = {}, delta = {})",
                self.a, self.delta
            )));
        }
        Ok(())
    }
}

/// A discrete market: trajectory set, admissible holdings and horizon policy.
#[derive(Clone, Debug)]
pub struct Market<T> {
    pub tree: TrajectoryTree<T>,
    pub constraint: PortfolioConstraint<T>,
    pub horizon: StoppingTime,
    pub liquidation: bool,
}

impl<T: Scalar> Market<T> {
    /// Unconstrained market trading until the end of every trajectory.
    pub fn new(tree: TrajectoryTree<T>) -> Self {
        Market {
            tree,
            constraint: PortfolioConstraint::Unconstrained,
            horizon: StoppingTime::Terminal,
            liquidation: false,
        }
    }

    pub fn with_constraint(mut self, constraint: PortfolioConstraint<T>) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_horizon(mut self, horizon: StoppingTime) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_liquidation(mut self, liquidation: bool) -> Self {
        self.liquidation = liquidation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.constraint.validate()?;
        self.horizon.validate(&self.tree)
    }

    /// Nodes where the market horizon has not yet been reached.
    pub fn active_mask(&self) -> Vec<bool> {
        self.horizon.stopped_mask(&self.tree).into_iter().map(|s| !s).collect()
    }

    pub fn zero_portfolio(&self) -> Portfolio<T> {
        Portfolio {
            v0: T::zero(),
            holdings: vec![T::zero(); self.tree.len()],
            horizon: self.horizon.clone().into(),
            liquidated: self.liquidation,
        }
    }

    /// Whether every holding of `p` at an active node is admissible.
    pub fn admits(&self, p: &Portfolio<T>) -> bool {
        let active = p.horizon.active_mask(&self.tree);
        p.holdings.len() == self.tree.len()
            && p.holdings
                .iter()
                .zip(&active)
                .all(|(&h, &a)| !a || self.constraint.admits(h))
    }
}

/// Self-financing portfolio described by its holdings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Portfolio<T> {
    /// Initial value `V_H(0, S_0)`.
    pub v0: T,
    /// Holding at every node, indexed by node id.
    pub holdings: Vec<T>,
    #[serde(default)]
    pub horizon: Horizon,
    /// Whether holdings drop to zero at the horizon. Otherwise they stay
    /// frozen at the last pre-horizon value.
    #[serde(default)]
    pub liquidated: bool,
}

impl<T: Scalar> Portfolio<T> {
    pub fn zero(tree: &TrajectoryTree<T>) -> Self {
        Self::constant(tree, T::zero(), T::zero())
    }

    /// `H == h` at every node with terminal horizon.
    pub fn constant(tree: &TrajectoryTree<T>, v0: T, h: T) -> Self {
        Portfolio {
            v0,
            holdings: vec![h; tree.len()],
            horizon: Horizon::Terminal,
            liquidated: false,
        }
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_liquidation(mut self, liquidated: bool) -> Self {
        self.liquidated = liquidated;
        self
    }

    pub fn check(&self, tree: &TrajectoryTree<T>) -> Result<()> {
        if self.holdings.len() != tree.len() {
            return Err(Error::PortfolioMismatch(format!(
                "{} holdings for {} nodes",
                self.holdings.len(),
                tree.len()
            )));
        }
        if let Some(st) = self.horizon.stopping_time() {
            st.validate(tree)?;
        }
        Ok(())
    }

    /// `N_H(S)` along a root-to-leaf path.
    pub fn horizon_on(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> usize {
        self.horizon.depth_on(tree, path)
    }

    /// Effective holding `H_i(S)` on the path, after the horizon rule.
    pub fn holding_at(&self, tree: &TrajectoryTree<T>, path: &[NodeId], i: usize) -> T {
        let n = self.horizon_on(tree, path);
        if i < n {
            self.holdings[path[i]]
        } else if self.liquidated || n == 0 {
            T::zero()
        } else {
            self.holdings[path[n - 1]]
        }
    }

    /// Holding used for one-step analyses at `node`: zero once the horizon
    /// has been reached.
    pub fn trading_holding(&self, active: &[bool], node: NodeId) -> T {
        if active[node] {
            self.holdings[node]
        } else {
            T::zero()
        }
    }

    /// `sum_{i=from}^{to-1} H_i (S_{i+1} - S_i)` along `path`.
    pub fn gains(&self, tree: &TrajectoryTree<T>, path: &[NodeId], from: usize, to: usize) -> Result<T> {
        if from > to || to >= path.len() {
            return Err(Error::DepthOutOfRange {
                from,
                to,
                len: path.len(),
            });
        }
        let mut g = T::zero();
        for i in from..to {
            let step = tree.price(path[i + 1]) - tree.price(path[i]);
            g += self.holding_at(tree, path, i) * step;
        }
        Ok(g)
    }

    /// Portfolio value `V_H(n, S)`.
    pub fn value_at(&self, tree: &TrajectoryTree<T>, path: &[NodeId], n: usize) -> Result<T> {
        Ok(self.v0 + self.gains(tree, path, 0, n)?)
    }

    /// Gains from depth `from` up to the horizon `N_H(S)`.
    pub fn gains_to_horizon(&self, tree: &TrajectoryTree<T>, path: &[NodeId], from: usize) -> T {
        let n = self.horizon_on(tree, path);
        if from >= n {
            return T::zero();
        }
        self.gains(tree, path, from, n).expect("horizon within path")
    }

    /// Value at the horizon, `V_H(N_H(S), S)`.
    pub fn horizon_value(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> T {
        self.v0 + self.gains_to_horizon(tree, path, 0)
    }

    /// Bank account `B_i` of the self-financing strategy along `path`,
    /// solved from `B_0 = V_0 - H_0 S_0` and
    /// `B_{i+1} = B_i + (H_i - H_{i+1}) S_{i+1}`.
    pub fn bank_account_path(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> Result<Vec<T>> {
        if path.is_empty() {
            return Err(Error::DepthOutOfRange { from: 0, to: 0, len: 0 });
        }
        let h = |i| self.holding_at(tree, path, i);
        let mut bank = Vec::with_capacity(path.len());
        bank.push(self.v0 - h(0) * tree.price(path[0]));
        for i in 0..path.len() - 1 {
            let next = bank[i] + (h(i) - h(i + 1)) * tree.price(path[i + 1]);
            bank.push(next);
        }
        Ok(bank)
    }
}

/// Sum of two portfolios.
///
/// Holdings add before the earlier horizon; afterwards the portfolio with
/// the later horizon continues alone. The horizon of the sum is the later
/// one. When both are liquidated the definition reduces to the plain
/// pointwise sum.
pub fn portfolio_sum<T: Scalar>(
    tree: &TrajectoryTree<T>,
    p1: &Portfolio<T>,
    p2: &Portfolio<T>,
) -> Result<Portfolio<T>> {
    p1.check(tree)?;
    p2.check(tree)?;
    let v0 = p1.v0 + p2.v0;
    if let (Some(s1), Some(s2)) = (p1.horizon.stopping_time(), p2.horizon.stopping_time()) {
        let a1 = p1.horizon.active_mask(tree);
        let a2 = p2.horizon.active_mask(tree);
        let both_liquidated = p1.liquidated && p2.liquidated;
        let holdings = (0..tree.len())
            .map(|n| match (a1[n], a2[n]) {
                (true, true) => p1.holdings[n] + p2.holdings[n],
                (true, false) => p1.holdings[n],
                (false, true) => p2.holdings[n],
                (false, false) if both_liquidated => T::zero(),
                (false, false) => p1.holdings[n] + p2.holdings[n],
            })
            .collect();
        return Ok(Portfolio {
            v0,
            holdings,
            horizon: s1.max_with(&s2, tree).into(),
            liquidated: both_liquidated,
        });
    }
    if !(p1.liquidated && p2.liquidated) {
        return Err(Error::IncompatibleHorizons);
    }
    let holdings = p1.holdings.iter().zip(&p2.holdings).map(|(&a, &b)| a + b).collect();
    let depths = tree
        .paths()
        .iter()
        .map(|path| {
            let leaf = *path.last().unwrap();
            (leaf, p1.horizon_on(tree, path).max(p2.horizon_on(tree, path)))
        })
        .collect();
    Ok(Portfolio {
        v0,
        holdings,
        horizon: Horizon::PerPath { depths },
        liquidated: true,
    })
}

/// Nodes at which some `tau_k` fires, i.e. whose own holding is carried
/// forward by [`fast_trend_transform`].
pub fn rebalancing_nodes<T: Scalar>(tree: &TrajectoryTree<T>, tau: &[StoppingTime]) -> Result<Vec<bool>> {
    let mut decision = vec![false; tree.len()];
    for path in tree.paths() {
        let times = tau_values(tree, tau, &path)?;
        for t in times {
            decision[path[t]] = true;
        }
    }
    Ok(decision)
}

fn tau_values<T: Scalar>(tree: &TrajectoryTree<T>, tau: &[StoppingTime], path: &[NodeId]) -> Result<Vec<usize>> {
    let last = path.len() - 1;
    let times: Vec<usize> = tau.iter().map(|t| t.nu(tree, path)).collect();
    match times.first() {
        Some(0) => {}
        Some(&t0) => {
            return Err(Error::InvalidTauSpacing(format!(
                "tau_0 = {t0} on leaf {}, expected 0",
                path[last]
            )))
        }
        None => return Err(Error::InvalidTauSpacing("empty stopping-time sequence".into())),
    }
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b < a {
            return Err(Error::InvalidTauSpacing(format!(
                "tau decreases from {a} to {b} on leaf {}",
                path[last]
            )));
        }
        if b > a && b < a + 2 {
            return Err(Error::InvalidTauSpacing(format!(
                "tau increases from {a} to {b} (< 2 steps) on leaf {}",
                path[last]
            )));
        }
    }
    Ok(times)
}

/// Rebalance only at the times `tau_k`: `H^C_k = H_{tau_khat}` where
/// `tau_khat` is the last `tau <= k`.
///
/// With `tau_0 = 0` and strict increases of at least two steps, every
/// change of holding is followed by one more step at the same holding.
pub fn fast_trend_transform<T: Scalar>(
    tree: &TrajectoryTree<T>,
    p: &Portfolio<T>,
    tau: &[StoppingTime],
) -> Result<Portfolio<T>> {
    p.check(tree)?;
    for t in tau {
        t.validate(tree)?;
    }
    let mut holdings: Vec<Option<T>> = vec![None; tree.len()];
    for path in tree.paths() {
        let times = tau_values(tree, tau, &path)?;
        for (k, &node) in path.iter().enumerate() {
            let khat = times.iter().rposition(|&t| t <= k).expect("tau_0 = 0");
            let h = p.holdings[path[times[khat]]];
            match holdings[node] {
                None => holdings[node] = Some(h),
                Some(prev) if prev.key_bits() == h.key_bits() => {}
                Some(_) => {
                    return Err(Error::InvalidTauSpacing(format!(
                        "stopping times anticipate the future at node {node}"
                    )))
                }
            }
        }
    }
    Ok(Portfolio {
        v0: p.v0,
        holdings: holdings.into_iter().map(|h| h.unwrap_or_else(T::zero)).collect(),
        horizon: p.horizon.clone(),
        liquidated: p.liquidated,
    })
}

/// Whether holdings satisfy the pairing rule: a change at a node is kept
/// for one more step (`H_{-1} = 0` before the root).
pub fn satisfies_pairing<T: Scalar>(tree: &TrajectoryTree<T>, p: &Portfolio<T>) -> bool {
    tree.nodes().iter().all(|node| {
        let prev = node.parent.map(|q| p.holdings[q]).unwrap_or_else(T::zero);
        let h = p.holdings[node.id];
        h == prev || node.children.iter().all(|&c| p.holdings[c] == h)
    })
}
