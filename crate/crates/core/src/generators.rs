//! Finite grid trajectory sets, the quadratic-variation special case, and
//! chart ingestion.
//!
//! Prices live on the log grid `S = s0 * exp(k * delta)` with `|k| <= N1`
//! and jumps of at most `p` ticks. The auxiliary coordinate `W` counts ticks
//! of `beta^2`. A trajectory ends as soon as `W` enters `Q`.
//! Prices are always recomputed from the integer index, so equal indices
//! give bit-identical prices.

use std::collections::BTreeSet;
use std::io::Read;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{TrajectoryTree, TreeBuilder, TreeNode, WValue};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig<T> {
    pub s0: T,
    /// Log-price tick.
    pub delta: T,
    /// `W` is measured in ticks of `beta^2`.
    pub beta: T,
    /// Largest jump in price ticks.
    pub p: u32,
    /// Largest `W` increment; defaults to `(p * delta)^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<T>,
    #[serde(rename = "N1")]
    pub n1: u32,
    #[serde(rename = "N2")]
    pub n2: u32,
    /// `Q = { n * beta^2 : n in Lambda }`.
    #[serde(rename = "Lambda")]
    pub lambda: BTreeSet<u32>,
}

impl<T: Scalar> GridConfig<T> {
    /// `d = p * delta`.
    pub fn jump_bound(&self) -> T {
        T::of(self.p as f64) * self.delta
    }

    pub fn max_w_increment(&self) -> T {
        self.c.unwrap_or_else(|| {
            let d = self.jump_bound();
            d * d
        })
    }

    /// Largest `W` increment in `beta^2` ticks.
    pub fn c_ticks(&self) -> u32 {
        let r = self.max_w_increment() / (self.beta * self.beta);
        (r.as_f64() + 1e-9).floor().max(0.0) as u32
    }

    pub fn price(&self, k: i64) -> T {
        self.s0 * (T::of(k as f64) * self.delta).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let positive = |x: T| x > T::zero() && x.is_finite();
        if !positive(self.s0) || !positive(self.delta) || !positive(self.beta) {
            return bad("s0, delta and beta must be positive and finite");
        }
        if self.p == 0 {
            return bad("p must be at least 1");
        }
        if !positive(self.max_w_increment()) {
            return bad("c must be positive");
        }
        if self.c_ticks() == 0 {
            return bad("c is smaller than one beta^2 tick, W can never move");
        }
        if self.lambda.is_empty() {
            return bad("Lambda (and so Q) is empty");
        }
        if self.lambda.iter().any(|&n| n == 0 || n > self.n2) {
            return bad("Lambda entries must lie in 1..=N2");
        }
        Ok(())
    }

    /// Non-fatal inconsistencies worth reporting.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if (self.p as u64) * (self.n2 as u64) < self.n1 as u64 {
            w.push(format!(
                "p * N2 = {} < N1 = {}: the outer price levels are unreachable",
                self.p as u64 * self.n2 as u64,
                self.n1
            ));
        }
        w
    }

    fn q_max(&self) -> u32 {
        *self.lambda.iter().next_back().expect("validated")
    }

    fn price_moves(&self, k: i64) -> impl Iterator<Item = i64> {
        let (p, n1) = (self.p as i64, self.n1 as i64);
        (k - p).max(-n1)..=(k + p).min(n1)
    }
}

/// Lattice state `(price index, W ticks)`.
type State = (i64, u32);

/// Depth-first enumeration of every path from `(0, 0)`.
fn enumerate<T: Scalar>(
    cfg: &GridConfig<T>,
    node_budget: usize,
    moves: impl Fn(State) -> Vec<State>,
) -> Result<TrajectoryTree<T>> {
    let mut nodes = vec![TreeNode {
        id: 0,
        parent: None,
        depth: 0,
        price: cfg.s0,
        w: WValue::Tick(0),
        children: Vec::new(),
        q_prob: None,
    }];
    let mut stack: Vec<(usize, State)> = vec![(0, (0, 0))];
    while let Some((id, (k, j))) = stack.pop() {
        if cfg.lambda.contains(&j) {
            continue;
        }
        let next = moves((k, j));
        for &(k2, j2) in next.iter() {
            if nodes.len() >= node_budget {
                return Err(Error::BudgetExceeded(node_budget as u64));
            }
            let child = nodes.len();
            nodes.push(TreeNode {
                id: child,
                parent: Some(id),
                depth: nodes[id].depth + 1,
                price: cfg.price(k2),
                w: WValue::Tick(j2 as i64),
                children: Vec::new(),
                q_prob: None,
            });
            nodes[id].children.push(child);
        }
        for (offset, &s) in next.iter().enumerate().rev() {
            stack.push((nodes[id].children[offset], s));
        }
    }
    Ok(TrajectoryTree::from_nodes_unchecked(nodes))
}

fn grid_moves<T: Scalar>(cfg: &GridConfig<T>, (k, j): State) -> Vec<State> {
    let top = cfg.c_ticks().min(cfg.q_max() - j);
    cfg.price_moves(k)
        .flat_map(|k2| (1..=top).map(move |dj| (k2, j + dj)))
        .collect()
}

/// Every sequence satisfying the grid constraints, as one tree.
pub fn enumerate_grid_set<T: Scalar>(cfg: &GridConfig<T>, node_budget: usize) -> Result<TrajectoryTree<T>> {
    cfg.validate()?;
    enumerate(cfg, node_budget, |s| grid_moves(cfg, s))
}

/// `n` trajectories drawn by uniform admissible moves; path `i` uses
/// stream `i` of a ChaCha generator seeded with `seed`.
pub fn sample_grid_set<T: Scalar>(cfg: &GridConfig<T>, n: usize, seed: u64) -> Result<TrajectoryTree<T>> {
    cfg.validate()?;
    if n == 0 {
        return Ok(TrajectoryTree::singleton(cfg.s0, WValue::Tick(0)));
    }
    let mut builder = TreeBuilder::new();
    for i in 0..n {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (mut k, mut j) = (0i64, 0u32);
        let mut seq = vec![(cfg.s0, WValue::Tick(0))];
        while !cfg.lambda.contains(&j) {
            let ks: Vec<i64> = cfg.price_moves(k).collect();
            k = ks[rng.gen_range(0..ks.len())];
            j += rng.gen_range(1..=cfg.c_ticks().min(cfg.q_max() - j));
            seq.push((cfg.price(k), WValue::Tick(j as i64)));
        }
        builder.insert(&seq)?;
    }
    builder.finish()
}

/// Grid set with `W` equal to the running sum of squared log increments.
///
/// `W` is counted in `delta^2` ticks, so each move of `dk` ticks adds
/// `dk^2`, and `Lambda` is read in the same units. Zero moves are excluded.
pub fn build_bjn_set<T: Scalar>(cfg: &GridConfig<T>, node_budget: usize) -> Result<TrajectoryTree<T>> {
    cfg.validate()?;
    if cfg.n1 == 0 {
        return Err(Error::InvalidConfig(
            "N1 = 0 leaves no nonzero price move, but W must increase".into(),
        ));
    }
    let q_max = cfg.q_max();
    enumerate(cfg, node_budget, |(k, j)| {
        cfg.price_moves(k)
            .filter(|&k2| k2 != k)
            .filter_map(|k2| {
                let dj = ((k2 - k) * (k2 - k)) as u32;
                (j + dj <= q_max).then_some((k2, j + dj))
            })
            .collect()
    })
}

/// Recovers the price index of `price`, if it is a grid level.
fn grid_index<T: Scalar>(cfg: &GridConfig<T>, price: T) -> Option<i64> {
    let k = ((price / cfg.s0).ln() / cfg.delta).round().to_i64()?;
    let expected = cfg.price(k);
    ((price - expected).abs() <= T::tie_eps() * expected.abs()).then_some(k)
}

/// Which rule the `W` coordinate follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WRule {
    /// Grid set: `0 < dW <= c` in `beta^2` ticks.
    Increments,
    /// `dW = dk^2` in `delta^2` ticks.
    QuadraticVariation,
}

/// Checks a sequence against the grid constraints from scratch and
/// returns a description of the first violation.
pub fn validate_grid_path<T: Scalar>(
    cfg: &GridConfig<T>,
    seq: &[(T, WValue)],
    rule: WRule,
    require_termination: bool,
) -> std::result::Result<(), String> {
    let first = seq.first().ok_or("empty trajectory")?;
    if first.0 != cfg.s0 || first.1 != WValue::Tick(0) {
        return Err(format!("starts at {:?}, expected ({}, 0)", first, cfg.s0));
    }
    let mut prev: Option<(i64, i64)> = None;
    for (i, (price, w)) in seq.iter().enumerate() {
        let k = grid_index(cfg, *price).ok_or(format!("step {i}: price {price} is off the grid"))?;
        if k.unsigned_abs() > cfg.n1 as u64 {
            return Err(format!("step {i}: index {k} beyond N1 = {}", cfg.n1));
        }
        let WValue::Tick(j) = *w else {
            return Err(format!("step {i}: W is not a tick count"));
        };
        if let Some((pk, pj)) = prev {
            if (k - pk).unsigned_abs() > cfg.p as u64 {
                return Err(format!("step {i}: jump of {} ticks exceeds p = {}", k - pk, cfg.p));
            }
            let dj = j - pj;
            match rule {
                WRule::Increments => {
                    let dw = T::of(dj as f64) * cfg.beta * cfg.beta;
                    let c = cfg.max_w_increment();
                    if dj <= 0 || dw > c * (T::one() + T::of(1e-9)) {
                        return Err(format!("step {i}: W increment {dw} outside (0, {c}]"));
                    }
                    if j > cfg.n2 as i64 {
                        return Err(format!("step {i}: W index {j} beyond N2 = {}", cfg.n2));
                    }
                }
                WRule::QuadraticVariation => {
                    if dj != (k - pk) * (k - pk) {
                        return Err(format!("step {i}: W increment {dj} is not the squared jump"));
                    }
                }
            }
            if cfg.lambda.contains(&(pj as u32)) && pj >= 0 {
                return Err(format!("step {i}: trajectory continues after W entered Q"));
            }
        }
        prev = Some((k, j));
    }
    let (_, last_j) = prev.expect("non-empty");
    if require_termination && !(last_j >= 0 && cfg.lambda.contains(&(last_j as u32))) {
        return Err(format!("ends with W index {last_j} outside Q"));
    }
    Ok(())
}

/// Observed chart: one value per timestamp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries<T> {
    pub timestamps: Vec<f64>,
    pub values: Vec<T>,
    /// Values are log prices rather than prices.
    pub log_values: bool,
}

impl<T: Scalar> ChartSeries<T> {
    /// Two-column CSV `timestamp,value`; a non-numeric first row is taken
    /// as a header.
    pub fn from_csv<R: Read>(reader: R, log_values: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let parsed = (
                record.get(0).and_then(|s| s.parse::<f64>().ok()),
                record.get(1).and_then(|s| s.parse::<f64>().ok()),
            );
            match parsed {
                (Some(t), Some(v)) if v.is_finite() => {
                    timestamps.push(t);
                    values.push(T::of(v));
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "chart row {} is not a numeric (timestamp, value) pair",
                        row + 1
                    )))
                }
            }
        }
        if values.is_empty() {
            return Err(Error::EmptyChart);
        }
        Ok(ChartSeries {
            timestamps,
            values,
            log_values,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IngestedChart<T> {
    pub trajectory: Vec<(T, WValue)>,
    pub indices: Vec<i64>,
    /// Positions whose move was clipped to `p` ticks or to `N1`.
    pub clipped: Vec<usize>,
    /// Whether `W` entered `Q`; otherwise the series ran out first.
    pub terminated: bool,
    /// Observations consumed, including the first.
    pub consumed: usize,
}

fn round_half_up<T: Scalar>(x: T) -> i64 {
    (x + T::of(0.5)).floor().to_i64().unwrap_or(i64::MAX)
}

/// Maps a chart onto the grid anchored at its first observation.
///
/// Each observation goes to the nearest grid level, moves are clipped to
/// `p` ticks and to `|k| <= N1`, and `W` accumulates the squared index
/// jumps (in `delta^2` ticks, comparing against `Q` in `beta^2` ticks).
pub fn ingest_chart<T: Scalar>(series: &ChartSeries<T>, cfg: &GridConfig<T>) -> Result<IngestedChart<T>> {
    cfg.validate()?;
    let first = *series.values.first().ok_or(Error::EmptyChart)?;
    if !series.log_values && !(first > T::zero()) {
        return Err(Error::InvalidConfig("first chart value must be positive".into()));
    }
    let target = |v: T| -> i64 {
        let x = if series.log_values { v - first } else { (v / first).ln() };
        round_half_up(x / cfg.delta)
    };
    let ratio = (cfg.delta * cfg.delta / (cfg.beta * cfg.beta)).as_f64();
    let in_q = |j: i64| {
        let w = j as f64 * ratio;
        let n = w.round();
        (w - n).abs() <= 1e-9 * (1.0 + w) && n >= 0.0 && cfg.lambda.contains(&(n as u32))
    };
    let (p, n1) = (cfg.p as i64, cfg.n1 as i64);
    let mut out = IngestedChart {
        trajectory: vec![(cfg.s0, WValue::Tick(0))],
        indices: vec![0],
        clipped: Vec::new(),
        terminated: false,
        consumed: 1,
    };
    let (mut k, mut j) = (0i64, 0i64);
    for (i, &v) in series.values.iter().enumerate().skip(1) {
        let want = target(v);
        let next = (k + (want - k).clamp(-p, p)).clamp(-n1, n1);
        if next != want {
            out.clipped.push(i);
        }
        j += (next - k) * (next - k);
        k = next;
        out.indices.push(k);
        out.trajectory.push((cfg.price(k), WValue::Tick(j)));
        out.consumed = i + 1;
        if in_q(j) {
            out.terminated = true;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{classify_node, NodeClass};

    fn small() -> GridConfig<f64> {
        GridConfig {
            s0: 1.0,
            delta: 0.1,
            beta: 1.0,
            p: 1,
            c: Some(2.0),
            n1: 2,
            n2: 2,
            lambda: [2].into_iter().collect(),
        }
    }

    /// Independent recursive count of admissible paths.
    fn count_paths(cfg: &GridConfig<f64>, k: i64, j: u32) -> usize {
        if cfg.lambda.contains(&j) {
            return 1;
        }
        let qmax = *cfg.lambda.iter().max().unwrap();
        let mut total = 0;
        for k2 in k - cfg.p as i64..=k + cfg.p as i64 {
            if k2.abs() > cfg.n1 as i64 {
                continue;
            }
            for dj in 1..=cfg.c_ticks() {
                if j + dj <= qmax {
                    total += count_paths(cfg, k2, j + dj);
                }
            }
        }
        total
    }

    #[test]
    fn enumerate_matches_recursion() {
        let cfg = small();
        let t = enumerate_grid_set(&cfg, 10_000).unwrap();
        assert_eq!(t.leaf_count(), count_paths(&cfg, 0, 0));
        for leaf in t.leaves() {
            assert_eq!(t.node(leaf).unwrap().w, WValue::Tick(2));
        }
        for seq in t.sequences() {
            validate_grid_path(&cfg, &seq, WRule::Increments, true).unwrap();
        }
    }

    #[test]
    fn first_step_into_q() {
        let cfg = GridConfig {
            lambda: [1].into_iter().collect(),
            ..small()
        };
        let t = enumerate_grid_set(&cfg, 100).unwrap();
        assert_eq!(t.max_depth(), 1);
    }

    #[test]
    fn boundary_nodes_are_arbitrage_nodes() {
        let cfg = GridConfig {
            n2: 4,
            lambda: [4].into_iter().collect(),
            ..small()
        };
        let t = enumerate_grid_set(&cfg, 100_000).unwrap();
        let boundary: Vec<_> = (0..t.len())
            .filter(|&n| !t.is_terminal(n) && grid_index(&cfg, t.price(n)) == Some(2))
            .collect();
        assert!(!boundary.is_empty());
        for n in boundary {
            assert_eq!(classify_node(&t, n).unwrap(), NodeClass::ArbitrageNode);
        }
    }

    #[test]
    fn budget_and_config_errors() {
        assert!(matches!(enumerate_grid_set(&small(), 5), Err(Error::BudgetExceeded(5))));
        let cfg = GridConfig {
            lambda: BTreeSet::new(),
            ..small()
        };
        assert!(matches!(enumerate_grid_set(&cfg, 100), Err(Error::InvalidConfig(_))));
        let cfg = GridConfig { p: 0, ..small() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let cfg = GridConfig {
            n1: 5,
            n2: 2,
            ..small()
        };
        assert_eq!(cfg.warnings().len(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = GridConfig {
            n1: 5,
            n2: 6,
            lambda: [6].into_iter().collect(),
            ..small()
        };
        let a = sample_grid_set(&cfg, 20, 7).unwrap();
        let b = sample_grid_set(&cfg, 20, 7).unwrap();
        assert_eq!(a.sequences(), b.sequences());
        assert_eq!(sample_grid_set(&cfg, 0, 1).unwrap().len(), 1);
        for seq in a.sequences() {
            validate_grid_path(&cfg, &seq, WRule::Increments, true).unwrap();
        }
    }

    #[test]
    fn bjn_binary_tree() {
        let cfg = GridConfig {
            n1: 10,
            n2: 4,
            lambda: [4].into_iter().collect(),
            ..small()
        };
        let t = build_bjn_set(&cfg, 10_000).unwrap();
        assert_eq!(t.leaf_count(), 16);
        assert!(t.paths().iter().all(|p| p.len() == 5));
        for n in (0..t.len()).filter(|&n| !t.is_terminal(n)) {
            assert_eq!(classify_node(&t, n).unwrap(), NodeClass::UpDown);
        }
        for seq in t.sequences() {
            validate_grid_path(&cfg, &seq, WRule::QuadraticVariation, true).unwrap();
        }
        let cfg = GridConfig { n1: 0, ..cfg };
        assert!(matches!(build_bjn_set(&cfg, 100), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn validator_rejects_violations() {
        let cfg = small();
        let s = |k: i64, j: i64| (cfg.price(k), WValue::Tick(j));
        assert!(validate_grid_path(&cfg, &[s(0, 0), s(1, 1), s(2, 2)], WRule::Increments, true).is_ok());
        assert!(validate_grid_path(&cfg, &[s(0, 0), s(2, 1), s(2, 2)], WRule::Increments, true).is_err());
        assert!(validate_grid_path(&cfg, &[s(0, 0), s(1, 1), s(1, 1)], WRule::Increments, true).is_err());
        assert!(validate_grid_path(&cfg, &[s(0, 0), s(1, 1)], WRule::Increments, true).is_err());
        assert!(validate_grid_path(&cfg, &[s(0, 0), s(0, 2), s(1, 3)], WRule::Increments, false).is_err());
        assert!(validate_grid_path(&cfg, &[(1.01, WValue::Tick(0))], WRule::Increments, false).is_err());
    }

    fn chart(values: &[f64]) -> ChartSeries<f64> {
        ChartSeries {
            timestamps: (0..values.len()).map(|i| i as f64).collect(),
            values: values.to_vec(),
            log_values: false,
        }
    }

    fn chart_cfg(p: u32) -> GridConfig<f64> {
        GridConfig {
            s0: 1.0,
            delta: 0.01,
            beta: 0.01,
            p,
            c: None,
            n1: 100,
            n2: 1000,
            lambda: [1000].into_iter().collect(),
        }
    }

    #[test]
    fn ingest_indices() {
        let r = ingest_chart(&chart(&[1.0, 1.05, 0.98]), &chart_cfg(10)).unwrap();
        assert_eq!(r.indices, vec![0, 5, -2]);
        assert!(r.clipped.is_empty() && !r.terminated);
        assert_eq!(r.trajectory[2].1, WValue::Tick(25 + 49));
    }

    #[test]
    fn ingest_constant_and_clipping() {
        let r = ingest_chart(&chart(&[2.0, 2.0, 2.0]), &chart_cfg(3)).unwrap();
        assert_eq!(r.indices, vec![0, 0, 0]);
        assert!(r.trajectory.iter().all(|x| x.1 == WValue::Tick(0)));
        assert!(!r.terminated);

        let jump = (10.0f64 * 0.01).exp();
        let r = ingest_chart(&chart(&[1.0, jump]), &chart_cfg(3)).unwrap();
        assert_eq!(r.indices, vec![0, 3]);
        assert_eq!(r.clipped, vec![1]);
        validate_grid_path(&chart_cfg(3), &r.trajectory, WRule::QuadraticVariation, false).unwrap();
    }

    #[test]
    fn ingest_terminates_in_q() {
        let cfg = GridConfig {
            lambda: [4].into_iter().collect(),
            ..chart_cfg(3)
        };
        let v: Vec<f64> = [0, 1, 2, 3, 4, 5].iter().map(|&k| (k as f64 * 0.01).exp()).collect();
        let r = ingest_chart(&chart(&v), &cfg).unwrap();
        assert!(r.terminated);
        assert_eq!(r.indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn chart_csv() {
        let s: ChartSeries<f64> = ChartSeries::from_csv("t,value\n0,1.0\n1,1.05\n".as_bytes(), false).unwrap();
        assert_eq!(s.values, vec![1.0, 1.05]);
        assert!(matches!(
            ChartSeries::<f64>::from_csv("t,value\n".as_bytes(), false),
            Err(Error::EmptyChart)
        ));
        assert!(ChartSeries::<f64>::from_csv("0,1\nx,y\n".as_bytes(), false).is_err());
    }
}
