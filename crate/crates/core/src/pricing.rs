//! Minmax price bounds by backward induction over the trajectory tree.
//!
//! At a trading node the upper bound solves the one-step problem
//! `inf_h max_j (v_j - h * delta_j)` over the admissible holdings, where
//! `v_j` are the children's values. The function `g(h)` being minimised is
//! convex and piecewise linear with breakpoints at the edge slopes of the
//! upper concave hull of the points `(delta_j, v_j)`, so the exact optimum
//! lies among a handful of candidates. Once the horizon is reached no more
//! trading happens and the node takes the largest payoff in its subtree.
//!
//! Lower bounds are `lower(Z) = -upper(-Z)`.

use serde::{Serialize, Serializer};

use crate::analysis::{classify_node, NodeClass};
use crate::error::{Error, Result};
use crate::market::{Market, Portfolio, PortfolioConstraint};
use crate::payoff::Payoff;
use crate::scalar::Scalar;
use crate::tree::{NodeId, StoppingTime, TrajectoryTree};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalMinmaxResult<T> {
    /// `inf_h max_j (values_j - h * deltas_j)`; `-inf` when unbounded below.
    pub value: T,
    /// Minimiser with the smallest magnitude, ties to the smaller value.
    pub optimal_h: Option<T>,
    /// Indices attaining the max at `optimal_h`.
    pub active: Vec<usize>,
}

fn tolerance<T: Scalar>(scale: T) -> T {
    T::tie_eps() * (T::one() + scale.abs())
}

/// Prefers smaller `|h|`, then smaller `h`.
fn closer_to_zero<T: Scalar>(a: T, b: T) -> bool {
    a.abs() < b.abs() || (a.abs() == b.abs() && a < b)
}

/// Upper concave hull of points sorted by abscissa with distinct
/// abscissae.
fn upper_hull<T: Scalar>(pts: &[(T, T)]) -> Vec<(T, T)> {
    let mut hull: Vec<(T, T)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= T::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

pub fn solve_local_minmax<T: Scalar>(
    deltas: &[T],
    values: &[T],
    constraint: &PortfolioConstraint<T>,
) -> Result<LocalMinmaxResult<T>> {
    if deltas.len() != values.len() {
        return Err(Error::LengthMismatch(deltas.len(), values.len()));
    }
    if deltas.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.iter().any(|&v| v == T::infinity()) {
        return Ok(LocalMinmaxResult {
            value: T::infinity(),
            optimal_h: Some(T::zero()),
            active: (0..values.len()).filter(|&j| values[j] == T::infinity()).collect(),
        });
    }
    let mut pts: Vec<(T, T)> = deltas
        .iter()
        .zip(values)
        .filter(|(_, v)| v.is_finite())
        .map(|(&d, &v)| (d, v))
        .collect();
    let unbounded = LocalMinmaxResult {
        value: T::neg_infinity(),
        optimal_h: None,
        active: Vec::new(),
    };
    if pts.is_empty() {
        return Ok(unbounded);
    }
    pts.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite deltas")
            .then(b.1.partial_cmp(&a.1).unwrap())
    });
    pts.dedup_by(|later, earlier| later.0 == earlier.0);
    let hull = upper_hull(&pts);
    let slopes: Vec<T> = hull.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();

    let zero = T::zero();
    let mut candidates = vec![zero];
    match *constraint {
        PortfolioConstraint::Unconstrained => {
            if pts[0].0 > zero || pts[pts.len() - 1].0 < zero {
                return Ok(unbounded);
            }
            candidates.extend(&slopes);
        }
        PortfolioConstraint::Interval { lo, hi } => {
            candidates.extend([lo, hi]);
            candidates.extend(slopes.iter().filter(|&&s| lo <= s && s <= hi));
        }
        PortfolioConstraint::Grid { tick, .. } => {
            let m = T::of(constraint.grid_steps().unwrap_or(0) as f64);
            candidates.extend([m * tick, -m * tick]);
            for &s in &slopes {
                let k = s / tick;
                for g in [k.floor(), k.ceil()] {
                    candidates.push(g.max(-m).min(m) * tick);
                }
            }
        }
    }

    let g = |h: T| pts.iter().map(|&(d, v)| v - h * d).fold(T::neg_infinity(), T::max);
    let evaluated: Vec<(T, T)> = candidates.into_iter().map(|h| (h, g(h))).collect();
    let best = evaluated.iter().map(|e| e.1).fold(T::infinity(), T::min);
    let scale = pts.iter().fold(best.abs(), |s, p| s.max(p.1.abs()));
    let tol = tolerance(scale);
    let (h, value) = evaluated
        .iter()
        .copied()
        .filter(|&(_, v)| v <= best + tol)
        .reduce(|a, b| if closer_to_zero(b.0, a.0) { b } else { a })
        .expect("at least one candidate");
    let active = (0..deltas.len())
        .filter(|&j| values[j].is_finite() && values[j] - h * deltas[j] >= value - tol)
        .collect();
    Ok(LocalMinmaxResult {
        value,
        optimal_h: Some(h),
        active,
    })
}

/// Upper bound and hedge over the subtree of `anchor` for leaf values `z`
/// (indexed by leaf id).
struct Induction<T> {
    values: Vec<T>,
    holdings: Vec<Option<T>>,
}

fn subtree_nodes<T: Scalar>(tree: &TrajectoryTree<T>, anchor: NodeId) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![anchor];
    while let Some(n) = stack.pop() {
        out.push(n);
        stack.extend(tree.children(n));
    }
    out.sort_unstable();
    out
}

fn induction<T: Scalar>(market: &Market<T>, z: &[T], anchor: NodeId, active: &[bool]) -> Result<Induction<T>> {
    let tree = &market.tree;
    let mut values = vec![T::nan(); tree.len()];
    let mut holdings = vec![None; tree.len()];
    for &n in subtree_nodes(tree, anchor).iter().rev() {
        let children = tree.children(n);
        if children.is_empty() {
            values[n] = z[n];
        } else if !active[n] {
            values[n] = children.iter().map(|&c| values[c]).fold(T::neg_infinity(), T::max);
        } else {
            let s = tree.price(n);
            let deltas: Vec<T> = children.iter().map(|&c| tree.price(c) - s).collect();
            let vals: Vec<T> = children.iter().map(|&c| values[c]).collect();
            let r = solve_local_minmax(&deltas, &vals, &market.constraint)?;
            values[n] = r.value;
            holdings[n] = r.optimal_h;
        }
    }
    Ok(Induction { values, holdings })
}

fn leaf_values<T: Scalar>(tree: &TrajectoryTree<T>, payoff: &Payoff<T>, anchor: NodeId) -> Vec<T> {
    let mut z = vec![T::nan(); tree.len()];
    for path in tree.paths_from(anchor) {
        let leaf = *path.last().expect("non-empty path");
        let full = [tree.path_to(anchor), path[1..].to_vec()].concat();
        z[leaf] = payoff.eval(tree, &full);
    }
    z
}

fn serialize_extended<S: Serializer, T: Scalar>(x: &T, s: S) -> std::result::Result<S::Ok, S::Error> {
    let x = x.as_f64();
    if x == f64::INFINITY {
        s.serialize_str("+inf")
    } else if x == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PriceBounds<T: Scalar> {
    #[serde(serialize_with = "serialize_extended")]
    pub lower: T,
    #[serde(serialize_with = "serialize_extended")]
    pub upper: T,
    #[serde(skip)]
    pub upper_hedge: Portfolio<T>,
    #[serde(skip)]
    pub lower_hedge: Portfolio<T>,
    pub anchor: NodeId,
    pub depth: usize,
}

impl<T: Scalar> PriceBounds<T> {
    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Upper and lower minmax bounds of `payoff` conditioned on `anchor`.
pub fn price_bounds<T: Scalar>(market: &Market<T>, payoff: &Payoff<T>, anchor: NodeId) -> Result<PriceBounds<T>> {
    market.validate()?;
    let tree = &market.tree;
    let depth = tree.node(anchor)?.depth;
    let active = market.active_mask();
    let z = leaf_values(tree, payoff, anchor);
    let neg: Vec<T> = z.iter().map(|&v| -v).collect();
    let up = induction(market, &z, anchor, &active)?;
    let down = induction(market, &neg, anchor, &active)?;

    let hedge = |v0: T, holdings: Vec<T>| Portfolio {
        v0,
        holdings,
        horizon: market.horizon.clone().into(),
        liquidated: market.liquidation,
    };
    let upper = up.values[anchor];
    let lower = -down.values[anchor];
    Ok(PriceBounds {
        lower,
        upper,
        upper_hedge: hedge(upper, up.holdings.iter().map(|h| h.unwrap_or_else(T::zero)).collect()),
        lower_hedge: hedge(
            lower,
            down.holdings
                .iter()
                .map(|h| T::zero() - h.unwrap_or_else(T::zero))
                .collect(),
        ),
        anchor,
        depth,
    })
}

/// Evenly spaced holdings `lo, lo + step, ..., hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HGrid<T> {
    pub lo: T,
    pub hi: T,
    pub step: T,
}

impl<T: Scalar> HGrid<T> {
    pub fn points(&self) -> Result<Vec<T>> {
        if !(self.step > T::zero()) || self.hi < self.lo {
            return Err(Error::InvalidConfig(format!(
                "holding grid needs step > 0 and lo <= hi (got {:?})",
                (self.lo, self.hi, self.step)
            )));
        }
        let n = ((self.hi - self.lo) / self.step + T::tie_eps())
            .floor()
            .to_usize()
            .unwrap_or(0);
        Ok((0..=n).map(|k| self.lo + T::of(k as f64) * self.step).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BruteForceBounds<T> {
    pub lower: T,
    pub upper: T,
    /// Number of portfolios evaluated.
    pub portfolios: u64,
    /// `(step / 2) * max_S sum_i |Delta_i|`: distance of the grid optimum
    /// from the continuous one when the latter lies inside the grid range.
    pub error_bound: T,
}

/// Root bounds by enumerating every grid portfolio over the trading nodes
/// and evaluating all trajectories directly.
pub fn brute_force_bounds<T: Scalar>(
    market: &Market<T>,
    payoff: &Payoff<T>,
    grid: &HGrid<T>,
    budget: u64,
) -> Result<BruteForceBounds<T>> {
    market.validate()?;
    let tree = &market.tree;
    let active = market.active_mask();
    let points: Vec<T> = grid
        .points()?
        .into_iter()
        .filter(|&h| market.constraint.admits(h))
        .collect();
    if points.is_empty() {
        return Err(Error::InvalidConfig("no admissible holding on the grid".into()));
    }
    let trading: Vec<NodeId> = (0..tree.len()).filter(|&n| active[n] && !tree.is_terminal(n)).collect();
    let mut slot = vec![usize::MAX; tree.len()];
    for (i, &n) in trading.iter().enumerate() {
        slot[n] = i;
    }
    let total = (points.len() as u64)
        .checked_pow(trading.len() as u32)
        .filter(|&t| t <= budget)
        .ok_or(Error::BudgetExceeded(budget))?;

    struct Route<T> {
        steps: Vec<(usize, T)>,
        z: T,
    }
    let routes: Vec<Route<T>> = tree
        .paths()
        .into_iter()
        .map(|path| {
            let steps = (0..path.len() - 1)
                .filter(|&i| active[path[i]])
                .map(|i| (slot[path[i]], tree.price(path[i + 1]) - tree.price(path[i])))
                .collect();
            Route {
                steps,
                z: payoff.eval(tree, &path),
            }
        })
        .collect();
    let error_bound = routes
        .iter()
        .map(|r| r.steps.iter().fold(T::zero(), |a, s| a + s.1.abs()))
        .fold(T::zero(), T::max)
        * grid.step
        / T::of(2.0);

    let mut upper = T::infinity();
    let mut lower = T::neg_infinity();
    let mut idx = vec![0usize; trading.len()];
    for _ in 0..total {
        let h: Vec<T> = idx.iter().map(|&i| points[i]).collect();
        let mut worst_up = T::neg_infinity();
        let mut worst_down = T::infinity();
        for r in &routes {
            let gain = r.steps.iter().fold(T::zero(), |a, &(k, d)| a + h[k] * d);
            worst_up = worst_up.max(r.z - gain);
            worst_down = worst_down.min(r.z + gain);
        }
        upper = upper.min(worst_up);
        lower = lower.max(worst_down);
        for digit in idx.iter_mut() {
            *digit += 1;
            if *digit < points.len() {
                break;
            }
            *digit = 0;
        }
    }
    Ok(BruteForceBounds {
        lower,
        upper,
        portfolios: total,
        error_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MertonReport<T: Scalar> {
    pub strike: T,
    pub s0: T,
    /// `C_K(s0) = (s0 - K)^+`.
    pub intrinsic: T,
    #[serde(serialize_with = "serialize_extended")]
    pub lower: T,
    #[serde(serialize_with = "serialize_extended")]
    pub upper: T,
    pub buy_and_hold_admissible: bool,
    pub zero_neutral: bool,
    /// `(S_N - K)^+ <= S_N` on every trajectory.
    pub payoff_below_stock: bool,
    pub lower_bound_applicable: bool,
    pub lower_bound_holds: bool,
    pub upper_bound_applicable: bool,
    pub upper_bound_holds: bool,
    pub has_constant_trajectory: bool,
    pub lower_equals_intrinsic: bool,
}

/// Compares the minmax interval of a call struck at `strike`, exercised
/// at the market horizon, with the static bounds `(s0 - K)^+` and `s0`.
pub fn merton_check<T: Scalar>(market: &Market<T>, strike: T) -> Result<MertonReport<T>> {
    let tree = &market.tree;
    let call = Payoff::call_at(strike, market.horizon.clone());
    let b = price_bounds(market, &call, 0)?;
    let s0 = tree.s0();
    let intrinsic = (s0 - strike).max(T::zero());
    let active = market.active_mask();
    let zero_neutral = (0..tree.len())
        .filter(|&n| active[n] && !tree.is_terminal(n))
        .all(|n| classify_node(tree, n).map(NodeClass::is_zero_neutral).unwrap_or(true));
    let payoff_below_stock = tree.paths().iter().all(|p| {
        let s = tree.price(p[market.horizon.nu(tree, p)]);
        call.eval(tree, p) <= s
    });
    let buy_and_hold_admissible = market.constraint.admits(T::one());
    let tol = tolerance(s0.abs() + strike.abs());
    let lower_bound_applicable = zero_neutral && buy_and_hold_admissible;
    let upper_bound_applicable = payoff_below_stock && buy_and_hold_admissible;
    Ok(MertonReport {
        strike,
        s0,
        intrinsic,
        lower: b.lower,
        upper: b.upper,
        buy_and_hold_admissible,
        zero_neutral,
        payoff_below_stock,
        lower_bound_applicable,
        lower_bound_holds: intrinsic <= b.lower + tol,
        upper_bound_applicable,
        upper_bound_holds: b.upper <= s0 + tol,
        has_constant_trajectory: tree.has_constant_continuation(0),
        lower_equals_intrinsic: (b.lower - intrinsic).abs() <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

/// Claimed linear bound `Z(S) <= sum_i a_i S_{nu_i(S)} + b` (upper) or
/// `>=` (lower).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinmaxCertificate<T> {
    pub direction: Direction,
    pub coefficients: Vec<T>,
    pub times: Vec<StoppingTime>,
    pub b: T,
    pub verified: bool,
}

impl<T: Scalar> MinmaxCertificate<T> {
    pub fn new(direction: Direction, coefficients: Vec<T>, times: Vec<StoppingTime>, b: T) -> Self {
        MinmaxCertificate {
            direction,
            coefficients,
            times,
            b,
            verified: false,
        }
    }
}

/// Checks the certificate on every trajectory of the tree.
pub fn classify_payoff_minmax<T: Scalar>(
    tree: &TrajectoryTree<T>,
    payoff: &Payoff<T>,
    mut candidate: MinmaxCertificate<T>,
) -> MinmaxCertificate<T> {
    let well_formed = candidate.coefficients.len() == candidate.times.len()
        && candidate.times.iter().all(|t| t.validate(tree).is_ok());
    candidate.verified = well_formed
        && tree.paths().iter().all(|path| {
            let bound = candidate
                .coefficients
                .iter()
                .zip(&candidate.times)
                .fold(candidate.b, |acc, (&a, t)| acc + a * tree.price(path[t.nu(tree, path)]));
            let z = payoff.eval(tree, path);
            let tol = tolerance(bound.abs() + z.abs());
            match candidate.direction {
                Direction::Upper => z <= bound + tol,
                Direction::Lower => z >= bound - tol,
            }
        });
    candidate
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttainabilityReport<T> {
    /// Largest over-hedge of the upper hedge started at the upper bound.
    pub eps_up: T,
    /// Largest under-hedge of the lower hedge started at the lower bound.
    pub eps_down: T,
    pub attainable: bool,
    #[serde(skip)]
    pub replicating_hedge: Option<Portfolio<T>>,
    pub point_price: Option<T>,
    pub interval_length: T,
    /// The length bound needs the negated hedges to be admissible.
    pub length_bound_applicable: bool,
    pub length_bound_holds: bool,
}

/// Holdings that move the portfolio value exactly onto the upper values
/// of the children, where such a holding exists.
fn replicating_candidate<T: Scalar>(market: &Market<T>, values: &[T], active: &[bool]) -> Portfolio<T> {
    let tree = &market.tree;
    let mut holdings = vec![T::zero(); tree.len()];
    for n in (0..tree.len()).filter(|&n| active[n] && !tree.is_terminal(n)) {
        let s = tree.price(n);
        let steepest = tree.children(n).iter().copied().max_by(|&a, &b| {
            (tree.price(a) - s)
                .abs()
                .partial_cmp(&(tree.price(b) - s).abs())
                .expect("finite prices")
        });
        if let Some(c) = steepest {
            let d = tree.price(c) - s;
            if d != T::zero() {
                holdings[n] = (values[c] - values[n]) / d;
            }
        }
    }
    Portfolio {
        v0: values[0],
        holdings,
        horizon: market.horizon.clone().into(),
        liquidated: market.liquidation,
    }
}

/// Measures how far the root hedges are from replicating `payoff`.
///
/// The payoff counts as attainable when some admissible portfolio started
/// at the upper bound replicates it to within `tie_eps` of the payoff
/// scale. Where the minimising holding is not unique the tie-broken upper
/// hedge may only superhedge, so a replicating candidate built from the
/// upper values is tried first.
pub fn check_attainability<T: Scalar>(market: &Market<T>, payoff: &Payoff<T>) -> Result<AttainabilityReport<T>> {
    let b = price_bounds(market, payoff, 0)?;
    if !b.is_finite() {
        return Err(Error::UnboundedPayoff);
    }
    let tree = &market.tree;
    let active = market.active_mask();
    let z = leaf_values(tree, payoff, 0);
    let up = induction(market, &z, 0, &active)?;
    let candidate = replicating_candidate(market, &up.values, &active);

    let paths = tree.paths();
    let payoffs: Vec<T> = paths.iter().map(|p| payoff.eval(tree, p)).collect();
    let scale = payoffs
        .iter()
        .fold(b.upper.abs().max(b.lower.abs()), |m, z| m.max(z.abs()));
    let tol = tolerance(scale);
    let worst = |p: &Portfolio<T>, sign: T| {
        paths.iter().zip(&payoffs).fold(T::zero(), |m, (path, &zv)| {
            m.max(sign * (p.horizon_value(tree, path) - zv))
        })
    };
    let candidate_error = worst(&candidate, T::one()).max(worst(&candidate, -T::one()));
    let replicates = market.admits(&candidate) && candidate_error <= tol;

    let (eps_up, eps_down) = if replicates {
        (candidate_error, candidate_error)
    } else {
        (worst(&b.upper_hedge, T::one()), worst(&b.lower_hedge, -T::one()))
    };
    let interval_length = b.upper - b.lower;
    let attainable = replicates && interval_length.abs() <= tol;
    let negation_admissible =
        |p: &Portfolio<T>| (0..tree.len()).all(|n| !active[n] || market.constraint.admits(-p.holdings[n]));
    let length_bound_applicable = negation_admissible(&b.upper_hedge) && negation_admissible(&b.lower_hedge);
    Ok(AttainabilityReport {
        eps_up,
        eps_down,
        attainable,
        replicating_hedge: attainable.then_some(candidate),
        point_price: attainable.then_some(b.upper),
        interval_length,
        length_bound_applicable,
        length_bound_holds: interval_length <= eps_up.min(eps_down) + tol,
    })
}

/// Bounds report in the CLI's JSON shape.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    #[serde(serialize_with = "serialize_extended")]
    pub lower: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub upper: f64,
    pub anchor: NodeId,
    pub depth: usize,
    pub attainable: bool,
    pub eps_up: Option<f64>,
    pub eps_down: Option<f64>,
}

impl BoundsReport {
    pub fn new<T: Scalar>(bounds: &PriceBounds<T>, attainability: Option<&AttainabilityReport<T>>) -> Self {
        BoundsReport {
            lower: bounds.lower.as_f64(),
            upper: bounds.upper.as_f64(),
            anchor: bounds.anchor,
            depth: bounds.depth,
            attainable: attainability.is_some_and(|a| a.attainable),
            eps_up: attainability.map(|a| a.eps_up.as_f64()),
            eps_down: attainability.map(|a| a.eps_down.as_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::WValue;

    fn one_step(children: &[f64]) -> TrajectoryTree<f64> {
        let s: Vec<Vec<(f64, WValue)>> = children
            .iter()
            .map(|&c| vec![(1.0, WValue::Tick(0)), (c, WValue::Tick(1))])
            .collect();
        TrajectoryTree::build(&s).unwrap()
    }

    fn binomial2() -> TrajectoryTree<f64> {
        let s = |p: [f64; 3]| -> Vec<(f64, WValue)> {
            p.iter()
                .enumerate()
                .map(|(i, &x)| (x, WValue::Tick(i as i64)))
                .collect()
        };
        TrajectoryTree::build(&[
            s([100.0, 120.0, 144.0]),
            s([100.0, 120.0, 96.0]),
            s([100.0, 80.0, 96.0]),
            s([100.0, 80.0, 64.0]),
        ])
        .unwrap()
    }

    const FREE: PortfolioConstraint<f64> = PortfolioConstraint::Unconstrained;

    #[test]
    fn local_examples() {
        let r = solve_local_minmax(&[-0.1, 0.1], &[0.0, 0.1], &FREE).unwrap();
        assert!((r.value - 0.05).abs() < 1e-15);
        assert!((r.optimal_h.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.active, vec![0, 1]);

        let r = solve_local_minmax(&[-0.1, 0.0, 0.3], &[2.0, 2.0, 2.0], &FREE).unwrap();
        assert_eq!((r.value, r.optimal_h), (2.0, Some(0.0)));

        let r = solve_local_minmax(&[0.0, 0.1], &[0.0, 0.1], &FREE).unwrap();
        assert_eq!(r.value, 0.0);
        assert!((r.optimal_h.unwrap() - 1.0).abs() < 1e-12);

        let r = solve_local_minmax(&[0.05, 0.1], &[3.0, -1.0], &FREE).unwrap();
        assert_eq!((r.value, r.optimal_h), (f64::NEG_INFINITY, None));

        assert!(matches!(
            solve_local_minmax(&[0.1], &[], &FREE),
            Err(Error::LengthMismatch(1, 0))
        ));
        assert!(matches!(
            solve_local_minmax::<f64>(&[], &[], &FREE),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn local_constrained() {
        let iv = PortfolioConstraint::Interval { lo: -0.2f64, hi: 0.2 };
        let r = solve_local_minmax(&[-0.1, 0.1], &[0.0, 0.1], &iv).unwrap();
        // g(0.2) = max(0.02, 0.08)
        assert!((r.value - 0.08).abs() < 1e-15);
        assert_eq!(r.optimal_h, Some(0.2));
        let r = solve_local_minmax(&[0.05, 0.1], &[3.0, -1.0], &iv).unwrap();
        assert!(r.value.is_finite());

        let grid = PortfolioConstraint::Grid {
            tick: 0.3f64,
            bound: 1.0,
        };
        let r = solve_local_minmax(&[-0.1, 0.1], &[0.0, 0.1], &grid).unwrap();
        // h in {0.3, 0.6}: g = max(0.03, 0.07) or max(0.06, 0.04)
        assert!((r.value - 0.06).abs() < 1e-15);
        assert!((r.optimal_h.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn duplicate_deltas_keep_max() {
        let r = solve_local_minmax(&[-0.1, 0.1, 0.1], &[0.0, 0.05, 0.1], &FREE).unwrap();
        assert!((r.value - 0.05).abs() < 1e-15);
    }

    #[test]
    fn trinomial_call() {
        let m = Market::new(one_step(&[0.9, 1.0, 1.1]));
        let b = price_bounds(&m, &Payoff::call(1.0), 0).unwrap();
        assert!((b.upper - 0.05).abs() < 1e-12);
        assert!(b.lower.abs() < 1e-12);
        let bf = brute_force_bounds(
            &m,
            &Payoff::call(1.0),
            &HGrid {
                lo: -2.0,
                hi: 2.0,
                step: 0.01,
            },
            10_000,
        )
        .unwrap();
        assert!((bf.upper - 0.05).abs() < 1e-3 && bf.lower.abs() < 1e-3);
        let a = check_attainability(&m, &Payoff::call(1.0)).unwrap();
        assert!(!a.attainable && a.eps_up > 0.0);
    }

    #[test]
    fn binomial_replication() {
        let m = Market::new(binomial2());
        let b = price_bounds(&m, &Payoff::call(100.0), 0).unwrap();
        assert!((b.upper - 11.0).abs() < 1e-10 && (b.lower - 11.0).abs() < 1e-10);
        let a = check_attainability(&m, &Payoff::call(100.0)).unwrap();
        assert!(a.attainable);
        assert!((a.point_price.unwrap() - 11.0).abs() < 1e-10);
    }

    #[test]
    fn stopped_horizon_takes_subtree_extremes() {
        let m = Market::new(binomial2()).with_horizon(StoppingTime::fixed(1));
        let z = Payoff::call(100.0);
        let b = price_bounds(&m, &z, 0).unwrap();
        // horizon values: up node max(44, 0) = 44, down node 0; one step
        // from 100 to {120, 80}: h = 44/40, value 22
        assert!((b.upper - 22.0).abs() < 1e-12);
        // lower: min(44,0)=0 at up, 0 at down
        assert!(b.lower.abs() < 1e-12);
    }

    #[test]
    fn conditional_anchor() {
        let t = binomial2();
        let up = t.children(0)[0];
        let b = price_bounds(&Market::new(t), &Payoff::call(100.0), up).unwrap();
        assert!((b.upper - 22.0).abs() < 1e-12);
        assert_eq!(b.depth, 1);
    }

    #[test]
    fn unbounded_report() {
        let m = Market::new(one_step(&[1.05, 1.1]));
        let b = price_bounds(&m, &Payoff::call(1.0), 0).unwrap();
        assert_eq!(b.upper, f64::NEG_INFINITY);
        assert_eq!(b.lower, f64::INFINITY);
        assert!(matches!(
            check_attainability(&m, &Payoff::call(1.0)),
            Err(Error::UnboundedPayoff)
        ));
        let json = serde_json::to_value(BoundsReport::new(&b, None)).unwrap();
        assert_eq!(json["upper"], "-inf");
        assert_eq!(json["lower"], "+inf");
    }

    #[test]
    fn certificates() {
        let t = binomial2();
        let upper = |a: Vec<f64>, times, b| MinmaxCertificate::new(Direction::Upper, a, times, b);
        let c = classify_payoff_minmax(
            &t,
            &Payoff::call(100.0),
            upper(vec![1.0], vec![StoppingTime::Terminal], 0.0),
        );
        assert!(c.verified);
        let c = classify_payoff_minmax(
            &t,
            &Payoff::put(100.0),
            upper(vec![0.0], vec![StoppingTime::Terminal], 100.0),
        );
        assert!(c.verified);
        let times = vec![StoppingTime::fixed(1), StoppingTime::fixed(2)];
        let c = classify_payoff_minmax(
            &t,
            &Payoff::asian(times.clone()),
            upper(vec![0.5, 0.5], times.clone(), 0.0),
        );
        assert!(c.verified);
        let c = classify_payoff_minmax(
            &t,
            &Payoff::call(100.0),
            upper(vec![0.0], vec![StoppingTime::Terminal], 10.0),
        );
        assert!(!c.verified);
    }

    #[test]
    fn merton() {
        let t = TrajectoryTree::build(&[
            vec![(1.0, WValue::Tick(0)), (1.0, WValue::Tick(1))],
            vec![(1.0, WValue::Tick(0)), (1.2, WValue::Tick(1))],
            vec![(1.0, WValue::Tick(0)), (0.8, WValue::Tick(1))],
        ])
        .unwrap();
        let r = merton_check(&Market::new(t), 0.9).unwrap();
        assert!(r.has_constant_trajectory && r.lower_equals_intrinsic);
        assert!(r.lower_bound_holds && r.upper_bound_holds);
    }
}
