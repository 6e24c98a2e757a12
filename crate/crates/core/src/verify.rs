//! Seeded property suites over random instances.
//!
//! Every case draws its instance from its own ChaCha stream, so a case can
//! be replayed from `(seed, case)` alone. Failing cases carry the tree
//! they ran on.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{classify_tree, find_contrarian, verify_debt_limited};
use crate::arbitrage::{find_arbitrage_strategy, ArbitrageOutcome, ArbitrageSearch};
use crate::error::{Error, Result};
use crate::generators::{enumerate_grid_set, GridConfig};
use crate::io::TreeDoc;
use crate::market::{DebtLimitConfig, Market, PortfolioConstraint};
use crate::martingale::{
    attached_probabilities, expectation, is_martingale_measure, random_equivalent_measure, sample_martingale_set,
    MartingaleModel, MartingaleSamplerConfig, SamplingTimes,
};
use crate::payoff::Payoff;
use crate::pricing::{brute_force_bounds, merton_check, price_bounds, HGrid};
use crate::random::{
    random_grid_portfolio, random_payoff, random_stopping_time, random_table_payoff, random_tree, RandomTreeConfig,
    TreeKind,
};
use crate::scalar::near;
use crate::tree::{stopped_tree, StoppingTime, TrajectoryTree};

type Tree = TrajectoryTree<f64>;
type Check = std::result::Result<(), String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Duality,
    Interval,
    Contrarian,
    OptionalSampling,
    Merton,
    MartingaleSandwich,
    DebtLimit,
    FastTrends,
    OracleAgreement,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Duality,
        Suite::Interval,
        Suite::Contrarian,
        Suite::OptionalSampling,
        Suite::Merton,
        Suite::MartingaleSandwich,
        Suite::DebtLimit,
        Suite::FastTrends,
        Suite::OracleAgreement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Duality => "duality",
            Suite::Interval => "interval",
            Suite::Contrarian => "contrarian",
            Suite::OptionalSampling => "optional-sampling",
            Suite::Merton => "merton",
            Suite::MartingaleSandwich => "martingale-sandwich",
            Suite::DebtLimit => "debt-limit",
            Suite::FastTrends => "fast-trends",
            Suite::OracleAgreement => "oracle-agreement",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub cases: usize,
    /// Largest tree depth drawn by the suite.
    pub depth: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            seed: 0,
            cases: 100,
            depth: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseResult {
    pub case: usize,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<TreeDoc<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
    pub results: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }
}

/// Random stream of case `case` under `seed`.
pub fn case_rng(seed: u64, case: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(case as u64);
    rng
}

pub fn run_suite(suite: Suite, opts: &SuiteOptions) -> Result<SuiteReport> {
    if opts.depth == 0 {
        return Err(Error::InvalidConfig("suite depth must be at least 1".into()));
    }
    let case_fn: fn(&mut ChaCha8Rng, &SuiteOptions) -> (Tree, Check) = match suite {
        Suite::Duality => duality_case,
        Suite::Interval => interval_case,
        Suite::Contrarian => contrarian_case,
        Suite::OptionalSampling => optional_sampling_case,
        Suite::Merton => merton_case,
        Suite::MartingaleSandwich => martingale_sandwich_case,
        Suite::DebtLimit => debt_limit_case,
        Suite::FastTrends => fast_trends_case,
        Suite::OracleAgreement => oracle_agreement_case,
    };
    let results: Vec<CaseResult> = (0..opts.cases)
        .map(|case| {
            let (tree, check) = case_fn(&mut case_rng(opts.seed, case), opts);
            match check {
                Ok(()) => CaseResult {
                    case,
                    passed: true,
                    detail: None,
                    counterexample: None,
                },
                Err(detail) => CaseResult {
                    case,
                    passed: false,
                    detail: Some(detail),
                    counterexample: Some(TreeDoc::from_tree(&tree)),
                },
            }
        })
        .collect();
    let passed = results.iter().filter(|r| r.passed).count();
    Ok(SuiteReport {
        suite,
        seed: opts.seed,
        cases: opts.cases,
        passed,
        failed: results.len() - passed,
        results,
    })
}

fn lib<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `a <= b` up to rounding, with infinities compared exactly.
fn le(a: f64, b: f64) -> bool {
    a <= b || near(a, b, a.abs().max(b.abs()))
}

fn tree_of(kind: TreeKind, opts: &SuiteOptions, rng: &mut ChaCha8Rng) -> Tree {
    let depth = rng.gen_range(1..=opts.depth);
    random_tree(&RandomTreeConfig::new(kind, depth, 4), rng)
}

fn random_constraint(rng: &mut ChaCha8Rng) -> PortfolioConstraint<f64> {
    match rng.gen_range(0..3) {
        0 => PortfolioConstraint::Unconstrained,
        1 => PortfolioConstraint::Interval {
            lo: -rng.gen_range(0.0..3.0),
            hi: rng.gen_range(0.0..3.0),
        },
        _ => PortfolioConstraint::Grid { tick: 0.5, bound: 2.0 },
    }
}

fn duality_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let tree = tree_of(TreeKind::Any, opts, rng);
    let mut market = Market::new(tree.clone()).with_constraint(random_constraint(rng));
    if rng.gen_bool(0.3) {
        market = market.with_horizon(random_stopping_time(&tree, rng));
    }
    let z = random_payoff(&tree, rng);
    let bump = random_table_payoff(&tree, rng);
    let check = (|| {
        let b = lib(price_bounds(&market, &z, 0))?;
        let neg = lib(price_bounds(&market, &z.neg(), 0))?;
        ensure(b.lower == -neg.upper && b.upper == -neg.lower, || {
            format!(
                "{}: [{}, {}] but -upper(-Z) = {}",
                z.label, b.lower, b.upper, -neg.upper
            )
        })?;
        let larger = z.add(&Payoff::custom("bump", move |t, p| bump.eval(t, p).abs()));
        let b2 = lib(price_bounds(&market, &larger, 0))?;
        ensure(le(b.upper, b2.upper) && le(b.lower, b2.lower), || {
            format!(
                "monotonicity: [{}, {}] for Z, [{}, {}] for Z + bump",
                b.lower, b.upper, b2.lower, b2.upper
            )
        })
    })();
    (tree, check)
}

fn interval_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let tree = tree_of(TreeKind::ZeroNeutral, opts, rng);
    let market = Market::new(tree.clone());
    let k = tree.s0() * rng.gen_range(0.9..1.1);
    let payoffs = [
        Payoff::call(k),
        Payoff::put(k),
        Payoff::asian(Vec::new()),
        Payoff::lookback_max(1.0, -tree.s0(), Vec::new()),
    ];
    let check = payoffs.iter().try_for_each(|z| {
        let b = lib(price_bounds(&market, z, 0))?;
        ensure(b.is_finite() && le(b.lower, b.upper), || {
            format!("{}: lower {} > upper {}", z.label, b.lower, b.upper)
        })
    });
    (tree, check)
}

fn contrarian_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let tree = tree_of(TreeKind::ZeroNeutral, opts, rng);
    let p = random_grid_portfolio(&tree, 0.5, 4, rng);
    let check = [1.0, 1e-3].into_iter().try_for_each(|eps| {
        let r =
            lib(find_contrarian(&tree, &p, 0, eps))?.ok_or_else(|| format!("no contrarian path for eps = {eps}"))?;
        let leaf = *r.path.last().expect("non-empty path");
        ensure(r.path[0] == 0 && tree.is_terminal(leaf), || {
            format!("path {:?} is not root to leaf", r.path)
        })?;
        let gain = lib(p.gains(&tree, &r.path, 0, r.path.len() - 1))?;
        ensure(near(gain, r.achieved_gain, gain.abs()) && r.achieved_gain < eps, || {
            format!("eps = {eps}: gain {} (recomputed {gain})", r.achieved_gain)
        })?;
        r.step_gains.iter().enumerate().try_for_each(|(i, &g)| {
            let cap = eps / 2f64.powi(i as i32 + 1);
            ensure(g <= cap, || format!("eps = {eps}: step {i} gains {g} > {cap}"))
        })
    });
    (tree, check)
}

fn optional_sampling_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let kind = if rng.gen_bool(0.5) {
        TreeKind::ArbitrageFree
    } else {
        TreeKind::ZeroNeutral
    };
    let tree = tree_of(kind, opts, rng);
    let nu = random_stopping_time(&tree, rng);
    let check = (|| {
        let before = classify_tree(&tree);
        let stopped = lib(stopped_tree(&tree, &nu))?;
        let after = classify_tree(&stopped.tree);
        ensure(!before.locally_0_neutral || after.locally_0_neutral, || {
            format!("stopping at {nu:?} broke local 0-neutrality")
        })?;
        ensure(!before.locally_arbitrage_free || after.locally_arbitrage_free, || {
            format!("stopping at {nu:?} broke local arbitrage-freeness")
        })?;
        let original = tree.sequences();
        stopped.tree.sequences().iter().try_for_each(|s| {
            ensure(original.iter().any(|o| o.starts_with(s)), || {
                format!("stopped trajectory {s:?} is not a prefix of an input trajectory")
            })
        })
    })();
    (tree, check)
}

fn small_grid_config(rng: &mut ChaCha8Rng) -> GridConfig<f64> {
    let n2 = rng.gen_range(2..=3);
    GridConfig {
        s0: 1.0,
        delta: 0.1,
        beta: 0.1,
        p: rng.gen_range(1..=2),
        c: None,
        n1: rng.gen_range(1..=3),
        n2,
        lambda: [n2].into(),
    }
}

fn merton_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let tree = if rng.gen_bool(0.5) {
        match enumerate_grid_set(&small_grid_config(rng), 100_000) {
            Ok(t) => t,
            Err(e) => return (Tree::singleton(1.0, Default::default()), Err(e.to_string())),
        }
    } else {
        tree_of(TreeKind::ZeroNeutral, opts, rng)
    };
    let strike = tree.s0() * rng.gen_range(0.8..1.2);
    let market = Market::new(tree.clone());
    let check = (|| {
        let r = lib(merton_check(&market, strike))?;
        ensure(r.lower_bound_applicable && r.lower_bound_holds, || {
            format!("K = {strike}: intrinsic {} above lower {}", r.intrinsic, r.lower)
        })?;
        ensure(r.upper_bound_applicable && r.upper_bound_holds, || {
            format!("K = {strike}: upper {} above s0 {}", r.upper, r.s0)
        })?;
        ensure(!r.has_constant_trajectory || r.lower_equals_intrinsic, || {
            format!(
                "K = {strike}: constant trajectory but lower {} != {}",
                r.lower, r.intrinsic
            )
        })
    })();
    (tree, check)
}

/// Draws a trinomial model, enumerates it and checks `lower <= E_Q[Z] <= upper`
/// for the attached measure and `measures` random equivalent ones.
fn sandwich_check(rng: &mut ChaCha8Rng, max_steps: usize, measures: usize) -> (Tree, Check) {
    let cfg = MartingaleSamplerConfig {
        model: MartingaleModel::Trinomial {
            s0: 100.0,
            u: rng.gen_range(1.05..1.3),
            d: rng.gen_range(0.75..0.95),
            p_mid: rng.gen_range(0.0..0.5),
        },
        horizon: rng.gen_range(1..=max_steps.max(1)),
        sampling: SamplingTimes::EveryStep,
        n_paths: 0,
        seed: 0,
        exhaustive: true,
    };
    let tree = match sample_martingale_set(&cfg) {
        Ok(t) => t,
        Err(e) => return (Tree::singleton(100.0, Default::default()), Err(e.to_string())),
    };
    let z = Payoff::call(100.0 * rng.gen_range(0.85..1.15));
    let check = (|| {
        let b = lib(price_bounds(&Market::new(tree.clone()), &z, 0))?;
        let mut qs = vec![lib(attached_probabilities(&tree))?];
        for _ in 0..measures {
            qs.push(lib(random_equivalent_measure(&tree, rng))?);
        }
        qs.iter().enumerate().try_for_each(|(i, q)| {
            ensure(is_martingale_measure(&tree, q), || {
                format!("measure {i} is not a martingale measure")
            })?;
            let e = lib(expectation(&tree, &z, q))?;
            ensure(le(b.lower, e) && le(e, b.upper), || {
                format!("measure {i}: E_Q[Z] = {e} outside [{}, {}]", b.lower, b.upper)
            })
        })
    })();
    (tree, check)
}

fn martingale_sandwich_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    sandwich_check(rng, opts.depth.min(6), 10)
}

/// Random debt-limited instance: tick tree with at most two special nodes
/// per path, integer holdings and the smallest credit limit they respect.
fn debt_limit_check(rng: &mut ChaCha8Rng, depth: usize) -> (Tree, Check) {
    let mut cfg = RandomTreeConfig::new(TreeKind::ZeroNeutral, rng.gen_range(1..=depth), 3);
    cfg.max_special_per_path = Some(2);
    let tree: Tree = random_tree(&cfg, rng);
    let p = random_grid_portfolio(&tree, 1.0, 3, rng);
    let check = (|| {
        let mut a: f64 = 0.0;
        for path in tree.paths() {
            for i in 0..path.len() {
                a = a.max(-lib(p.value_at(&tree, &path, i))?);
            }
        }
        let limits = DebtLimitConfig {
            a,
            delta: cfg.tick,
            m_hat: 2,
        };
        let r = lib(verify_debt_limited(&Market::new(tree.clone()), &limits, &p, 0))?;
        r.step_gains
            .iter()
            .enumerate()
            .try_for_each(|(i, &g)| ensure(g <= 0.0, || format!("step {i} of the contrarian path gains {g}")))
    })();
    (tree, check)
}

fn debt_limit_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    debt_limit_check(rng, opts.depth)
}

/// Rebalancing every two steps: `0, 2, 4, ...` up to `depth`.
pub fn every_other_step(depth: usize) -> Vec<StoppingTime> {
    (0..=depth).step_by(2).map(StoppingTime::fixed).collect()
}

fn fast_trends_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    let depth = 2 * rng.gen_range(1..=(opts.depth / 2).max(1));
    let tree: Tree = random_tree(&RandomTreeConfig::new(TreeKind::FastTrends, depth, 3), rng);
    let market = Market::new(tree.clone());
    let check = (|| {
        let out = lib(find_arbitrage_strategy(
            &market,
            &ArbitrageSearch::paired(u64::MAX, every_other_step(depth)),
        ))?;
        match out {
            ArbitrageOutcome::None { .. } => Ok(()),
            ArbitrageOutcome::Found(w) => Err(format!(
                "paired arbitrage at node {} with holding {}",
                w.node, w.holding
            )),
            ArbitrageOutcome::Unknown { .. } => Err("search did not complete".into()),
        }
    })();
    (tree, check)
}

fn oracle_agreement_case(rng: &mut ChaCha8Rng, opts: &SuiteOptions) -> (Tree, Check) {
    const MAX_TRADING_NODES: usize = 6;
    let mut cfg = RandomTreeConfig::new(TreeKind::Any, opts.depth, 2);
    cfg.stop_prob = 0.3;
    let mut tree: Tree = random_tree(&cfg, rng);
    let trading = |t: &Tree| (0..t.len()).filter(|&n| !t.is_terminal(n)).count();
    while trading(&tree) > MAX_TRADING_NODES {
        cfg.max_nodes = cfg.max_nodes.min(tree.len()).saturating_sub(1).max(2);
        tree = random_tree(&cfg, rng);
    }
    let z = random_payoff(&tree, rng);
    let market = Market::new(tree.clone()).with_constraint(PortfolioConstraint::Interval { lo: -2.0, hi: 2.0 });
    let grid = HGrid {
        lo: -2.0,
        hi: 2.0,
        step: 1.0,
    };
    let check = (|| {
        let dp = lib(price_bounds(&market, &z, 0))?;
        let bf = lib(brute_force_bounds(&market, &z, &grid, 1_000_000))?;
        let slack = bf.error_bound;
        ensure(le(dp.upper, bf.upper) && le(bf.upper, dp.upper + slack), || {
            format!("upper: dp {} vs grid {} (bound {slack})", dp.upper, bf.upper)
        })?;
        ensure(le(bf.lower, dp.lower) && le(dp.lower - slack, bf.lower), || {
            format!("lower: dp {} vs grid {} (bound {slack})", dp.lower, bf.lower)
        })
    })();
    (tree, check)
}
