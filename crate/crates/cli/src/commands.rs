use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde_json::{json, Value};
use trajpace_core::analysis::{classify_tree, find_contrarian, verify_debt_limited};
use trajpace_core::arbitrage::{find_arbitrage_strategy, ArbitrageOutcome, ArbitrageSearch};
use trajpace_core::generators::{
    build_bjn_set, enumerate_grid_set, ingest_chart, sample_grid_set, validate_grid_path, ChartSeries, WRule,
};
use trajpace_core::io::{tree_to_json, TreeDoc};
use trajpace_core::martingale::sample_martingale_set;
use trajpace_core::pricing::{check_attainability, price_bounds, BoundsReport};
use trajpace_core::tree::stopped_tree;
use trajpace_core::verify::{run_suite, Suite, SuiteOptions};
use trajpace_core::{GridConfig, Market, MartingaleSamplerConfig, Payoff, Portfolio, Tree, WValue};

use crate::args::*;
use crate::inputs::Inputs;

/// Results of one command and whether they count as success.
pub struct Output {
    pub results: Value,
    pub ok: bool,
}

impl Output {
    fn ok(results: Value) -> Self {
        Output { results, ok: true }
    }
}

pub struct Env<'a> {
    pub inputs: &'a mut Inputs,
    pub node_budget: usize,
}

pub fn run(command: &Command, cx: &mut Env) -> anyhow::Result<Output> {
    match command {
        Command::Build(a) => build(a, cx),
        Command::Sample(a) => sample(a, cx),
        Command::Ingest(a) => ingest(a, cx),
        Command::Classify(a) => classify(a, cx),
        Command::Price(a) => price(a, cx),
        Command::Hedge(a) => hedge(a, cx),
        Command::Contrarian(a) => contrarian(a, cx),
        Command::Arbitrage(a) => arbitrage(a, cx),
        Command::Stopped(a) => stopped(a, cx),
        Command::Verify(a) => verify(a),
        Command::SampleMart(a) => sample_mart(a, cx),
    }
}

fn summary(tree: &Tree) -> Value {
    json!({
        "nodes": tree.len(),
        "leaves": tree.leaf_count(),
        "max_depth": tree.max_depth(),
        "s0": tree.s0(),
    })
}

fn write_paths_csv(tree: &Tree, path: &Path) -> anyhow::Result<()> {
    let mut out = String::from("path,depth,price\n");
    for (i, p) in tree.paths().iter().enumerate() {
        for &n in p {
            writeln!(out, "{i},{},{}", tree.depth(n), tree.price(n)).expect("write to string");
        }
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes the requested tree artifacts and returns the summary, with the
/// full tree inlined when no `--tree-out` was given.
fn emit_tree(tree: &Tree, output: &TreeOutput) -> anyhow::Result<Value> {
    let mut v = summary(tree);
    match &output.tree_out {
        Some(path) => {
            fs::write(path, tree_to_json(tree)?).with_context(|| format!("cannot write {}", path.display()))?;
            v["tree_out"] = json!(path.display().to_string());
        }
        None => v["tree"] = serde_json::to_value(TreeDoc::from_tree(tree))?,
    }
    if let Some(path) = &output.emit_paths {
        write_paths_csv(tree, path)?;
        v["paths_csv"] = json!(path.display().to_string());
    }
    Ok(v)
}

fn grid_config(path: &Path, cx: &mut Env) -> anyhow::Result<GridConfig> {
    let cfg: GridConfig = cx.inputs.json(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn build(a: &BuildArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let (tree, warnings) = match (&a.config, &a.sequences) {
        (Some(path), _) => {
            let cfg = grid_config(path, cx)?;
            let tree = if a.bjn {
                build_bjn_set(&cfg, cx.node_budget)?
            } else {
                enumerate_grid_set(&cfg, cx.node_budget)?
            };
            (tree, cfg.warnings())
        }
        (None, Some(path)) => {
            let seqs: Vec<Vec<(f64, WValue)>> = cx.inputs.json(path)?;
            (Tree::build(&seqs)?, Vec::new())
        }
        (None, None) => bail!("build needs --config or --sequences"),
    };
    let mut v = emit_tree(&tree, &a.output)?;
    v["warnings"] = json!(warnings);
    Ok(Output::ok(v))
}

fn sample(a: &SampleArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let cfg = grid_config(&a.config, cx)?;
    let tree = sample_grid_set(&cfg, a.n, a.seed)?;
    let mut v = emit_tree(&tree, &a.output)?;
    v["seed"] = json!(a.seed);
    v["requested"] = json!(a.n);
    v["warnings"] = json!(cfg.warnings());
    Ok(Output::ok(v))
}

fn ingest(a: &IngestArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let cfg = grid_config(&a.config, cx)?;
    let text = cx.inputs.read(&a.chart)?;
    let series = ChartSeries::from_csv(text.as_bytes(), a.log_values)?;
    let chart = ingest_chart(&series, &cfg)?;
    let check = validate_grid_path(&cfg, &chart.trajectory, WRule::QuadraticVariation, false).err();
    let tree = Tree::build(std::slice::from_ref(&chart.trajectory))?;
    let mut v = emit_tree(&tree, &a.output)?;
    v["chart"] = serde_json::to_value(&chart)?;
    v["path_violation"] = json!(check);
    Ok(Output::ok(v))
}

fn classify(a: &TreeArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let tree = cx.inputs.tree(&a.tree)?;
    Ok(Output::ok(serde_json::to_value(classify_tree(&tree))?))
}

fn market(a: &MarketArgs, cx: &mut Env) -> anyhow::Result<(Market, Payoff)> {
    let tree = cx.inputs.tree(&a.tree)?;
    let payoff = Payoff::parse(&a.payoff)?;
    let horizon = parse_horizon(&a.horizon, cx.inputs)?;
    let market = Market::new(tree)
        .with_constraint(parse_constraint(&a.constraint)?)
        .with_horizon(horizon)
        .with_liquidation(a.liquidate);
    market.validate()?;
    Ok((market, payoff))
}

fn price(a: &PriceArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let (market, payoff) = market(&a.market, cx)?;
    let bounds = price_bounds(&market, &payoff, a.anchor)?;
    let attainability = if a.anchor == 0 && bounds.is_finite() {
        Some(check_attainability(&market, &payoff)?)
    } else {
        None
    };
    let mut v = serde_json::to_value(BoundsReport::new(&bounds, attainability.as_ref()))?;
    if let Some(at) = &attainability {
        v["interval_length"] = json!(at.interval_length);
        v["length_bound_applicable"] = json!(at.length_bound_applicable);
        v["length_bound_holds"] = json!(at.length_bound_holds);
    }
    Ok(Output::ok(v))
}

fn hedge(a: &MarketArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let (market, payoff) = market(a, cx)?;
    let bounds = price_bounds(&market, &payoff, 0)?;
    Ok(Output::ok(json!({
        "bounds": bounds,
        "upper_hedge": bounds.upper_hedge,
        "lower_hedge": bounds.lower_hedge,
    })))
}

fn contrarian(a: &ContrarianArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let tree = cx.inputs.tree(&a.tree)?;
    let portfolio: Portfolio = cx.inputs.json(&a.portfolio)?;
    portfolio.check(&tree)?;
    match &a.debt_limit {
        Some(spec) => {
            let limits = parse_debt_limit(spec)?;
            let market = Market::new(tree);
            let r = verify_debt_limited(&market, &limits, &portfolio, a.start)?;
            Ok(Output::ok(json!({"mode": "debt_limited", "found": true, "path": r})))
        }
        None => match find_contrarian(&tree, &portfolio, a.start, a.epsilon)? {
            Some(r) => Ok(Output::ok(json!({"mode": "epsilon", "found": true, "path": r}))),
            None => Ok(Output {
                results: json!({
                    "mode": "epsilon",
                    "found": false,
                    "error": {"kind": "no_contrarian_path", "message": format!(
                        "every trajectory through node {} gains at least {}", a.start, a.epsilon)},
                }),
                ok: false,
            }),
        },
    }
}

fn arbitrage(a: &ArbitrageArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let tree = cx.inputs.tree(&a.tree)?;
    let market = Market::new(tree)
        .with_constraint(parse_constraint(&a.constraint)?)
        .with_horizon(parse_horizon(&a.horizon, cx.inputs)?)
        .with_liquidation(a.liquidate);
    let budget = a.budget.unwrap_or(cx.node_budget as u64);
    let search = if a.tau.is_empty() {
        ArbitrageSearch::new(budget)
    } else {
        let tau = a
            .tau
            .iter()
            .map(|s| parse_horizon(s, cx.inputs))
            .collect::<anyhow::Result<Vec<_>>>()?;
        ArbitrageSearch::paired(budget, tau)
    };
    let outcome = find_arbitrage_strategy(&market, &search)?;
    let mut v = serde_json::to_value(&outcome)?;
    if let ArbitrageOutcome::Found(w) = &outcome {
        v["portfolio"] = serde_json::to_value(&w.portfolio)?;
    }
    let ok = !matches!(outcome, ArbitrageOutcome::Unknown { .. });
    Ok(Output { results: v, ok })
}

fn stopped(a: &StoppedArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let tree = cx.inputs.tree(&a.tree)?;
    let nu = parse_horizon(&a.nu, cx.inputs)?;
    let st = stopped_tree(&tree, &nu)?;
    let mut v = emit_tree(&st.tree, &a.output)?;
    v["origin"] = json!(st.origin);
    Ok(Output::ok(v))
}

fn verify(a: &VerifyArgs) -> anyhow::Result<Output> {
    let suite: Suite = a.suite.parse()?;
    let report = run_suite(
        suite,
        &SuiteOptions {
            seed: a.seed,
            cases: a.cases,
            depth: a.depth,
        },
    )?;
    Ok(Output {
        ok: report.all_passed(),
        results: serde_json::to_value(&report)?,
    })
}

fn sample_mart(a: &SampleMartArgs, cx: &mut Env) -> anyhow::Result<Output> {
    let mut cfg: MartingaleSamplerConfig = cx.inputs.json(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.n {
        cfg.n_paths = n;
    }
    let tree = sample_martingale_set(&cfg)?;
    let mut v = emit_tree(&tree, &a.output)?;
    v["seed"] = json!(cfg.seed);
    v["exhaustive"] = json!(cfg.exhaustive);
    Ok(Output::ok(v))
}
