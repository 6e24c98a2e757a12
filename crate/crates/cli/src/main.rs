mod args;
mod commands;
mod inputs;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use trajpace_core::Error;

use args::Cli;
use commands::{Env, Output};
use inputs::Inputs;

const DEFAULT_NODE_BUDGET: usize = 2_000_000;

#[derive(Serialize)]
struct RunReport {
    command: Vec<String>,
    input_digests: BTreeMap<String, String>,
    results: Value,
    wall_time_ms: u128,
    exit_code: u8,
}

fn node_budget() -> anyhow::Result<usize> {
    match std::env::var("TRAJPACE_NODE_BUDGET") {
        Ok(s) => s
            .trim()
            .parse()
            .ok()
            .filter(|&n: &usize| n > 0)
            .ok_or_else(|| anyhow!("TRAJPACE_NODE_BUDGET must be a positive integer, got `{s}`")),
        Err(std::env::VarError::NotPresent) => Ok(DEFAULT_NODE_BUDGET),
        Err(e) => Err(anyhow!("TRAJPACE_NODE_BUDGET: {e}")),
    }
}

/// Library errors that report a fact about the inputs rather than a
/// malformed invocation.
fn domain_kind(e: &Error) -> Option<&'static str> {
    Some(match e {
        Error::HypothesisViolated { .. } => "hypothesis_violated",
        Error::UnboundedPayoff => "unbounded_payoff",
        Error::BudgetExceeded(_) => "budget_exceeded",
        Error::IncompatibleHorizons => "incompatible_horizons",
        _ => return None,
    })
}

fn domain_error(e: &Error) -> Value {
    let mut v = json!({"kind": domain_kind(e), "message": e.to_string()});
    if let Error::HypothesisViolated {
        hypothesis,
        node,
        detail,
    } = e
    {
        v["hypothesis"] = json!(hypothesis);
        v["node"] = json!(node);
        v["detail"] = json!(detail);
    }
    json!({ "error": v })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let mut inputs = Inputs::default();

    let outcome = node_budget().and_then(|node_budget| {
        commands::run(
            &cli.command,
            &mut Env {
                inputs: &mut inputs,
                node_budget,
            },
        )
    });
    let (results, exit_code) = match outcome {
        Ok(Output { results, ok }) => (results, if ok { 0 } else { 1 }),
        Err(e) => match e.downcast_ref::<Error>().filter(|e| domain_kind(e).is_some()) {
            Some(domain) => (domain_error(domain), 1),
            None => {
                eprintln!("trajpace: {e:#}");
                return ExitCode::from(2);
            }
        },
    };

    let report = RunReport {
        command: std::env::args().skip(1).collect(),
        input_digests: inputs.digests,
        results,
        wall_time_ms: started.elapsed().as_millis(),
        exit_code,
    };
    if let Err(e) = write_report(&report, cli.out.as_deref()) {
        eprintln!("trajpace: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(exit_code)
}

fn write_report(report: &RunReport, out: Option<&std::path::Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("cannot write {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
