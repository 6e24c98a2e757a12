use thiserror::Error;

use crate::tree::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which hypothesis of the debt-limited contrarian construction failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// Too many arbitrage or flat nodes on one trajectory.
    SpecialNodeCount,
    /// Portfolio value fell below the credit limit `-A`.
    CreditLimit,
    /// A nonzero one-step gain was smaller in magnitude than `delta`.
    GainDiscreteness,
    /// A node below the start is not 0-neutral.
    NotZeroNeutral,
    /// Configuration values are out of range.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("no trajectories supplied")]
    EmptyInput,
    #[error("trajectory {index} starts at a different root than trajectory 0")]
    InconsistentRoot { index: usize },
    #[error("trajectory {index} is a strict prefix of, or extends, another trajectory")]
    PrefixConflict { index: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is terminal")]
    TerminalNode(NodeId),
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("depth range {from}..{to} is outside the trajectory (length {len})")]
    DepthOutOfRange { from: usize, to: usize, len: usize },
    #[error("portfolio does not match the tree ({0})")]
    PortfolioMismatch(String),
    #[error("portfolio horizons are neither both stopping times nor both liquidated")]
    IncompatibleHorizons,
    #[error("invalid stopping-time spacing: {0}")]
    InvalidTauSpacing(String),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("hypothesis violated ({hypothesis:?}) at node {node}: {detail}")]
    HypothesisViolated {
        hypothesis: Hypothesis,
        node: NodeId,
        detail: String,
    },
    #[error("search budget of {0} evaluations exceeded")]
    BudgetExceeded(u64),
    #[error("payoff bounds are not finite")]
    UnboundedPayoff,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("chart contains no observations")]
    EmptyChart,
    #[error("could not parse payoff spec '{0}'")]
    PayoffSpec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
