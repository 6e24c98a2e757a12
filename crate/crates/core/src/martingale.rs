//! Trajectory sets sampled from discrete martingales.
//!
//! A martingale `X_t` is simulated (or fully enumerated) for `horizon`
//! steps and observed at a family of sampling times. The node coordinate
//! `W` is `"t:digest"`, where `t` is the sampling time and `digest` is a
//! SHA-256 fingerprint of the full unobserved history, so different
//! histories stay different nodes. Exhaustive enumeration also records the
//! conditional probability of every node in `q_prob`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::payoff::Payoff;
use crate::scalar::Scalar;
use crate::tree::{NodeId, TrajectoryTree, TreeBuilder, WValue};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MartingaleModel<T> {
    /// `X -> X u` or `X d` with risk-neutral weight `(1 - d) / (u - d)` up.
    Binomial { s0: T, u: T, d: T },
    /// Binomial moves plus "unchanged" with probability `p_mid`.
    Trinomial { s0: T, u: T, d: T, p_mid: T },
    /// `X -> X + sigma` or `X - sigma`, each with probability 1/2.
    AdditiveWalk { s0: T, sigma: T },
}

impl<T: Scalar> MartingaleModel<T> {
    pub fn s0(&self) -> T {
        match *self {
            MartingaleModel::Binomial { s0, .. }
            | MartingaleModel::Trinomial { s0, .. }
            | MartingaleModel::AdditiveWalk { s0, .. } => s0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidModel(m.to_string()));
        let finite = |x: T| x.is_finite();
        match *self {
            MartingaleModel::Binomial { s0, u, d } | MartingaleModel::Trinomial { s0, u, d, .. } => {
                if !(finite(s0) && finite(u) && s0 > T::zero() && T::zero() < d && d < T::one() && T::one() < u) {
                    return bad("need s0 > 0 and 0 < d < 1 < u");
                }
                if let MartingaleModel::Trinomial { p_mid, .. } = *self {
                    if !(T::zero() <= p_mid && p_mid < T::one()) {
                        return bad("p_mid must lie in [0, 1)");
                    }
                }
                Ok(())
            }
            MartingaleModel::AdditiveWalk { s0, sigma } => {
                if !(finite(s0) && finite(sigma) && sigma > T::zero()) {
                    return bad("need finite s0 and sigma > 0");
                }
                Ok(())
            }
        }
    }

    /// One-step transitions `(next value, probability)`, zero mean.
    pub fn transitions(&self, x: T) -> Vec<(T, T)> {
        let one = T::one();
        match *self {
            MartingaleModel::Binomial { u, d, .. } => {
                let q = (one - d) / (u - d);
                vec![(x * u, q), (x * d, one - q)]
            }
            MartingaleModel::Trinomial { u, d, p_mid, .. } => {
                let rest = one - p_mid;
                let qu = rest * (one - d) / (u - d);
                let mut out = vec![(x * u, qu)];
                if p_mid > T::zero() {
                    out.push((x, p_mid));
                }
                out.push((x * d, rest - qu));
                out
            }
            MartingaleModel::AdditiveWalk { sigma, .. } => {
                let half = T::of(0.5);
                vec![(x + sigma, half), (x - sigma, half)]
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplingTimes<T> {
    EveryStep,
    /// `0, m, 2m, ...`, plus the horizon.
    EveryNth {
        m: usize,
    },
    /// Next sample once `|X_t - X_last| >= level`, or at the horizon.
    LevelHit {
        level: T,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSamplerConfig<T> {
    pub model: MartingaleModel<T>,
    /// Number of martingale steps `T_steps`.
    pub horizon: usize,
    pub sampling: SamplingTimes<T>,
    /// Ignored in exhaustive mode.
    #[serde(default)]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    /// Enumerate every history and attach probabilities.
    #[serde(default)]
    pub exhaustive: bool,
}

/// Largest number of histories exhaustive mode will enumerate.
pub const EXHAUSTIVE_LIMIT: usize = 1 << 20;

fn fingerprint<T: Scalar>(history: &[T]) -> String {
    let mut h = Sha256::new();
    for x in history {
        h.update(x.as_f64().to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Sampled trajectory of one martingale history.
fn observe<T: Scalar>(cfg: &MartingaleSamplerConfig<T>, history: &[T]) -> Vec<(T, WValue)> {
    let tag = |t: usize| WValue::Tag(format!("{t}:{}", fingerprint(&history[..=t])));
    let mut seq = vec![(history[0], tag(0))];
    let mut last = 0;
    for t in 1..history.len() {
        let take = t == history.len() - 1
            || match &cfg.sampling {
                SamplingTimes::EveryStep => true,
                SamplingTimes::EveryNth { m } => t % m == 0,
                SamplingTimes::LevelHit { level } => (history[t] - history[last]).abs() >= *level,
            };
        if take {
            seq.push((history[t], tag(t)));
            last = t;
        }
    }
    seq
}

fn validate<T: Scalar>(cfg: &MartingaleSamplerConfig<T>) -> Result<()> {
    cfg.model.validate()?;
    if cfg.horizon == 0 {
        return Err(Error::InvalidModel("horizon must be at least one step".into()));
    }
    match cfg.sampling {
        SamplingTimes::EveryNth { m: 0 } => Err(Error::InvalidModel("sampling step must be positive".into())),
        SamplingTimes::LevelHit { level } if !(level > T::zero()) => {
            Err(Error::InvalidModel("sampling level must be positive".into()))
        }
        _ => Ok(()),
    }
}

pub fn sample_martingale_set<T: Scalar>(cfg: &MartingaleSamplerConfig<T>) -> Result<TrajectoryTree<T>> {
    validate(cfg)?;
    let s0 = cfg.model.s0();
    let mut builder = TreeBuilder::new();
    if cfg.exhaustive {
        let branching = cfg.model.transitions(s0).len();
        if branching
            .checked_pow(cfg.horizon as u32)
            .is_none_or(|c| c > EXHAUSTIVE_LIMIT)
        {
            return Err(Error::InvalidModel(format!(
                "{branching}^{} histories is too many to enumerate",
                cfg.horizon
            )));
        }
        let mut mass: Vec<T> = Vec::new();
        let mut stack = vec![(vec![s0], T::one())];
        while let Some((history, prob)) = stack.pop() {
            if history.len() == cfg.horizon + 1 {
                let leaf = builder.insert(&observe(cfg, &history))?;
                mass.resize(builder.node_count(), T::zero());
                mass[leaf] += prob;
                continue;
            }
            let x = *history.last().expect("non-empty");
            for (next, q) in cfg.model.transitions(x).into_iter().rev() {
                let mut h = history.clone();
                h.push(next);
                stack.push((h, prob * q));
            }
        }
        let mut tree = builder.finish()?;
        for id in (1..tree.len()).rev() {
            let parent = tree.nodes()[id].parent.expect("non-root");
            let m = mass[id];
            mass[parent] += m;
        }
        for id in 1..tree.len() {
            let parent = tree.nodes()[id].parent.expect("non-root");
            tree.set_q_prob(id, Some(mass[id] / mass[parent]));
        }
        return Ok(tree);
    }
    if cfg.n_paths == 0 {
        return Err(Error::InvalidModel("n_paths must be at least 1".into()));
    }
    for i in 0..cfg.n_paths {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mut history = vec![s0];
        for _ in 0..cfg.horizon {
            let x = *history.last().expect("non-empty");
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let moves = cfg.model.transitions(x);
            let mut next = moves[moves.len() - 1].0;
            for (y, q) in moves {
                acc += q.as_f64();
                if u < acc {
                    next = y;
                    break;
                }
            }
            history.push(next);
        }
        builder.insert(&observe(cfg, &history))?;
    }
    builder.finish()
}

/// `q_prob` of every node; `None` at the root.
pub fn attached_probabilities<T: Scalar>(tree: &TrajectoryTree<T>) -> Result<Vec<Option<T>>> {
    let probs: Vec<Option<T>> = tree.nodes().iter().map(|n| n.q_prob).collect();
    if probs.iter().skip(1).any(Option::is_none) {
        return Err(Error::InvalidModel("tree carries no conditional probabilities".into()));
    }
    Ok(probs)
}

/// `E_Q[Z]` with conditional node probabilities `q` (indexed by node).
pub fn expectation<T: Scalar>(tree: &TrajectoryTree<T>, payoff: &Payoff<T>, q: &[Option<T>]) -> Result<T> {
    if q.len() != tree.len() {
        return Err(Error::LengthMismatch(q.len(), tree.len()));
    }
    let mut total = T::zero();
    for path in tree.paths() {
        let mut p = T::one();
        for &n in &path[1..] {
            p *= q[n].ok_or_else(|| Error::InvalidModel(format!("node {n} has no probability")))?;
        }
        total += p * payoff.eval(tree, &path);
    }
    Ok(total)
}

/// Whether every node's children have zero mean increment under `q`.
pub fn is_martingale_measure<T: Scalar>(tree: &TrajectoryTree<T>, q: &[Option<T>]) -> bool {
    (0..tree.len()).filter(|&n| !tree.is_terminal(n)).all(|n: NodeId| {
        let s = tree.price(n);
        let (mut mean, mut mass, mut scale) = (T::zero(), T::zero(), T::zero());
        for &c in tree.children(n) {
            let w = q[c].unwrap_or_else(T::nan);
            mean += w * (tree.price(c) - s);
            mass += w;
            scale = scale.max((tree.price(c) - s).abs());
        }
        let tol = T::tie_eps() * T::of(10.0) * (T::one() + scale);
        mean.abs() <= tol && (mass - T::one()).abs() <= tol
    })
}

/// A random martingale measure equivalent to the one on the tree: fresh
/// positive weights per child, with the up-moving and down-moving groups
/// rescaled against each other so the conditional mean is zero.
pub fn random_equivalent_measure<T: Scalar, R: Rng>(tree: &TrajectoryTree<T>, rng: &mut R) -> Result<Vec<Option<T>>> {
    let mut q = vec![None; tree.len()];
    for n in (0..tree.len()).filter(|&n| !tree.is_terminal(n)) {
        let s = tree.price(n);
        let kids = tree.children(n);
        let w: Vec<T> = kids.iter().map(|_| T::of(rng.gen_range(0.1..1.0))).collect();
        let (mut up, mut down) = (T::zero(), T::zero());
        for (&c, &wc) in kids.iter().zip(&w) {
            let d = tree.price(c) - s;
            if d > T::zero() {
                up += wc * d;
            } else if d < T::zero() {
                down -= wc * d;
            }
        }
        if (up > T::zero()) != (down > T::zero()) {
            return Err(Error::InvalidModel(format!("node {n} admits no martingale measure")));
        }
        let scaled: Vec<T> = kids
            .iter()
            .zip(&w)
            .map(|(&c, &wc)| {
                let d = tree.price(c) - s;
                if d > T::zero() {
                    wc * down
                } else if d < T::zero() {
                    wc * up
                } else if up > T::zero() {
                    wc * up * down
                } else {
                    wc
                }
            })
            .collect();
        let total = scaled.iter().fold(T::zero(), |a, &b| a + b);
        for (&c, &x) in kids.iter().zip(&scaled) {
            q[c] = Some(x / total);
        }
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{classify_tree, NodeClass};
    use crate::market::Market;
    use crate::pricing::price_bounds;

    fn binomial(horizon: usize) -> MartingaleSamplerConfig<f64> {
        MartingaleSamplerConfig {
            model: MartingaleModel::Binomial {
                s0: 100.0,
                u: 1.2,
                d: 0.8,
            },
            horizon,
            sampling: SamplingTimes::EveryStep,
            n_paths: 0,
            seed: 0,
            exhaustive: true,
        }
    }

    #[test]
    fn exhaustive_binomial() {
        let t = sample_martingale_set(&binomial(2)).unwrap();
        assert_eq!(t.max_depth(), 2);
        assert_eq!(t.leaf_count(), 4);
        let c = classify_tree(&t);
        assert_eq!(c.counts.up_down, 3);
        assert!(c.classes.iter().flatten().all(|&k| k == NodeClass::UpDown));
        let q = attached_probabilities(&t).unwrap();
        assert!(is_martingale_measure(&t, &q));
        let e = expectation(&t, &Payoff::call(100.0), &q).unwrap();
        assert!((e - 11.0).abs() < 1e-12);
    }

    #[test]
    fn walk_is_zero_neutral() {
        let cfg = MartingaleSamplerConfig {
            model: MartingaleModel::AdditiveWalk { s0: 0.0, sigma: 1.0 },
            horizon: 6,
            sampling: SamplingTimes::EveryStep,
            n_paths: 40,
            seed: 3,
            exhaustive: true,
        };
        let t = sample_martingale_set(&cfg).unwrap();
        assert!(classify_tree(&t).locally_0_neutral);
        let b = price_bounds(&Market::new(t), &Payoff::constant(0.0), 0).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));

        let random = MartingaleSamplerConfig {
            exhaustive: false,
            ..cfg
        };
        let a = sample_martingale_set(&random).unwrap();
        assert_eq!(a.sequences(), sample_martingale_set(&random).unwrap().sequences());
        assert!(a.leaf_count() <= 40);
    }

    #[test]
    fn sparse_sampling_keeps_histories_apart() {
        let cfg = MartingaleSamplerConfig {
            sampling: SamplingTimes::EveryNth { m: 2 },
            ..binomial(2)
        };
        let t = sample_martingale_set(&cfg).unwrap();
        // up-down and down-up both end at 96 but are different histories
        assert_eq!(t.leaf_count(), 4);
        assert_eq!(t.max_depth(), 1);
        assert!(is_martingale_measure(&t, &attached_probabilities(&t).unwrap()));
    }

    #[test]
    fn reweighting_stays_martingale() {
        let cfg = MartingaleSamplerConfig {
            model: MartingaleModel::Trinomial {
                s0: 1.0,
                u: 1.1,
                d: 0.9,
                p_mid: 0.3,
            },
            ..binomial(3)
        };
        let t = sample_martingale_set(&cfg).unwrap();
        assert!(is_martingale_measure(&t, &attached_probabilities(&t).unwrap()));
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let q = random_equivalent_measure(&t, &mut rng).unwrap();
        assert!(is_martingale_measure(&t, &q));
        assert!(q.iter().skip(1).all(|x| x.unwrap() > 0.0));
    }

    #[test]
    fn invalid_models() {
        let bad = MartingaleSamplerConfig {
            model: MartingaleModel::Binomial {
                s0: 100.0,
                u: 0.9,
                d: 0.8,
            },
            ..binomial(2)
        };
        assert!(matches!(sample_martingale_set(&bad), Err(Error::InvalidModel(_))));
        assert!(matches!(
            sample_martingale_set(&binomial(0)),
            Err(Error::InvalidModel(_))
        ));
    }
}
