//! Path-dependent European payoffs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tree::{NodeId, StoppingTime, TrajectoryTree};

type Evaluator<T> = Arc<dyn Fn(&TrajectoryTree<T>, &[NodeId]) -> T + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub enum PayoffKind<T> {
    Call {
        strike: T,
        at: StoppingTime,
    },
    Put {
        strike: T,
        at: StoppingTime,
    },
    /// `a * max_i S_{nu_i} + b`; an empty list means every depth `1..=D`.
    LookbackMax {
        a: T,
        b: T,
        times: Vec<StoppingTime>,
    },
    /// Mean of `S_{nu_i}`; an empty list means every depth `1..=D`.
    Asian {
        times: Vec<StoppingTime>,
    },
    StockAt {
        tau: StoppingTime,
    },
    Constant {
        c: T,
    },
    Custom,
}

/// A payoff `Z(S)` evaluated on root-to-leaf node paths.
#[derive(Clone)]
pub struct Payoff<T> {
    pub label: String,
    pub kind: PayoffKind<T>,
    eval: Evaluator<T>,
}

impl<T: Scalar> fmt::Debug for Payoff<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Payoff")
            .field("label", &self.label)
            .field("kind", &self.kind)
            .finish()
    }
}

fn price_at<T: Scalar>(tree: &TrajectoryTree<T>, path: &[NodeId], st: &StoppingTime) -> T {
    tree.price(path[st.nu(tree, path)])
}

fn sample_times<T: Scalar>(tree: &TrajectoryTree<T>, path: &[NodeId], times: &[StoppingTime]) -> Vec<T> {
    if times.is_empty() {
        let d = tree.max_depth().max(1);
        (1..=d).map(|k| price_at(tree, path, &StoppingTime::fixed(k))).collect()
    } else {
        times.iter().map(|st| price_at(tree, path, st)).collect()
    }
}

impl<T: Scalar> Payoff<T> {
    pub fn custom<F>(label: impl Into<String>, f: F) -> Self
    where
        F: Fn(&TrajectoryTree<T>, &[NodeId]) -> T + Send + Sync + 'static,
    {
        Payoff {
            label: label.into(),
            kind: PayoffKind::Custom,
            eval: Arc::new(f),
        }
    }

    fn with_kind(mut self, kind: PayoffKind<T>) -> Self {
        self.kind = kind;
        self
    }

    pub fn call(strike: T) -> Self {
        Self::call_at(strike, StoppingTime::Terminal)
    }

    pub fn call_at(strike: T, at: StoppingTime) -> Self {
        let st = at.clone();
        Self::custom(format!("call:K={strike}"), move |t, p| {
            (price_at(t, p, &st) - strike).max(T::zero())
        })
        .with_kind(PayoffKind::Call { strike, at })
    }

    pub fn put(strike: T) -> Self {
        Self::put_at(strike, StoppingTime::Terminal)
    }

    pub fn put_at(strike: T, at: StoppingTime) -> Self {
        let st = at.clone();
        Self::custom(format!("put:K={strike}"), move |t, p| {
            (strike - price_at(t, p, &st)).max(T::zero())
        })
        .with_kind(PayoffKind::Put { strike, at })
    }

    pub fn lookback_max(a: T, b: T, times: Vec<StoppingTime>) -> Self {
        let ts = times.clone();
        Self::custom(format!("lookback:a={a},b={b}"), move |t, p| {
            let m = sample_times(t, p, &ts).into_iter().fold(T::neg_infinity(), T::max);
            a * m + b
        })
        .with_kind(PayoffKind::LookbackMax { a, b, times })
    }

    pub fn asian(times: Vec<StoppingTime>) -> Self {
        let ts = times.clone();
        Self::custom("asian", move |t, p| {
            let xs = sample_times(t, p, &ts);
            let n = T::of(xs.len() as f64);
            xs.into_iter().fold(T::zero(), |a, x| a + x) / n
        })
        .with_kind(PayoffKind::Asian { times })
    }

    pub fn stock_at(tau: StoppingTime) -> Self {
        let st = tau.clone();
        Self::custom("stock_at", move |t, p| price_at(t, p, &st)).with_kind(PayoffKind::StockAt { tau })
    }

    pub fn constant(c: T) -> Self {
        Self::custom(format!("const:c={c}"), move |_, _| c).with_kind(PayoffKind::Constant { c })
    }

    pub fn eval(&self, tree: &TrajectoryTree<T>, path: &[NodeId]) -> T {
        (self.eval)(tree, path)
    }

    pub fn neg(&self) -> Self {
        let f = self.eval.clone();
        Self::custom(format!("-({})", self.label), move |t, p| -f(t, p))
    }

    pub fn add(&self, other: &Payoff<T>) -> Self {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        Self::custom(format!("({})+({})", self.label, other.label), move |t, p| {
            f(t, p) + g(t, p)
        })
    }

    /// `a * Z + b`.
    pub fn affine(&self, a: T, b: T) -> Self {
        let f = self.eval.clone();
        Self::custom(format!("{a}*({})+{b}", self.label), move |t, p| a * f(t, p) + b)
    }

    /// Parses the CLI payoff mini-language: `call:K=1.0`, `put:K=1.0`,
    /// `lookback:a=1.0,b=0.0`, `asian`, `stock_at:tau=<time>`, `const:c=0.0`.
    /// Calls and puts accept an optional `at=<time>`; a `<time>` is
    /// `terminal`, a depth, or `nodes:<id>;<id>...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::PayoffSpec(spec.to_string());
        let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in args.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            kv.insert(k.trim(), v.trim());
        }
        let num = |key: &str| -> Result<T> {
            let v = kv.get(key).ok_or_else(bad)?;
            v.parse::<f64>().map(T::of).map_err(|_| bad())
        };
        let time = |key: &str| -> Result<StoppingTime> {
            kv.get(key)
                .map_or(Ok(StoppingTime::Terminal), |v| parse_stopping_time(v).ok_or_else(bad))
        };
        let allowed: &[&str] = match name {
            "call" | "put" => &["K", "at"],
            "lookback" => &["a", "b"],
            "asian" => &[],
            "stock_at" => &["tau"],
            "const" => &["c"],
            _ => return Err(bad()),
        };
        if kv.keys().any(|k| !allowed.contains(k)) {
            return Err(bad());
        }
        Ok(match name {
            "call" => Self::call_at(num("K")?, time("at")?),
            "put" => Self::put_at(num("K")?, time("at")?),
            "lookback" => Self::lookback_max(num("a")?, num("b")?, Vec::new()),
            "asian" => Self::asian(Vec::new()),
            "stock_at" => Self::stock_at(time("tau")?),
            _ => Self::constant(num("c")?),
        })
    }
}

/// `terminal`, a fixed depth `3`, `fixed:3`, or `nodes:4;7;9`.
pub fn parse_stopping_time(s: &str) -> Option<StoppingTime> {
    let s = s.trim();
    if s == "terminal" {
        return Some(StoppingTime::Terminal);
    }
    if let Some(ids) = s.strip_prefix("nodes:") {
        let nodes: Option<Vec<NodeId>> = ids.split(';').map(|x| x.trim().parse().ok()).collect();
        return Some(StoppingTime::at_nodes(nodes?));
    }
    s.strip_prefix("fixed:")
        .unwrap_or(s)
        .parse()
        .ok()
        .map(StoppingTime::fixed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::WValue;

    fn path_tree(prices: &[f64]) -> TrajectoryTree<f64> {
        let s: Vec<_> = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, WValue::Tick(i as i64)))
            .collect();
        TrajectoryTree::build(&[s]).unwrap()
    }

    #[test]
    fn builtins_on_a_path() {
        let t = path_tree(&[1.0, 1.4, 0.8, 1.2]);
        let p = t.paths().remove(0);
        assert!((Payoff::call(1.0).eval(&t, &p) - 0.2).abs() < 1e-15);
        assert_eq!(Payoff::put(1.0).eval(&t, &p), 0.0);
        assert!((Payoff::put_at(1.0, StoppingTime::fixed(2)).eval(&t, &p) - 0.2).abs() < 1e-15);
        assert_eq!(Payoff::lookback_max(2.0, 1.0, vec![]).eval(&t, &p), 2.0 * 1.4 + 1.0);
        assert!((Payoff::asian(vec![]).eval(&t, &p) - 3.4 / 3.0).abs() < 1e-15);
        assert_eq!(Payoff::stock_at(StoppingTime::fixed(1)).eval(&t, &p), 1.4);
        assert_eq!(Payoff::constant(3.0).eval(&t, &p), 3.0);
        let z = Payoff::call(1.0);
        assert_eq!(z.neg().eval(&t, &p), -z.eval(&t, &p));
        assert_eq!(z.affine(2.0, 1.0).eval(&t, &p), 2.0 * z.eval(&t, &p) + 1.0);
    }

    #[test]
    fn parse_specs() {
        let t = path_tree(&[1.0, 1.4]);
        let p = t.paths().remove(0);
        let z: Payoff<f64> = Payoff::parse("call:K=1.0").unwrap();
        assert!(matches!(z.kind, PayoffKind::Call { strike, .. } if strike == 1.0));
        assert!((z.eval(&t, &p) - 0.4).abs() < 1e-15);
        assert!(Payoff::<f64>::parse("lookback:a=1.0,b=0.0").is_ok());
        assert!(Payoff::<f64>::parse("asian").is_ok());
        assert!(Payoff::<f64>::parse("stock_at:tau=1").is_ok());
        assert!(Payoff::<f64>::parse("stock_at:tau=nodes:1;2").is_ok());
        assert!(Payoff::<f64>::parse("const:c=2").is_ok());
        for bad in ["call", "call:K=x", "swap:K=1", "asian:K=1", "put:K"] {
            assert!(matches!(Payoff::<f64>::parse(bad), Err(Error::PayoffSpec(_))), "{bad}");
        }
    }
}
