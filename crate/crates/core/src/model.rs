//! Model parameters, sharing strategies and the elementary probability kernels.
//!
//! Agents receive a private signal `s ∈ {−1, +1}` (a news story), see a feed of
//! `K` stories of which `k` are positive, and share `C` of them. A strategy maps
//! `(s, k)` to a distribution over `z`, the number of *positive* stories shared.
//!
//! The per-story sharing utility `u > 0` only scales payoffs and never changes
//! which action is optimal, so it is fixed to 1 and not represented anywhere.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest feed size supported. Binomial draws use inversion, which is exact
/// and cheap up to this size.
pub const MAX_FEED_SIZE: usize = 64;

/// Probability vectors must sum to one within this tolerance.
pub const STRATEGY_TOLERANCE: f64 = 1e-12;

/// A binary news story / private signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    Neg,
    Pos,
}

impl Signal {
    pub const BOTH: [Signal; 2] = [Signal::Pos, Signal::Neg];

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Signal::Pos),
            -1 => Ok(Signal::Neg),
            _ => Err(Error::domain(
                "s",
                format!("signal must be -1 or +1, got {v}"),
            )),
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Signal::Pos => 1,
            Signal::Neg => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Signal::Pos => Signal::Neg,
            Signal::Neg => Signal::Pos,
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Signal::Pos => 0,
            Signal::Neg => 1,
        }
    }

    fn key(self) -> &'static str {
        match self {
            Signal::Pos => "s=+1",
            Signal::Neg => "s=-1",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// The environment: story precision `q`, feed size `K`, capacity `C`,
/// virality weight `lambda`, number of agents `n` and manipulation rate `iota`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: f64,
    #[serde(rename = "K")]
    pub feed_size: usize,
    #[serde(rename = "C")]
    pub capacity: usize,
    pub lambda: f64,
    #[serde(rename = "n", default = "default_agents")]
    pub agents: usize,
    #[serde(default)]
    pub iota: f64,
}

fn default_agents() -> usize {
    20_000
}

impl ModelParams {
    /// Validated parameters with `n = 20000` agents and no manipulation.
    pub fn new(q: f64, feed_size: usize, capacity: usize, lambda: f64) -> Result<Self> {
        let params = ModelParams {
            q,
            feed_size,
            capacity,
            lambda,
            agents: default_agents(),
            iota: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_agents(mut self, agents: usize) -> Result<Self> {
        self.agents = agents;
        self.validate()?;
        Ok(self)
    }

    pub fn with_iota(mut self, iota: f64) -> Result<Self> {
        self.iota = iota;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        validate_environment(self.q, self.feed_size, self.capacity)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::domain(
                "lambda",
                format!("need 0 <= lambda <= 1, got {}", self.lambda),
            ));
        }
        if !(0.0..1.0).contains(&self.iota) {
            return Err(Error::domain(
                "iota",
                format!("need 0 <= iota < 1, got {}", self.iota),
            ));
        }
        if self.agents <= self.feed_size {
            return Err(Error::domain(
                "n",
                format!(
                    "need n > K, got n = {} and K = {}",
                    self.agents, self.feed_size
                ),
            ));
        }
        Ok(())
    }

    /// `1 − 1/(2q)`: below this weight no viral accuracy can make sampling misleading.
    pub fn lambda_floor(&self) -> f64 {
        1.0 - 1.0 / (2.0 * self.q)
    }
}

/// Checks the `(q, K, C)` part of the environment.
pub fn validate_environment(q: f64, feed_size: usize, capacity: usize) -> Result<()> {
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::domain("q", format!("need 0.5 < q < 1, got {q}")));
    }
    if !(2..=MAX_FEED_SIZE).contains(&feed_size) {
        return Err(Error::domain(
            "K",
            format!("need 2 <= K <= {MAX_FEED_SIZE}, got {feed_size}"),
        ));
    }
    if capacity < 1 || 2 * capacity > feed_size {
        return Err(Error::domain(
            "C",
            format!("need 1 <= C <= K/2, got C = {capacity} with K = {feed_size}"),
        ));
    }
    Ok(())
}

/// `λx + (1−λ)z`, the chance that one feed slot shows a correct story.
/// With `z = None` the story fraction is taken to be its long-run value `q`.
pub fn sampling_accuracy(x: f64, params: &ModelParams, z: Option<f64>) -> Result<f64> {
    check_unit("x", x)?;
    let z = match z {
        Some(z) => {
            check_unit("z", z)?;
            z
        }
        None => params.q,
    };
    Ok(params.lambda * x + (1.0 - params.lambda) * z)
}

pub(crate) fn check_unit(field: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(
            field,
            format!("need a value in [0, 1], got {v}"),
        ))
    }
}

/// Binomial(`trials`, `p`) pmf written into `out[0..=trials]`.
pub fn binomial_pmf_into(trials: usize, p: f64, out: &mut [f64]) {
    debug_assert!(out.len() > trials);
    if p <= 0.0 {
        out[..=trials].fill(0.0);
        out[0] = 1.0;
        return;
    }
    if p >= 1.0 {
        out[..=trials].fill(0.0);
        out[trials] = 1.0;
        return;
    }
    let q = 1.0 - p;
    let mut coef = 1.0_f64;
    for (k, slot) in out[..=trials].iter_mut().enumerate() {
        *slot = coef * p.powi(k as i32) * q.powi((trials - k) as i32);
        coef = coef * (trials - k) as f64 / (k + 1) as f64;
    }
}

pub fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; trials + 1];
    binomial_pmf_into(trials, p, &mut out);
    out
}

/// How the majority rule resolves a feed whose evidence is balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Follow the feed majority; exact feed ties (`k = K/2`) go to the private signal.
    #[default]
    FeedMajority,
    /// Follow the private signal whenever signal and feed cancel out
    /// (`2k − K + s = 0`). Differs from `FeedMajority` only for odd `K`, where
    /// it is the other optimal choice under uniform sampling.
    SignalOnBalancedEvidence,
}

/// A state-feasible mixed sharing strategy.
///
/// `dist(s, k)[z]` is the probability of sharing `z` positive stories (and
/// `C − z` negative ones) after private signal `s` and a feed with `k`
/// positive stories.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    feed_size: usize,
    capacity: usize,
    probs: Vec<f64>,
    symmetric: bool,
}

impl Strategy {
    /// Builds and validates a strategy from a cell function returning the
    /// distribution over `z ∈ 0..=C`.
    pub fn from_fn<F>(feed_size: usize, capacity: usize, mut cell: F) -> Result<Self>
    where
        F: FnMut(Signal, usize) -> Vec<f64>,
    {
        if !(2..=MAX_FEED_SIZE).contains(&feed_size) || capacity < 1 || 2 * capacity > feed_size {
            return Err(Error::domain(
                "K/C",
                format!("need 2 <= K <= {MAX_FEED_SIZE} and 1 <= C <= K/2, got K = {feed_size}, C = {capacity}"),
            ));
        }
        let width = capacity + 1;
        let mut probs = vec![0.0; 2 * (feed_size + 1) * width];
        for s in Signal::BOTH {
            for k in 0..=feed_size {
                let row = cell(s, k);
                if row.len() != width {
                    return Err(Error::Strategy(format!(
                        "cell (s={s}, k={k}) has {} entries, expected C+1 = {width}",
                        row.len()
                    )));
                }
                let at = Self::offset(feed_size, capacity, s, k);
                probs[at..at + width].copy_from_slice(&row);
            }
        }
        let mut strategy = Strategy {
            feed_size,
            capacity,
            probs,
            symmetric: false,
        };
        strategy.normalize()?;
        strategy.symmetric = strategy.check_symmetry();
        Ok(strategy)
    }

    /// A pure strategy sharing `choice(s, k)` positive stories.
    pub fn pure<F>(feed_size: usize, capacity: usize, mut choice: F) -> Result<Self>
    where
        F: FnMut(Signal, usize) -> usize,
    {
        Self::from_fn(feed_size, capacity, |s, k| {
            let mut row = vec![0.0; capacity + 1];
            let z = choice(s, k).min(capacity);
            row[z] = 1.0;
            row
        })
    }

    fn offset(feed_size: usize, capacity: usize, s: Signal, k: usize) -> usize {
        (s.index() * (feed_size + 1) + k) * (capacity + 1)
    }

    fn normalize(&mut self) -> Result<()> {
        let (kk, cc) = (self.feed_size, self.capacity);
        for s in Signal::BOTH {
            for k in 0..=kk {
                let (lo, hi) = feasible_support(kk, cc, k);
                let at = Self::offset(kk, cc, s, k);
                let row = &mut self.probs[at..at + cc + 1];
                for (z, p) in row.iter_mut().enumerate() {
                    if !p.is_finite() {
                        return Err(Error::Strategy(format!(
                            "non-finite probability at (s={s}, k={k}, z={z})"
                        )));
                    }
                    if *p < -STRATEGY_TOLERANCE {
                        return Err(Error::Strategy(format!(
                            "negative probability {p} at (s={s}, k={k}, z={z})"
                        )));
                    }
                    let outside = z < lo || z > hi;
                    if outside && p.abs() > STRATEGY_TOLERANCE {
                        return Err(Error::Strategy(format!(
                            "infeasible share z={z} at (s={s}, k={k}): support is [{lo}, {hi}]"
                        )));
                    }
                    if outside || *p < 0.0 {
                        *p = 0.0;
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STRATEGY_TOLERANCE {
                    return Err(Error::Strategy(format!(
                        "probabilities at (s={s}, k={k}) sum to {sum}, not 1"
                    )));
                }
                // Only rescale when the deviation exceeds summation rounding, so
                // exactly-written tables survive a round trip bit for bit.
                if (sum - 1.0).abs() > (cc + 1) as f64 * f64::EPSILON {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
        }
        Ok(())
    }

    fn check_symmetry(&self) -> bool {
        let (kk, cc) = (self.feed_size, self.capacity);
        (0..=kk).all(|k| {
            let a = self.dist(Signal::Pos, k);
            let b = self.dist(Signal::Neg, kk - k);
            (0..=cc).all(|z| (a[z] - b[cc - z]).abs() <= STRATEGY_TOLERANCE)
        })
    }

    pub fn feed_size(&self) -> usize {
        self.feed_size
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `σ(s,k)(z) = σ(−s,K−k)(C−z)` for every entry.
    pub fn is_state_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn require_state_symmetric(&self) -> Result<()> {
        if self.symmetric {
            Ok(())
        } else {
            Err(Error::Strategy("strategy is not state-symmetric".into()))
        }
    }

    /// Distribution over the number of positive stories shared.
    /// Panics if `k > K`.
    pub fn dist(&self, s: Signal, k: usize) -> &[f64] {
        assert!(
            k <= self.feed_size,
            "k = {k} exceeds K = {}",
            self.feed_size
        );
        let at = Self::offset(self.feed_size, self.capacity, s, k);
        &self.probs[at..at + self.capacity + 1]
    }

    /// `E[σ(s,k)]`, the expected number of positive stories shared.
    pub fn expectation(&self, s: Signal, k: usize) -> Result<f64> {
        if k > self.feed_size {
            return Err(Error::domain(
                "k",
                format!("need 0 <= k <= K = {}, got {k}", self.feed_size),
            ));
        }
        Ok(self.expectation_unchecked(s, k))
    }

    pub(crate) fn expectation_unchecked(&self, s: Signal, k: usize) -> f64 {
        self.dist(s, k)
            .iter()
            .enumerate()
            .map(|(z, p)| z as f64 * p)
            .sum()
    }

    /// Returns `Some(z)` when the cell is degenerate at `z`.
    pub fn pure_choice(&self, s: Signal, k: usize) -> Option<usize> {
        let row = self.dist(s, k);
        row.iter().position(|&p| p == 1.0)
    }

    /// The strategy as seen with the roles of positive and negative stories exchanged:
    /// `σ'(s,k)(z) = σ(−s,K−k)(C−z)`. Equal to `self` for state-symmetric strategies.
    pub fn mirrored(&self) -> Strategy {
        let (kk, cc) = (self.feed_size, self.capacity);
        let mut probs = vec![0.0; self.probs.len()];
        for s in Signal::BOTH {
            for k in 0..=kk {
                let src = self.dist(s.flip(), kk - k);
                let at = Self::offset(kk, cc, s, k);
                for z in 0..=cc {
                    probs[at + z] = src[cc - z];
                }
            }
        }
        Strategy {
            feed_size: kk,
            capacity: cc,
            probs,
            symmetric: self.symmetric,
        }
    }

    /// Largest absolute difference between corresponding entries.
    pub fn distance(&self, other: &Strategy) -> Option<f64> {
        if self.feed_size != other.feed_size || self.capacity != other.capacity {
            return None;
        }
        Some(
            self.probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StrategyJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: StrategyJson = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Strategy(format!("field `{}`: {}", e.path(), e.inner())))?;
        Strategy::try_from(raw)
    }
}

/// `[max(0, C−(K−k)), min(C, k)]`: the feasible numbers of positive stories to share.
pub fn feasible_support(feed_size: usize, capacity: usize, k: usize) -> (usize, usize) {
    let lo = capacity.saturating_sub(feed_size - k);
    (lo, capacity.min(k))
}

/// The majority rule with the default tie-break (feed ties go to the private signal).
pub fn majority_rule(params: &ModelParams) -> Result<Strategy> {
    majority_rule_with(params, TieBreak::FeedMajority)
}

pub fn majority_rule_with(params: &ModelParams, tie: TieBreak) -> Result<Strategy> {
    params.validate()?;
    majority_for(params.feed_size, params.capacity, tie)
}

pub(crate) fn majority_for(feed_size: usize, capacity: usize, tie: TieBreak) -> Result<Strategy> {
    Strategy::pure(feed_size, capacity, |s, k| {
        let evidence = 2 * k as i64 - feed_size as i64;
        let positive = match tie {
            TieBreak::FeedMajority => evidence > 0 || (evidence == 0 && s == Signal::Pos),
            TieBreak::SignalOnBalancedEvidence => {
                let total = evidence + s.value() as i64;
                total > 0 || (total == 0 && s == Signal::Pos)
            }
        };
        if positive {
            capacity
        } else {
            0
        }
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct StrategyJson {
    #[serde(rename = "K")]
    feed_size: usize,
    #[serde(rename = "C")]
    capacity: usize,
    table: BTreeMap<String, Vec<Vec<f64>>>,
}

impl From<&Strategy> for StrategyJson {
    fn from(s: &Strategy) -> Self {
        let table = Signal::BOTH
            .iter()
            .map(|&sig| {
                let rows = (0..=s.feed_size).map(|k| s.dist(sig, k).to_vec()).collect();
                (sig.key().to_string(), rows)
            })
            .collect();
        StrategyJson {
            feed_size: s.feed_size,
            capacity: s.capacity,
            table,
        }
    }
}

impl TryFrom<StrategyJson> for Strategy {
    type Error = Error;

    fn try_from(raw: StrategyJson) -> Result<Self> {
        for key in raw.table.keys() {
            if key != "s=+1" && key != "s=-1" {
                return Err(Error::Strategy(format!("unknown table key `{key}`")));
            }
        }
        let mut rows = BTreeMap::new();
        for sig in Signal::BOTH {
            let table = raw
                .table
                .get(sig.key())
                .ok_or_else(|| Error::Strategy(format!("missing table `{}`", sig.key())))?;
            if table.len() != raw.feed_size + 1 {
                return Err(Error::Strategy(format!(
                    "table `{}` has {} rows, expected K+1 = {}",
                    sig.key(),
                    table.len(),
                    raw.feed_size + 1
                )));
            }
            rows.insert(sig, table);
        }
        Strategy::from_fn(raw.feed_size, raw.capacity, |s, k| rows[&s][k].clone())
    }
}
