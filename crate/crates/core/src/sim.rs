//! Exact Monte Carlo simulation of the sharing process.
//!
//! The platform is summarized by four counters: number of stories and total
//! popularity score for each realization. Feeds are sampled with replacement,
//! so given the counters the number of positive stories in a feed is a single
//! `Binomial(K, θ)` draw with `θ = λ·x + (1−λ)·z`. The true state is fixed to
//! `ω = +1`; the mirrored process (truth `ω = −1`) is obtained through
//! [`Orientation::Mirror`], which only swaps which realization fresh stories
//! and bots favour.
//!
//! Every run draws from its own ChaCha8 generator keyed by
//! `seed = base_seed ^ run_index`, so ensembles are reproducible regardless of
//! how runs are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inflow::{census, fixed_points, FixedPointReport, InflowFn, RootConfig};
use crate::model::{feasible_support, ModelParams, Signal, Strategy};

/// Default distance within which a final viral accuracy is assigned to a fixed point.
pub const DEFAULT_CLASSIFY_RADIUS: f64 = 0.08;

/// Sufficient statistic of the platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlatformState {
    pub count_pos: u64,
    pub count_neg: u64,
    pub score_pos: u64,
    pub score_neg: u64,
    /// Arrivals so far, bots included.
    pub t: u64,
    pub bots: u64,
    /// Bots that arrived when no incorrect story existed and so changed nothing.
    pub idle_bots: u64,
}

impl PlatformState {
    pub fn empty() -> Self {
        PlatformState::default()
    }

    /// Share of total popularity held by positive stories; 1/2 on an empty platform.
    pub fn viral_accuracy(&self) -> f64 {
        let total = self.score_pos + self.score_neg;
        if total == 0 {
            0.5
        } else {
            self.score_pos as f64 / total as f64
        }
    }

    /// Share of posted stories that are positive; 1/2 on an empty platform.
    pub fn story_fraction(&self) -> f64 {
        let total = self.count_pos + self.count_neg;
        if total == 0 {
            0.5
        } else {
            self.count_pos as f64 / total as f64
        }
    }

    /// Checks the bookkeeping identities for feed size `K` and capacity `C`.
    pub fn check_invariants(&self, feed_size: usize, capacity: usize) -> Result<()> {
        let fail = |what: String| {
            Err(Error::Sequencing(format!(
                "state invariant violated: {what}"
            )))
        };
        if self.score_pos < self.count_pos || self.score_neg < self.count_neg {
            return fail(format!("scores below counts in {self:?}"));
        }
        let kk = feed_size as u64;
        let stories = self.count_pos + self.count_neg;
        let score = self.score_pos + self.score_neg;
        if self.t < kk {
            if stories != self.t || score != self.t || self.bots != 0 {
                return fail(format!("seeding phase mismatch in {self:?}"));
            }
            return Ok(());
        }
        if stories != kk + (self.t - kk - self.bots) {
            return fail(format!("story count {stories} at t = {}", self.t));
        }
        let expected = kk + (self.t - kk - self.idle_bots) * (capacity as u64 + 1);
        if score != expected {
            return fail(format!(
                "total score {score}, expected {expected} at t = {}",
                self.t
            ));
        }
        Ok(())
    }
}

/// Which realization is the truth in the simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `ω = +1`: fresh stories are positive with probability `q`, bots push negative stories.
    #[default]
    Truth,
    /// `ω = −1`: fresh stories are positive with probability `1 − q`, bots push positive stories.
    Mirror,
}

/// `θ = λ·x + (1−λ)·z`, the chance a feed slot shows a positive story.
pub fn feed_positive_probability(state: &PlatformState, params: &ModelParams) -> Result<f64> {
    if state.t < params.feed_size as u64 {
        return Err(Error::Sequencing(format!(
            "no feed exists before K = {} stories are posted (t = {})",
            params.feed_size, state.t
        )));
    }
    Ok(params.lambda * state.viral_accuracy() + (1.0 - params.lambda) * state.story_fraction())
}

/// Number of positive stories in a freshly sampled feed.
pub fn sample_feed_count<R: Rng + ?Sized>(
    state: &PlatformState,
    params: &ModelParams,
    rng: &mut R,
) -> Result<usize> {
    let theta = feed_positive_probability(state, params)?;
    Ok(binomial_inversion(
        params.feed_size,
        theta,
        rng.random::<f64>(),
    ))
}

/// `Binomial(trials, p)` by sequential inversion of the uniform `u`.
/// Works on the tail with success probability at most 1/2 for accuracy.
#[inline]
pub fn binomial_inversion(trials: usize, p: f64, u: f64) -> usize {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    let (pp, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let odds = pp / (1.0 - pp);
    let mut pmf = (1.0 - pp).powi(trials as i32);
    let mut cdf = pmf;
    let mut j = 0;
    while u >= cdf && j < trials {
        pmf *= odds * (trials - j) as f64 / (j + 1) as f64;
        j += 1;
        cdf += pmf;
    }
    if flip {
        trials - j
    } else {
        j
    }
}

/// Inversion sampler for a fixed number of trials, with the pmf step
/// ratios `(n−j)/(j+1)` precomputed.
#[derive(Debug, Clone)]
struct BinomialSampler {
    trials: usize,
    ratios: Vec<f64>,
}

impl BinomialSampler {
    fn new(trials: usize) -> Self {
        BinomialSampler {
            trials,
            ratios: (0..trials)
                .map(|j| (trials - j) as f64 / (j + 1) as f64)
                .collect(),
        }
    }

    #[inline]
    fn sample(&self, p: f64, u: f64) -> usize {
        if p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return self.trials;
        }
        let (pp, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
        let odds = pp / (1.0 - pp);
        let mut pmf = (1.0 - pp).powi(self.trials as i32);
        let mut cdf = pmf;
        let mut j = 0;
        while u >= cdf && j < self.trials {
            pmf *= odds * self.ratios[j];
            j += 1;
            cdf += pmf;
        }
        if flip {
            self.trials - j
        } else {
            j
        }
    }
}

#[derive(Debug, Clone)]
enum CellRule {
    Pure(usize),
    Mixed(Vec<f64>),
}

/// Sampling-ready form of a strategy plus the environment.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: ModelParams,
    cells: Vec<CellRule>,
    supports: Vec<(usize, usize)>,
    binomial: BinomialSampler,
    orientation: Orientation,
}

/// Hooks into a running trajectory. Default methods do nothing.
pub trait Observer {
    /// A regular agent at position `t` (0-based) saw signal `s` and `k` positive feed stories.
    #[inline]
    fn on_observation(&mut self, _t: u64, _s: Signal, _k: usize) {}

    /// Called after every arrival with the updated state.
    #[inline]
    fn on_step(&mut self, _state: &PlatformState) {}
}

impl Observer for () {}

impl Simulator {
    pub fn new(sigma: &Strategy, params: &ModelParams) -> Result<Self> {
        Self::with_orientation(sigma, params, Orientation::Truth)
    }

    pub fn with_orientation(
        sigma: &Strategy,
        params: &ModelParams,
        orientation: Orientation,
    ) -> Result<Self> {
        params.validate()?;
        if sigma.feed_size() != params.feed_size || sigma.capacity() != params.capacity {
            return Err(Error::Strategy(format!(
                "strategy built for K = {}, C = {} but parameters have K = {}, C = {}",
                sigma.feed_size(),
                sigma.capacity(),
                params.feed_size,
                params.capacity
            )));
        }
        let (kk, cc) = (params.feed_size, params.capacity);
        let mut cells = Vec::with_capacity(2 * (kk + 1));
        let mut supports = Vec::with_capacity(2 * (kk + 1));
        for s in Signal::BOTH {
            for k in 0..=kk {
                let rule = match sigma.pure_choice(s, k) {
                    Some(z) => CellRule::Pure(z),
                    None => {
                        let mut acc = 0.0;
                        let cdf = sigma
                            .dist(s, k)
                            .iter()
                            .map(|p| {
                                acc += p;
                                acc
                            })
                            .collect();
                        CellRule::Mixed(cdf)
                    }
                };
                cells.push(rule);
                supports.push(feasible_support(kk, cc, k));
            }
        }
        Ok(Simulator {
            params: *params,
            cells,
            supports,
            binomial: BinomialSampler::new(kk),
            orientation,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn positive_rate(&self) -> f64 {
        match self.orientation {
            Orientation::Truth => self.params.q,
            Orientation::Mirror => 1.0 - self.params.q,
        }
    }

    #[inline]
    fn draw_share<R: Rng + ?Sized>(&self, s: Signal, k: usize, rng: &mut R) -> usize {
        match &self.cells[s.index() * (self.params.feed_size + 1) + k] {
            CellRule::Pure(z) => *z,
            CellRule::Mixed(cdf) => {
                let u = rng.random::<f64>();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
            }
        }
    }

    /// Advances the platform by one arrival.
    pub fn step<R: Rng + ?Sized, O: Observer + ?Sized>(
        &self,
        state: &mut PlatformState,
        rng: &mut R,
        observer: &mut O,
    ) -> Result<()> {
        let kk = self.params.feed_size;
        let cc = self.params.capacity as u64;
        let pos_rate = self.positive_rate();
        if state.t < kk as u64 {
            if rng.random::<f64>() < pos_rate {
                state.count_pos += 1;
                state.score_pos += 1;
            } else {
                state.count_neg += 1;
                state.score_neg += 1;
            }
            state.t += 1;
            observer.on_step(state);
            return Ok(());
        }
        if self.params.iota > 0.0 && rng.random::<f64>() < self.params.iota {
            let (count, score) = match self.orientation {
                Orientation::Truth => (state.count_neg, &mut state.score_neg),
                Orientation::Mirror => (state.count_pos, &mut state.score_pos),
            };
            if count > 0 {
                *score += cc + 1;
            } else {
                state.idle_bots += 1;
            }
            state.bots += 1;
            state.t += 1;
            observer.on_step(state);
            return Ok(());
        }
        let s = if rng.random::<f64>() < pos_rate {
            Signal::Pos
        } else {
            Signal::Neg
        };
        // λ·x + (1−λ)·z over a common denominator
        let scores = (state.score_pos + state.score_neg) as f64;
        let stories = (state.count_pos + state.count_neg) as f64;
        let theta = (self.params.lambda * state.score_pos as f64 * stories
            + (1.0 - self.params.lambda) * state.count_pos as f64 * scores)
            / (scores * stories);
        let k = self.binomial.sample(theta, rng.random::<f64>());
        observer.on_observation(state.t, s, k);
        let z = self.draw_share(s, k, rng);
        let (lo, hi) = self.supports[s.index() * (kk + 1) + k];
        if z < lo || z > hi {
            return Err(Error::Strategy(format!(
                "drew infeasible share z = {z} at (s={s}, k={k}); support is [{lo}, {hi}]"
            )));
        }
        let z = z as u64;
        match s {
            Signal::Pos => {
                state.count_pos += 1;
                state.score_pos += z + 1;
                state.score_neg += cc - z;
            }
            Signal::Neg => {
                state.count_neg += 1;
                state.score_pos += z;
                state.score_neg += cc - z + 1;
            }
        }
        state.t += 1;
        debug_assert!(state.check_invariants(kk, cc as usize).is_ok(), "{state:?}");
        observer.on_step(state);
        Ok(())
    }

    /// Runs `horizon` arrivals from an empty platform.
    pub fn run<R: Rng + ?Sized, O: Observer + ?Sized>(
        &self,
        horizon: usize,
        rng: &mut R,
        observer: &mut O,
    ) -> Result<PlatformState> {
        let mut state = PlatformState::empty();
        self.advance(&mut state, horizon, rng, observer)?;
        Ok(state)
    }

    /// Continues `state` until `until` arrivals have happened.
    pub fn advance<R: Rng + ?Sized, O: Observer + ?Sized>(
        &self,
        state: &mut PlatformState,
        until: usize,
        rng: &mut R,
        observer: &mut O,
    ) -> Result<()> {
        while state.t < until as u64 {
            self.step(state, rng, observer)?;
        }
        Ok(())
    }
}

/// Functional form of a single arrival.
pub fn advance_one_agent<R: Rng + ?Sized>(
    state: &PlatformState,
    sigma: &Strategy,
    params: &ModelParams,
    rng: &mut R,
) -> Result<PlatformState> {
    let sim = Simulator::new(sigma, params)?;
    let mut next = *state;
    sim.step(&mut next, rng, &mut ())?;
    Ok(next)
}

/// The generator used for a run seed.
pub fn run_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of run `index` in an ensemble.
pub fn run_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ index
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: u64,
    pub x: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub final_x: f64,
    pub final_z: f64,
    /// Index into the fixed-point list used for classification.
    pub assigned: Option<usize>,
    pub path: Option<Vec<PathPoint>>,
}

/// Records `(t, x, z)` at roughly logarithmically spaced arrivals.
#[derive(Debug, Clone, Default)]
pub struct PathRecorder {
    next: u64,
    pub points: Vec<PathPoint>,
}

impl PathRecorder {
    pub fn new() -> Self {
        PathRecorder {
            next: 1,
            points: Vec::new(),
        }
    }
}

impl Observer for PathRecorder {
    fn on_step(&mut self, state: &PlatformState) {
        if state.t >= self.next {
            self.points.push(PathPoint {
                t: state.t,
                x: state.viral_accuracy(),
                z: state.story_fraction(),
            });
            // about 20 points per decade
            self.next = ((self.next as f64 * 1.122).ceil() as u64).max(self.next + 1);
        }
    }
}

/// Index of the nearest fixed point within `radius`, if any.
pub fn classify(x: f64, fixed: &[FixedPointReport], radius: f64) -> Option<usize> {
    fixed
        .iter()
        .enumerate()
        .map(|(i, f)| (i, (f.x_star - x).abs()))
        .filter(|&(_, d)| d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions<'a> {
    pub horizon: usize,
    pub classify_against: &'a [FixedPointReport],
    pub classify_radius: f64,
    pub record_path: bool,
    pub orientation: Orientation,
}

impl<'a> RunOptions<'a> {
    pub fn new(horizon: usize) -> Self {
        RunOptions {
            horizon,
            classify_against: &[],
            classify_radius: DEFAULT_CLASSIFY_RADIUS,
            record_path: false,
            orientation: Orientation::Truth,
        }
    }
}

/// One trajectory of `params.agents` arrivals, classified against `fixed`.
pub fn run_trajectory(
    sigma: &Strategy,
    params: &ModelParams,
    seed: u64,
    fixed: &[FixedPointReport],
    record_path: bool,
) -> Result<RunResult> {
    let opts = RunOptions {
        classify_against: fixed,
        record_path,
        ..RunOptions::new(params.agents)
    };
    let sim = Simulator::with_orientation(sigma, params, opts.orientation)?;
    run_with(&sim, seed, &opts)
}

pub fn run_with(sim: &Simulator, seed: u64, opts: &RunOptions<'_>) -> Result<RunResult> {
    let mut rng = run_rng(seed);
    let (state, path) = if opts.record_path {
        let mut rec = PathRecorder::new();
        let state = sim.run(opts.horizon, &mut rng, &mut rec)?;
        if rec.points.last().map(|p| p.t) != Some(state.t) {
            rec.points.push(PathPoint {
                t: state.t,
                x: state.viral_accuracy(),
                z: state.story_fraction(),
            });
        }
        (state, Some(rec.points))
    } else {
        (sim.run(opts.horizon, &mut rng, &mut ())?, None)
    };
    let final_x = state.viral_accuracy();
    Ok(RunResult {
        seed,
        final_x,
        final_z: state.story_fraction(),
        assigned: classify(final_x, opts.classify_against, opts.classify_radius),
        path,
    })
}

/// A platform objective `f` on final viral accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `f(x) = x`
    Accuracy,
    /// `f(x) = |x − 1/2|`
    Agreement,
    /// Values at `x = i/(len−1)`, linearly interpolated. Usually 1025 points.
    Tabulated { name: String, values: Vec<f64> },
}

impl Objective {
    pub fn tabulated(name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(
                "objective",
                "a table needs at least two finite values",
            ));
        }
        Ok(Objective::Tabulated {
            name: name.into(),
            values,
        })
    }

    /// Tabulates `f` on the standard 1025-point grid.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::tabulated(name, (0..1025).map(|i| f(i as f64 / 1024.0)).collect())
    }

    pub fn name(&self) -> &str {
        match self {
            Objective::Accuracy => "accuracy",
            Objective::Agreement => "agreement",
            Objective::Tabulated { name, .. } => name,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Objective::Accuracy => x,
            Objective::Agreement => (x - 0.5).abs(),
            Objective::Tabulated { values, .. } => {
                let x = x.clamp(0.0, 1.0);
                let pos = x * (values.len() - 1) as f64;
                let i = (pos.floor() as usize).min(values.len() - 2);
                let w = pos - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterStats {
    pub x_star: f64,
    pub stability: crate::inflow::Stability,
    pub label: crate::inflow::SteadyLabel,
    pub count: usize,
    pub frequency: f64,
    pub std_error: f64,
    /// Mean final viral accuracy of the runs assigned here, if any.
    pub mean_final_x: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub runs: usize,
}

impl Estimate {
    /// Sample mean with a normal 95% interval.
    pub fn from_samples(name: impl Into<String>, samples: impl IntoIterator<Item = f64>) -> Self {
        let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
        for v in samples {
            n += 1;
            let d = v - mean;
            mean += d / n as f64;
            m2 += d * (v - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        let se = if n > 0 {
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Estimate {
            name: name.into(),
            mean,
            std_error: se,
            ci_lo: mean - 1.96 * se,
            ci_hi: mean + 1.96 * se,
            runs: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub runs: usize,
    pub base_seed: u64,
    pub fixed_points: Vec<FixedPointReport>,
    pub clusters: Vec<ClusterStats>,
    pub unassigned: usize,
    /// Every fixed point of `σ`, unstable ones included.
    pub all_fixed_points: Vec<FixedPointReport>,
    /// Runs grouped by the fixed point their final state flows to under the
    /// mean-field dynamics `dx/dt = φ(x) − x`; indexes `all_fixed_points`.
    /// Empty for mirrored ensembles.
    pub projected: Vec<ClusterStats>,
    /// Objectives evaluated at each run's projected fixed point: the large-`n` payoff.
    pub limit_objectives: Vec<Estimate>,
    pub mean_final_x: f64,
    pub mean_final_z: f64,
    pub objectives: Vec<Estimate>,
    #[serde(skip)]
    pub results: Vec<RunResult>,
}

impl EnsembleStats {
    /// Total frequency of runs assigned to (weakly) misleading fixed points.
    pub fn misleading_frequency(&self) -> f64 {
        self.clusters
            .iter()
            .filter(|c| c.label.is_misleading())
            .map(|c| c.frequency)
            .sum()
    }

    pub fn informative_frequency(&self) -> f64 {
        self.clusters
            .iter()
            .filter(|c| !c.label.is_misleading())
            .map(|c| c.frequency)
            .sum()
    }

    pub fn objective(&self, name: &str) -> Option<&Estimate> {
        self.objectives.iter().find(|e| e.name == name)
    }

    pub fn limit_objective(&self, name: &str) -> Option<&Estimate> {
        self.limit_objectives.iter().find(|e| e.name == name)
    }

    /// Share of runs flowing to an informative fixed point, with its standard error.
    pub fn projected_informative(&self) -> (f64, f64) {
        let p: f64 = self
            .projected
            .iter()
            .filter(|c| c.label.is_informative())
            .map(|c| c.frequency)
            .sum();
        (p, (p * (1.0 - p) / self.runs as f64).sqrt())
    }
}

/// Index of the fixed point reached from `x` by following the sign of `φ(x) − x`.
/// `fixed` must hold every fixed point of `inflow`.
pub fn project_to_fixed_point(
    x: f64,
    inflow: &InflowFn,
    fixed: &[FixedPointReport],
) -> Option<usize> {
    if let Some(i) = fixed.iter().position(|f| (f.x_star - x).abs() <= 1e-9) {
        return Some(i);
    }
    let up = inflow.gap(x) > 0.0;
    fixed
        .iter()
        .enumerate()
        .filter(|(_, f)| if up { f.x_star > x } else { f.x_star < x })
        .min_by(|a, b| (a.1.x_star - x).abs().total_cmp(&(b.1.x_star - x).abs()))
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub m_runs: usize,
    pub base_seed: u64,
    /// Arrivals per run; defaults to `params.agents`.
    pub horizon: Option<usize>,
    pub classify_radius: f64,
    /// Classify against these points instead of the steady states of `σ`.
    pub fixed_points: Option<Vec<FixedPointReport>>,
    pub orientation: Orientation,
}

impl EnsembleConfig {
    pub fn new(m_runs: usize, base_seed: u64) -> Self {
        EnsembleConfig {
            m_runs,
            base_seed,
            horizon: None,
            classify_radius: DEFAULT_CLASSIFY_RADIUS,
            fixed_points: None,
            orientation: Orientation::Truth,
        }
    }
}

/// Steady-state candidates of `σ` (fixed points stable from at least one side).
pub fn steady_states(sigma: &Strategy, params: &ModelParams) -> Result<Vec<FixedPointReport>> {
    Ok(fixed_points(sigma, params, params.iota)?
        .into_iter()
        .filter(|f| f.stability.is_steady_state())
        .collect())
}

/// `m_runs` independent trajectories with per-run seeds `base_seed ^ i`.
pub fn run_ensemble(
    sigma: &Strategy,
    params: &ModelParams,
    m_runs: usize,
    base_seed: u64,
    objectives: &[Objective],
) -> Result<EnsembleStats> {
    run_ensemble_with(
        sigma,
        params,
        &EnsembleConfig::new(m_runs, base_seed),
        objectives,
    )
}

pub fn run_ensemble_with(
    sigma: &Strategy,
    params: &ModelParams,
    cfg: &EnsembleConfig,
    objectives: &[Objective],
) -> Result<EnsembleStats> {
    if cfg.m_runs == 0 {
        return Err(Error::domain("m_runs", "need at least one run"));
    }
    let sim = Simulator::with_orientation(sigma, params, cfg.orientation)?;
    let inflow = InflowFn::new(sigma, params, params.iota)?;
    let all = census(&inflow, &RootConfig::default())?;
    let fixed = match &cfg.fixed_points {
        Some(f) => f.clone(),
        None => all
            .iter()
            .filter(|f| f.stability.is_steady_state())
            .cloned()
            .collect(),
    };
    let opts = RunOptions {
        horizon: cfg.horizon.unwrap_or(params.agents),
        classify_against: &fixed,
        classify_radius: cfg.classify_radius,
        record_path: false,
        orientation: cfg.orientation,
    };
    let results: Vec<RunResult> = (0..cfg.m_runs as u64)
        .into_par_iter()
        .map(|i| run_with(&sim, run_seed(cfg.base_seed, i), &opts))
        .collect::<Result<_>>()?;
    let projection = (cfg.orientation == Orientation::Truth).then_some((&inflow, all.as_slice()));
    Ok(summarize(
        results,
        fixed,
        projection,
        cfg.base_seed,
        objectives,
    ))
}

/// Aggregates per-run results in run-index order, so the outcome does not
/// depend on how runs were scheduled.
pub fn summarize(
    results: Vec<RunResult>,
    fixed: Vec<FixedPointReport>,
    projection: Option<(&InflowFn, &[FixedPointReport])>,
    base_seed: u64,
    objectives: &[Objective],
) -> EnsembleStats {
    let m = results.len();
    let assigned: Vec<Option<usize>> = results.iter().map(|r| r.assigned).collect();
    let clusters = group(&results, &fixed, &assigned);
    let (all_fixed_points, projected, limit_objectives) = match projection {
        Some((inflow, all)) => {
            let limits: Vec<Option<usize>> = results
                .iter()
                .map(|r| project_to_fixed_point(r.final_x, inflow, all))
                .collect();
            let limit_objectives = objectives
                .iter()
                .map(|o| {
                    Estimate::from_samples(
                        o.name(),
                        results
                            .iter()
                            .zip(&limits)
                            .map(|(r, l)| o.eval(l.map_or(r.final_x, |i| all[i].x_star))),
                    )
                })
                .collect();
            (
                all.to_vec(),
                group(&results, all, &limits),
                limit_objectives,
            )
        }
        None => (Vec::new(), Vec::new(), Vec::new()),
    };
    let objectives = objectives
        .iter()
        .map(|o| Estimate::from_samples(o.name(), results.iter().map(|r| o.eval(r.final_x))))
        .collect();
    EnsembleStats {
        runs: m,
        base_seed,
        fixed_points: fixed,
        clusters,
        unassigned: assigned.iter().filter(|a| a.is_none()).count(),
        all_fixed_points,
        projected,
        limit_objectives,
        mean_final_x: results.iter().map(|r| r.final_x).sum::<f64>() / m as f64,
        mean_final_z: results.iter().map(|r| r.final_z).sum::<f64>() / m as f64,
        objectives,
        results,
    }
}

fn group(
    results: &[RunResult],
    fixed: &[FixedPointReport],
    labels: &[Option<usize>],
) -> Vec<ClusterStats> {
    let m = results.len() as f64;
    fixed
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let xs: Vec<f64> = results
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == Some(i))
                .map(|(r, _)| r.final_x)
                .collect();
            let p = xs.len() as f64 / m;
            ClusterStats {
                x_star: f.x_star,
                stability: f.stability,
                label: f.label,
                count: xs.len(),
                frequency: p,
                std_error: (p * (1.0 - p) / m).sqrt(),
                mean_final_x: (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::majority_rule;

    fn params(lambda: f64) -> ModelParams {
        ModelParams::new(0.55, 7, 3, lambda).unwrap()
    }

    #[test]
    fn feed_probability_examples() {
        let balanced = PlatformState {
            count_pos: 5,
            count_neg: 5,
            score_pos: 9,
            score_neg: 1,
            t: 10,
            ..Default::default()
        };
        let p0 = ModelParams::new(0.55, 6, 3, 0.0).unwrap();
        assert_eq!(feed_positive_probability(&balanced, &p0).unwrap(), 0.5);
        let popular = PlatformState {
            count_pos: 3,
            count_neg: 7,
            score_pos: 20,
            score_neg: 10,
            t: 10,
            ..Default::default()
        };
        let p1 = p0.with_lambda(1.0).unwrap();
        assert!((feed_positive_probability(&popular, &p1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn feed_before_k_stories_is_an_error() {
        let state = PlatformState {
            count_pos: 2,
            score_pos: 2,
            t: 2,
            ..Default::default()
        };
        let mut rng = run_rng(1);
        assert!(matches!(
            sample_feed_count(&state, &params(0.5), &mut rng),
            Err(Error::Sequencing(_))
        ));
    }

    #[test]
    fn binomial_inversion_edges() {
        assert_eq!(binomial_inversion(7, 0.0, 0.9), 0);
        assert_eq!(binomial_inversion(7, 1.0, 0.1), 7);
        assert_eq!(binomial_inversion(7, 0.3, 0.0), 0);
        assert_eq!(binomial_inversion(7, 0.3, 1.0 - 1e-16), 7);
        // u just below P[X = 0] = 0.5^2
        assert_eq!(binomial_inversion(2, 0.5, 0.2499), 0);
        assert_eq!(binomial_inversion(2, 0.5, 0.2501), 1);
        assert_eq!(binomial_inversion(2, 0.5, 0.7501), 2);
    }

    #[test]
    fn bookkeeping_for_a_full_positive_share() {
        // every cell shares as many positive stories as possible
        let sigma = Strategy::pure(7, 3, |_, k| k.min(3)).unwrap();
        let p = params(1.0);
        let sim = Simulator::new(&sigma, &p).unwrap();
        let mut state = PlatformState {
            count_pos: 7,
            score_pos: 7,
            t: 7,
            ..Default::default()
        };
        let mut rng = run_rng(3);
        // all-positive platform: k = 7, z = 3
        let before = state;
        sim.step(&mut state, &mut rng, &mut ()).unwrap();
        let grew_pos = state.count_pos - before.count_pos;
        assert_eq!(
            state.score_neg - before.score_neg,
            if grew_pos == 1 { 0 } else { 1 }
        );
        assert_eq!(state.score_pos - before.score_pos, 3 + grew_pos);
        assert_eq!(state.t, 8);
    }

    #[test]
    fn bots_push_incorrect_stories() {
        let sigma = majority_rule(&params(1.0)).unwrap();
        let p = params(1.0).with_iota(0.999_999).unwrap();
        let sim = Simulator::new(&sigma, &p).unwrap();
        let mut rng = run_rng(5);
        let mut state = PlatformState {
            count_pos: 5,
            count_neg: 2,
            score_pos: 5,
            score_neg: 2,
            t: 7,
            ..Default::default()
        };
        sim.step(&mut state, &mut rng, &mut ()).unwrap();
        assert_eq!(
            (state.score_neg, state.count_neg, state.count_pos),
            (6, 2, 5)
        );
        assert_eq!((state.t, state.bots), (8, 1));
        state.check_invariants(7, 3).unwrap();

        let mut clean = PlatformState {
            count_pos: 7,
            score_pos: 7,
            t: 7,
            ..Default::default()
        };
        sim.step(&mut clean, &mut rng, &mut ()).unwrap();
        assert_eq!((clean.score_pos, clean.score_neg), (7, 0));
        assert_eq!((clean.t, clean.bots, clean.idle_bots), (8, 1, 1));
        clean.check_invariants(7, 3).unwrap();
    }

    #[test]
    fn trajectories_are_deterministic() {
        let p = params(0.9).with_agents(3000).unwrap();
        let sigma = majority_rule(&p).unwrap();
        let fixed = steady_states(&sigma, &p).unwrap();
        let a = run_trajectory(&sigma, &p, 42, &fixed, true).unwrap();
        let b = run_trajectory(&sigma, &p, 42, &fixed, true).unwrap();
        assert_eq!(a, b);
        let c = run_trajectory(&sigma, &p, 43, &fixed, false).unwrap();
        assert_ne!(a.final_x, c.final_x);
        let path = a.path.unwrap();
        assert_eq!(path.last().unwrap().t, 3000);
        assert!(path.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn invariants_hold_along_a_run() {
        struct Check(usize, usize);
        impl Observer for Check {
            fn on_step(&mut self, s: &PlatformState) {
                s.check_invariants(self.0, self.1).unwrap();
            }
        }
        let p = params(0.8).with_iota(0.1).unwrap();
        let sigma = majority_rule(&p).unwrap();
        let sim = Simulator::new(&sigma, &p).unwrap();
        let mut rng = run_rng(9);
        let end = sim.run(5000, &mut rng, &mut Check(7, 3)).unwrap();
        assert_eq!(end.t, 5000);
        assert!(end.bots > 300);
    }

    #[test]
    fn single_run_ensemble_matches_trajectory() {
        let p = params(0.9).with_agents(2000).unwrap();
        let sigma = majority_rule(&p).unwrap();
        let fixed = steady_states(&sigma, &p).unwrap();
        let stats = run_ensemble(&sigma, &p, 1, 77, &[Objective::Accuracy]).unwrap();
        let single = run_trajectory(&sigma, &p, 77, &fixed, false).unwrap();
        assert_eq!(stats.results[0], single);
        assert_eq!(stats.objective("accuracy").unwrap().mean, single.final_x);
        assert!(run_ensemble(&sigma, &p, 0, 1, &[]).is_err());
    }

    #[test]
    fn ensemble_frequencies_are_consistent() {
        let p = params(0.9).with_agents(2000).unwrap();
        let sigma = majority_rule(&p).unwrap();
        let stats = run_ensemble(&sigma, &p, 200, 5, &[]).unwrap();
        let total: f64 = stats.clusters.iter().map(|c| c.frequency).sum();
        assert!(total <= 1.0 + 1e-12);
        assert_eq!(
            stats.clusters.iter().map(|c| c.count).sum::<usize>() + stats.unassigned,
            200
        );
        for c in &stats.clusters {
            let expect = (c.frequency * (1.0 - c.frequency) / 200.0).sqrt();
            assert!((c.std_error - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn objectives() {
        assert_eq!(Objective::Agreement.eval(0.2), 0.3);
        let t = Objective::from_fn("square", |x| x * x).unwrap();
        assert!((t.eval(0.5) - 0.25).abs() < 1e-12);
        assert!((t.eval(0.3) - 0.09).abs() < 1e-6);
        assert!(Objective::tabulated("bad", vec![1.0]).is_err());
    }

    #[test]
    fn projection_follows_the_mean_field_flow() {
        let p = params(0.9);
        let sigma = majority_rule(&p).unwrap();
        let inflow = InflowFn::new(&sigma, &p, 0.0).unwrap();
        let all = fixed_points(&sigma, &p, 0.0).unwrap();
        assert_eq!(all.len(), 3);
        let sep = all[1].x_star;
        assert_eq!(project_to_fixed_point(sep + 1e-4, &inflow, &all), Some(2));
        assert_eq!(project_to_fixed_point(sep - 1e-4, &inflow, &all), Some(0));
        assert_eq!(project_to_fixed_point(0.0, &inflow, &all), Some(0));
        assert_eq!(project_to_fixed_point(1.0, &inflow, &all), Some(2));
        assert_eq!(project_to_fixed_point(sep, &inflow, &all), Some(1));
    }

    #[test]
    fn classify_nearest_within_radius() {
        let p = params(0.9);
        let sigma = majority_rule(&p).unwrap();
        let fixed = steady_states(&sigma, &p).unwrap();
        assert_eq!(fixed.len(), 2);
        assert_eq!(classify(fixed[1].x_star + 0.01, &fixed, 0.08), Some(1));
        assert_eq!(classify(0.5, &fixed, 0.08), None);
    }
}
