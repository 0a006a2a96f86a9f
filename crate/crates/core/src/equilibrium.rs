//! Simulation-based equilibrium estimation.
//!
//! Agents do not know their position, so their belief after observing `(s, k)`
//! averages over positions `K+1..n`. The simulator runs under `ω = +1` and
//! counts every regular agent's observation; for a state-symmetric strategy the
//! frequency of `(s, k)` under `ω = −1` equals the frequency of `(−s, K−k)`
//! under `ω = +1`, which gives the posterior without a second set of runs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inflow::{fixed_points, Stability};
use crate::model::{feasible_support, majority_rule, ModelParams, Signal, Strategy};
use crate::sim::{run_rng, run_seed, Observer, PlatformState, Simulator};

/// Cells with fewer pooled samples than this are flagged.
pub const LOW_CONFIDENCE_SAMPLES: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorCell {
    pub signal: Signal,
    pub k: usize,
    /// Smoothed estimate of `P(ω = +1 | s, k)`.
    pub belief: f64,
    /// Run-clustered standard error of `belief`.
    pub std_error: f64,
    /// Count of `(s, k)` under `ω = +1` (estimated when runs are split).
    pub count: f64,
    /// Count of the mirror observation `(−s, K−k)` under `ω = +1`.
    pub mirror_count: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorTable {
    pub feed_size: usize,
    pub n: usize,
    pub runs: usize,
    /// Indexed `[s][k]` with `s = +1` first.
    pub cells: Vec<PosteriorCell>,
}

/// Second-phase sample of one stratum of split runs.
#[derive(Debug, Clone, Default)]
struct StratumSample {
    size: usize,
    /// Counts accrued after the split by the runs that were continued.
    kept_tails: Vec<Vec<f64>>,
}

impl PosteriorTable {
    pub fn cell(&self, s: Signal, k: usize) -> &PosteriorCell {
        &self.cells[s.index() * (self.feed_size + 1) + k]
    }

    pub fn belief(&self, s: Signal, k: usize) -> f64 {
        self.cell(s, k).belief
    }

    /// Builds the table from per-run counts indexed `[s][k]`.
    pub fn from_run_counts(feed_size: usize, n: usize, per_run: &[Vec<u64>]) -> Self {
        let runs: Vec<Vec<f64>> = per_run
            .iter()
            .map(|r| r.iter().map(|&c| c as f64).collect())
            .collect();
        Self::assemble(feed_size, n, &runs, &[])
    }

    fn assemble(feed_size: usize, n: usize, runs: &[Vec<f64>], strata: &[StratumSample]) -> Self {
        let width = feed_size + 1;
        let idx = |s: Signal, k: usize| s.index() * width + k;
        let mut cells = Vec::with_capacity(2 * width);
        for s in Signal::BOTH {
            for k in 0..=feed_size {
                let (i, j) = (idx(s, k), idx(s.flip(), feed_size - k));
                let a: f64 = runs.iter().map(|r| r[i]).sum();
                let b: f64 = runs.iter().map(|r| r[j]).sum();
                let belief = (a + 1.0) / (a + b + 2.0);
                let resid = |r: &Vec<f64>| r[i] - belief * (r[i] + r[j]);
                let std_error = if a + b <= 0.0 {
                    0.5
                } else {
                    // ratio estimator with runs as clusters, plus the
                    // second-phase variance of imputed strata
                    let mut ss: f64 = runs.iter().map(|r| resid(r).powi(2)).sum();
                    for h in strata {
                        let kept = h.kept_tails.len();
                        if kept > 1 && kept < h.size {
                            let e: Vec<f64> = h.kept_tails.iter().map(resid).collect();
                            let mean = e.iter().sum::<f64>() / kept as f64;
                            let var = e.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                                / (kept - 1) as f64;
                            let big = h.size as f64;
                            ss += big * big * (1.0 / kept as f64 - 1.0 / big) * var;
                        }
                    }
                    ss.sqrt() / (a + b)
                };
                cells.push(PosteriorCell {
                    signal: s,
                    k,
                    belief,
                    std_error,
                    count: a,
                    mirror_count: b,
                    low_confidence: a + b < LOW_CONFIDENCE_SAMPLES,
                });
            }
        }
        PosteriorTable {
            feed_size,
            n,
            runs: runs.len(),
            cells,
        }
    }

    /// Largest violation of `P(1|s,k) + P(1|−s,K−k) = 1`, in pooled standard errors.
    pub fn symmetry_defect(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| {
                let m = self.cell(c.signal.flip(), self.feed_size - c.k);
                let pooled = (c.std_error.powi(2) + m.std_error.powi(2))
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                (c.belief + m.belief - 1.0).abs() / pooled
            })
            .fold(0.0, f64::max)
    }
}

/// Counts observations per `(s, k)`, snapshotting at the given arrival counts.
#[derive(Debug, Clone)]
pub struct CellCounter {
    width: usize,
    checkpoints: Vec<u64>,
    next: usize,
    current: Vec<u64>,
    pub snapshots: Vec<Vec<u64>>,
}

impl CellCounter {
    pub fn new(feed_size: usize, checkpoints: &[usize]) -> Self {
        CellCounter {
            width: feed_size + 1,
            checkpoints: checkpoints.iter().map(|&c| c as u64).collect(),
            next: 0,
            current: vec![0; 2 * (feed_size + 1)],
            snapshots: Vec::with_capacity(checkpoints.len()),
        }
    }

    pub fn current(&self) -> &[u64] {
        &self.current
    }
}

impl Observer for CellCounter {
    #[inline]
    fn on_observation(&mut self, _t: u64, s: Signal, k: usize) {
        self.current[s.index() * self.width + k] += 1;
    }

    #[inline]
    fn on_step(&mut self, state: &PlatformState) {
        if self.next < self.checkpoints.len() && state.t == self.checkpoints[self.next] {
            self.snapshots.push(self.current.clone());
            self.next += 1;
        }
    }
}

/// Two-phase sampling of runs.
///
/// Every run is simulated to `at` arrivals. A run whose viral accuracy is then
/// within `margin` of an unstable fixed point of the strategy is always
/// continued; any other run is continued with probability `keep_rate`, and the
/// counts of dropped runs after the split are replaced by the mean of the
/// continued runs between the same pair of unstable points. Estimates stay
/// unbiased while most of the cost of runs whose basin is already settled is
/// saved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splitting {
    pub at: usize,
    pub keep_rate: f64,
    pub margin: f64,
}

impl Default for Splitting {
    fn default() -> Self {
        Splitting {
            at: 300,
            keep_rate: 0.02,
            margin: 0.1,
        }
    }
}

impl Splitting {
    fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.at <= params.feed_size {
            return Err(Error::domain(
                "split.at",
                format!("must exceed K = {}", params.feed_size),
            ));
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::domain("split.keep_rate", "must lie in (0, 1]"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::domain(
                "split.margin",
                "must be a finite non-negative number",
            ));
        }
        Ok(())
    }
}

/// How many runs to simulate and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub m_runs: usize,
    pub base_seed: u64,
    pub split: Option<Splitting>,
}

impl Sampling {
    pub fn plain(m_runs: usize, base_seed: u64) -> Self {
        Sampling {
            m_runs,
            base_seed,
            split: None,
        }
    }

    pub fn split(m_runs: usize, base_seed: u64, split: Splitting) -> Self {
        Sampling {
            m_runs,
            base_seed,
            split: Some(split),
        }
    }
}

fn check_schedule(params: &ModelParams, schedule: &[usize]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::domain("n_schedule", "empty schedule"));
    }
    if schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n_schedule", "must be strictly increasing"));
    }
    if schedule[0] <= params.feed_size {
        return Err(Error::domain(
            "n_schedule",
            format!("every n must exceed K = {}", params.feed_size),
        ));
    }
    Ok(())
}

struct RunCounts {
    /// `None` for runs that were continued unconditionally.
    stratum: Option<usize>,
    kept: bool,
    at_split: Vec<u64>,
    /// Snapshots; those past the split are empty for dropped runs.
    snapshots: Vec<Vec<u64>>,
}

fn simulate_counts(
    sim: &Simulator,
    schedule: &[usize],
    seed: u64,
    split: Option<(&Splitting, &[f64])>,
) -> Result<RunCounts> {
    let feed_size = sim.params().feed_size;
    let horizon = *schedule.last().unwrap();
    let mut rng = run_rng(seed);
    let mut counter = CellCounter::new(feed_size, schedule);
    let Some((split, separators)) = split.filter(|(s, _)| s.at < horizon) else {
        sim.run(horizon, &mut rng, &mut counter)?;
        return Ok(RunCounts {
            stratum: None,
            kept: true,
            at_split: Vec::new(),
            snapshots: counter.snapshots,
        });
    };
    let mut state = PlatformState::empty();
    sim.advance(&mut state, split.at, &mut rng, &mut counter)?;
    let x = state.viral_accuracy();
    let stratum = if separators.iter().any(|u| (x - u).abs() <= split.margin) {
        None
    } else {
        Some(separators.iter().filter(|&&u| u < x).count())
    };
    let kept = stratum.is_none() || {
        let mut coin = run_rng(seed);
        coin.set_stream(1);
        coin.random::<f64>() < split.keep_rate
    };
    let at_split = counter.current().to_vec();
    if kept {
        sim.advance(&mut state, horizon, &mut rng, &mut counter)?;
    }
    let mut snapshots = counter.snapshots;
    snapshots.resize(schedule.len(), Vec::new());
    Ok(RunCounts {
        stratum,
        kept,
        at_split,
        snapshots,
    })
}

/// Posterior tables at every `n` in `schedule`, from the same set of runs.
pub fn empirical_posteriors_at(
    sigma: &Strategy,
    params: &ModelParams,
    schedule: &[usize],
    sampling: &Sampling,
) -> Result<Vec<PosteriorTable>> {
    check_schedule(params, schedule)?;
    if sampling.m_runs == 0 {
        return Err(Error::domain("m_runs", "need at least one run"));
    }
    sigma.require_state_symmetric()?;
    let sim = Simulator::new(sigma, params)?;
    let separators: Vec<f64> = match &sampling.split {
        Some(split) => {
            split.validate(params)?;
            fixed_points(sigma, params, params.iota)?
                .iter()
                .filter(|f| f.stability == Stability::Unstable)
                .map(|f| f.x_star)
                .collect()
        }
        None => Vec::new(),
    };
    let split = sampling.split.as_ref().map(|s| (s, separators.as_slice()));
    let runs: Vec<RunCounts> = (0..sampling.m_runs as u64)
        .into_par_iter()
        .map(|i| simulate_counts(&sim, schedule, run_seed(sampling.base_seed, i), split))
        .collect::<Result<_>>()?;

    let width = 2 * (params.feed_size + 1);
    let n_strata = separators.len() + 1;
    schedule
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let past_split = sampling.split.is_some_and(|s| n > s.at);
            let mut strata = vec![StratumSample::default(); n_strata];
            if past_split {
                for r in &runs {
                    if let Some(h) = r.stratum {
                        strata[h].size += 1;
                        if r.kept {
                            let tail = (0..width).map(|c| (r.snapshots[j][c] - r.at_split[c]) as f64).collect();
                            strata[h].kept_tails.push(tail);
                        }
                    }
                }
            }
            let mut means = Vec::with_capacity(n_strata);
            for (h, st) in strata.iter().enumerate() {
                if st.size > 0 && st.kept_tails.is_empty() {
                    return Err(Error::Resolution {
                        lo: h as f64,
                        hi: h as f64,
                        reason: format!(
                            "no continued run in stratum {h} of {} runs; raise the keep rate or the run count",
                            st.size
                        ),
                    });
                }
                let mut mean = vec![0.0; width];
                for t in &st.kept_tails {
                    mean.iter_mut().zip(t).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= st.kept_tails.len().max(1) as f64);
                means.push(mean);
            }
            let counts: Vec<Vec<f64>> = runs
                .iter()
                .map(|r| match (past_split, r.stratum, r.kept) {
                    (true, Some(h), false) => r.at_split.iter().zip(&means[h]).map(|(&a, m)| a as f64 + m).collect(),
                    _ => r.snapshots[j].iter().map(|&c| c as f64).collect(),
                })
                .collect();
            Ok(PosteriorTable::assemble(params.feed_size, n, &counts, &strata))
        })
        .collect()
}

/// Beliefs `P(ω = +1 | s, k)` at a uniformly random position in `K+1..params.agents`.
pub fn empirical_posteriors(
    sigma: &Strategy,
    params: &ModelParams,
    m_runs: usize,
    base_seed: u64,
) -> Result<PosteriorTable> {
    Ok(empirical_posteriors_at(
        sigma,
        params,
        &[params.agents],
        &Sampling::plain(m_runs, base_seed),
    )?
    .remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    /// Share as many positive stories as the feed allows.
    Positive,
    /// Share as few positive stories as the feed allows.
    Negative,
    /// Belief within tolerance of 1/2; the private signal decides.
    Indifferent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResponse {
    pub signal: Signal,
    pub k: usize,
    pub response: Response,
    pub z: usize,
}

/// Number of standard errors within which a belief counts as 1/2.
pub const DEFAULT_INDIFFERENCE_SE: f64 = 2.0;

/// Per-cell best responses with the indifference band `tolerance_se` standard errors wide.
pub fn best_response_cells(
    beliefs: &PosteriorTable,
    params: &ModelParams,
    tolerance_se: f64,
) -> Vec<CellResponse> {
    beliefs
        .cells
        .iter()
        .map(|c| {
            let (lo, hi) = feasible_support(params.feed_size, params.capacity, c.k);
            let response = if (c.belief - 0.5).abs() <= tolerance_se * c.std_error {
                Response::Indifferent
            } else if c.belief > 0.5 {
                Response::Positive
            } else {
                Response::Negative
            };
            let positive = match response {
                Response::Positive => true,
                Response::Negative => false,
                Response::Indifferent => c.signal == Signal::Pos,
            };
            CellResponse {
                signal: c.signal,
                k: c.k,
                response,
                z: if positive { hi } else { lo },
            }
        })
        .collect()
}

/// Pure best response to `beliefs`, following the private signal when indifferent.
pub fn best_response(beliefs: &PosteriorTable, params: &ModelParams) -> Result<Strategy> {
    if beliefs.feed_size != params.feed_size {
        return Err(Error::domain(
            "beliefs",
            "table built for a different feed size",
        ));
    }
    let cells = best_response_cells(beliefs, params, DEFAULT_INDIFFERENCE_SE);
    let width = params.feed_size + 1;
    Strategy::pure(params.feed_size, params.capacity, |s, k| {
        cells[s.index() * width + k].z
    })
}

/// Cells where `sigma` is not a best response (indifferent cells are skipped).
pub fn best_response_violations(
    sigma: &Strategy,
    beliefs: &PosteriorTable,
    params: &ModelParams,
) -> Vec<CellResponse> {
    best_response_cells(beliefs, params, DEFAULT_INDIFFERENCE_SE)
        .into_iter()
        .filter(|c| {
            c.response != Response::Indifferent && sigma.dist(c.signal, c.k)[c.z] < 1.0 - 1e-12
        })
        .collect()
}

/// A one-parameter family of strategies with a designated pivotal observation.
pub trait StrategyFamily: Sync {
    fn strategy(&self, p: f64) -> Result<Strategy>;
    /// The observation whose belief must equal 1/2 at a mixing equilibrium.
    fn pivotal(&self) -> (Signal, usize);
    fn describe(&self) -> String;
}

/// Majority rule except at one pivotal cell (and its mirror), where the agent
/// switches to the opposite extreme share with probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationFamily {
    base: Strategy,
    signal: Signal,
    k: usize,
}

impl DeviationFamily {
    pub fn new(params: &ModelParams, signal: Signal, k: usize) -> Result<Self> {
        params.validate()?;
        if k > params.feed_size {
            return Err(Error::domain(
                "k",
                format!("pivotal k = {k} exceeds K = {}", params.feed_size),
            ));
        }
        Ok(DeviationFamily {
            base: majority_rule(params)?,
            signal,
            k,
        })
    }

    /// A positive signal facing a feed with exactly two positive stories.
    pub fn two_matching(params: &ModelParams) -> Result<Self> {
        Self::new(params, Signal::Pos, 2)
    }

    /// The `(s = +1, k < K/2)` cell whose belief under the majority rule is nearest 1/2.
    pub fn auto_detect(params: &ModelParams, m_runs: usize, base_seed: u64) -> Result<Self> {
        let base = majority_rule(params)?;
        let table = empirical_posteriors(&base, params, m_runs, base_seed)?;
        let k = (0..params.feed_size.div_ceil(2))
            .filter(|&k| 2 * k < params.feed_size)
            .min_by(|&a, &b| {
                let da = (table.belief(Signal::Pos, a) - 0.5).abs();
                let db = (table.belief(Signal::Pos, b) - 0.5).abs();
                da.total_cmp(&db)
            })
            .ok_or_else(|| Error::domain("K", "no cell with a minority of positive stories"))?;
        Self::new(params, Signal::Pos, k)
    }

    pub fn base(&self) -> &Strategy {
        &self.base
    }
}

impl StrategyFamily for DeviationFamily {
    fn strategy(&self, p: f64) -> Result<Strategy> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(
                "p",
                format!("mixing probability {p} outside [0, 1]"),
            ));
        }
        let (kk, cc) = (self.base.feed_size(), self.base.capacity());
        let mirror = (self.signal.flip(), kk - self.k);
        Strategy::from_fn(kk, cc, |s, k| {
            let mut d = self.base.dist(s, k).to_vec();
            if (s, k) == (self.signal, self.k) || (s, k) == mirror {
                let (lo, hi) = feasible_support(kk, cc, k);
                let usual = self.base.pure_choice(s, k).unwrap_or(lo);
                let other = if usual == lo { hi } else { lo };
                d.iter_mut().for_each(|v| *v = 0.0);
                d[usual] += 1.0 - p;
                d[other] += p;
            }
            d
        })
    }

    fn pivotal(&self) -> (Signal, usize) {
        (self.signal, self.k)
    }

    fn describe(&self) -> String {
        format!(
            "majority rule deviating at (s={}, k={})",
            self.signal, self.k
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingSolution {
    pub p_grid: Vec<f64>,
    /// `P(ω = +1 | pivotal) − 1/2` per grid point.
    pub gaps: Vec<f64>,
    pub gap_std_errors: Vec<f64>,
    /// Interpolated indifference point; `None` when the gap never changes sign.
    pub p_hat: Option<f64>,
    /// Standard error of `p_hat` propagated through the bracketing slope.
    pub p_hat_std_error: Option<f64>,
    pub n: usize,
    pub runs: usize,
}

impl MixingSolution {
    fn from_gaps(
        p_grid: Vec<f64>,
        gaps: Vec<f64>,
        gap_std_errors: Vec<f64>,
        n: usize,
        runs: usize,
    ) -> Self {
        let mut p_hat = None;
        let mut p_hat_std_error = None;
        for i in 0..p_grid.len().saturating_sub(1) {
            let (g0, g1) = (gaps[i], gaps[i + 1]);
            if g0 == 0.0 {
                p_hat = Some(p_grid[i]);
                p_hat_std_error = Some(0.0);
                break;
            }
            if (g0 > 0.0) != (g1 > 0.0) || g1 == 0.0 {
                let slope = (g1 - g0) / (p_grid[i + 1] - p_grid[i]);
                p_hat = Some(p_grid[i] - g0 / slope);
                let w = -g0 / (g1 - g0);
                let se = ((1.0 - w) * gap_std_errors[i]).hypot(w * gap_std_errors[i + 1]);
                p_hat_std_error = Some(se / slope.abs());
                break;
            }
        }
        MixingSolution {
            p_grid,
            gaps,
            gap_std_errors,
            p_hat,
            p_hat_std_error,
            n,
            runs,
        }
    }
}

fn check_grid(p_grid: &[f64]) -> Result<()> {
    if p_grid.len() < 2 {
        return Err(Error::domain("p_grid", "need at least two points"));
    }
    if p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) || p_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain(
            "p_grid",
            "must be strictly increasing in [0, 1]",
        ));
    }
    Ok(())
}

/// Mixing solutions at every `n` in `schedule`. Each `p` reuses the same seeds.
pub fn mixing_curves(
    family: &dyn StrategyFamily,
    params: &ModelParams,
    p_grid: &[f64],
    schedule: &[usize],
    sampling: &Sampling,
) -> Result<Vec<MixingSolution>> {
    check_grid(p_grid)?;
    let (s, k) = family.pivotal();
    let mut gaps = vec![Vec::with_capacity(p_grid.len()); schedule.len()];
    let mut ses = gaps.clone();
    for &p in p_grid {
        let tables = empirical_posteriors_at(&family.strategy(p)?, params, schedule, sampling)?;
        for (j, t) in tables.iter().enumerate() {
            let c = t.cell(s, k);
            gaps[j].push(c.belief - 0.5);
            ses[j].push(c.std_error);
        }
    }
    Ok(schedule
        .iter()
        .zip(gaps.into_iter().zip(ses))
        .map(|(&n, (g, e))| MixingSolution::from_gaps(p_grid.to_vec(), g, e, n, sampling.m_runs))
        .collect())
}

/// Indifference point of `family` at horizon `params.agents`.
pub fn solve_mixing_equilibrium(
    family: &dyn StrategyFamily,
    params: &ModelParams,
    p_grid: &[f64],
    sampling: &Sampling,
) -> Result<MixingSolution> {
    Ok(mixing_curves(family, params, p_grid, &[params.agents], sampling)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub solutions: Vec<MixingSolution>,
    /// Mean `p_hat` over the last quartile of the schedule.
    pub limit: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// False when the last quartile spreads wider than its uncertainty allows
    /// or has missing solutions.
    pub plateau: bool,
}

/// `p_n` along `n_schedule` and its terminal plateau.
pub fn estimate_limit_equilibrium(
    family: &dyn StrategyFamily,
    params: &ModelParams,
    n_schedule: &[usize],
    p_grid: &[f64],
    sampling: &Sampling,
) -> Result<LimitEstimate> {
    let solutions = mixing_curves(family, params, p_grid, n_schedule, sampling)?;
    let tail = &solutions[solutions.len() - solutions.len().div_ceil(4)..];
    let found: Vec<(f64, f64)> = tail
        .iter()
        .filter_map(|s| Some((s.p_hat?, s.p_hat_std_error.unwrap_or(0.0))))
        .collect();
    if found.is_empty() {
        return Ok(LimitEstimate {
            solutions,
            limit: None,
            ci_lo: None,
            ci_hi: None,
            plateau: false,
        });
    }
    let m = found.len() as f64;
    let mean = found.iter().map(|f| f.0).sum::<f64>() / m;
    // the tail shares runs, so its points are not independent: use the mean
    // per-point error rather than shrinking it by the count
    let se = (found.iter().map(|f| f.1 * f.1).sum::<f64>() / m).sqrt();
    let spread = found.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max)
        - found.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
    Ok(LimitEstimate {
        limit: Some(mean),
        ci_lo: Some(mean - 1.96 * se),
        ci_hi: Some(mean + 1.96 * se),
        plateau: found.len() == tail.len() && spread <= 4.0 * se,
        solutions,
    })
}
