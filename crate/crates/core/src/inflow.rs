//! Inflow accuracy, fixed-point census, critical virality weight, comparative
//! statics and the manipulation bound.
//!
//! The inflow accuracy `φσ(x)` is the expected fraction of an arrival's `C + 1`
//! new popularity points that land on stories matching the state, when viral
//! accuracy is `x` and a fraction `z` (by default `q`) of posted stories is
//! correct. Steady states of the sharing process are exactly the fixed points
//! of `φσ` that are stable from at least one side.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{
    binomial_pmf_into, check_unit, majority_for, validate_environment, ModelParams, Signal,
    Strategy, TieBreak, MAX_FEED_SIZE,
};
use crate::poly::{binomial_coefficient, Polynomial};

/// `(1 − ι)·φσ` for a fixed strategy and environment, with the expected
/// per-feed sharing weights precomputed.
#[derive(Debug, Clone)]
pub struct InflowFn {
    q: f64,
    lambda: f64,
    iota: f64,
    feed_size: usize,
    capacity: usize,
    /// `q·E[σ(1,k)] + (1−q)·E[σ(−1,k)]` for each `k`.
    weights: Vec<f64>,
}

impl InflowFn {
    pub fn new(sigma: &Strategy, params: &ModelParams, iota: f64) -> Result<Self> {
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
        if !(0.0..1.0).contains(&iota) {
            return Err(Error::domain(
                "iota",
                format!("need 0 <= iota < 1, got {iota}"),
            ));
        }
        let q = params.q;
        let weights = (0..=params.feed_size)
            .map(|k| {
                q * sigma.expectation_unchecked(Signal::Pos, k)
                    + (1.0 - q) * sigma.expectation_unchecked(Signal::Neg, k)
            })
            .collect();
        Ok(InflowFn {
            q,
            lambda: params.lambda,
            iota,
            feed_size: params.feed_size,
            capacity: params.capacity,
            weights,
        })
    }

    /// The majority rule's inflow function for `(q, K, C, λ)`.
    pub fn majority(q: f64, feed_size: usize, capacity: usize, lambda: f64) -> Result<Self> {
        let params = ModelParams::new(q, feed_size, capacity, lambda)?;
        let sigma = majority_for(feed_size, capacity, TieBreak::FeedMajority)?;
        InflowFn::new(&sigma, &params, 0.0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn iota(&self) -> f64 {
        self.iota
    }

    pub fn with_iota(mut self, iota: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&iota) {
            return Err(Error::domain(
                "iota",
                format!("need 0 <= iota < 1, got {iota}"),
            ));
        }
        self.iota = iota;
        Ok(self)
    }

    /// `λx + (1−λ)q`
    pub fn sampling_accuracy(&self, x: f64) -> f64 {
        self.lambda * x + (1.0 - self.lambda) * self.q
    }

    /// `(1−ι)·φσ(x)` with the story fraction at its long-run value `q`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_at(x, self.q)
    }

    /// `(1−ι)·φσ,z(x)`: the inflow when a fraction `z` of posted stories is correct.
    pub fn eval_at(&self, x: f64, z: f64) -> f64 {
        let y = self.lambda * x + (1.0 - self.lambda) * z;
        let mut pmf = [0.0; MAX_FEED_SIZE + 1];
        binomial_pmf_into(self.feed_size, y, &mut pmf);
        let shared: f64 = pmf[..=self.feed_size]
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| p * w)
            .sum();
        (1.0 - self.iota) * (self.q + shared) / (1 + self.capacity) as f64
    }

    /// `(1−ι)φσ(x) − x`
    pub fn gap(&self, x: f64) -> f64 {
        self.eval(x) - x
    }

    /// Analytic `d/dx` of `(1−ι)·φσ(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        let kk = self.feed_size;
        let y = self.sampling_accuracy(x);
        let mut pmf = [0.0; MAX_FEED_SIZE + 1];
        binomial_pmf_into(kk - 1, y, &mut pmf);
        let slope: f64 = (0..kk)
            .map(|j| pmf[j] * (self.weights[j + 1] - self.weights[j]))
            .sum();
        (1.0 - self.iota) * self.lambda * kk as f64 * slope / (1 + self.capacity) as f64
    }

    /// `(1−ι)·φσ` as an explicit polynomial in `x` (story fraction `q`).
    pub fn polynomial(&self) -> Polynomial {
        let kk = self.feed_size;
        let a = (1.0 - self.lambda) * self.q;
        let y = Polynomial::linear(a, self.lambda);
        let not_y = Polynomial::linear(1.0 - a, -self.lambda);
        let y_pows: Vec<Polynomial> = (0..=kk).map(|e| y.powi(e)).collect();
        let not_y_pows: Vec<Polynomial> = (0..=kk).map(|e| not_y.powi(e)).collect();
        let mut acc = Polynomial::constant(self.q);
        for k in 0..=kk {
            let term = y_pows[k]
                .mul(&not_y_pows[kk - k])
                .scale(binomial_coefficient(kk, k) * self.weights[k]);
            acc = acc.add(&term);
        }
        acc.scale((1.0 - self.iota) / (1 + self.capacity) as f64)
    }

    /// `(x, (1−ι)φσ(x))` on a uniform grid of `points` values covering `[0, 1]`.
    pub fn curve(&self, points: usize) -> Vec<(f64, f64)> {
        let points = points.max(2);
        (0..points)
            .map(|i| {
                let x = i as f64 / (points - 1) as f64;
                (x, self.eval(x))
            })
            .collect()
    }
}

/// Inflow accuracy `(1−ι)·φσ,z(x)`. `z` defaults to `q` and `iota` to 0.
pub fn inflow_accuracy(
    sigma: &Strategy,
    params: &ModelParams,
    x: f64,
    z: Option<f64>,
    iota: Option<f64>,
) -> Result<f64> {
    check_unit("x", x)?;
    if let Some(z) = z {
        check_unit("z", z)?;
    }
    let f = InflowFn::new(sigma, params, iota.unwrap_or(0.0))?;
    Ok(f.eval_at(x, z.unwrap_or(params.q)))
}

/// How a fixed point attracts nearby viral accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    /// `φ > x` just left of the point and `φ < x` just right of it.
    StableBoth,
    /// Touchpoint attracting only from the left (`φ > x` on both sides).
    TouchLeftStable,
    /// Touchpoint attracting only from the right (`φ < x` on both sides).
    TouchRightStable,
    Unstable,
}

impl Stability {
    /// Fixed points that are stable from at least one side are reached with
    /// positive probability.
    pub fn is_steady_state(self) -> bool {
        self != Stability::Unstable
    }

    pub fn is_touchpoint(self) -> bool {
        matches!(
            self,
            Stability::TouchLeftStable | Stability::TouchRightStable
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::StableBoth => "stable_both",
            Stability::TouchLeftStable => "touch_left_stable",
            Stability::TouchRightStable => "touch_right_stable",
            Stability::Unstable => "unstable",
        }
    }
}

/// Informative / misleading classification by sampling accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyLabel {
    StrictlyInformative,
    /// Sampling accuracy within the boundary tolerance of 1/2, from above.
    InformativeBoundary,
    StrictlyMisleading,
    /// Sampling accuracy within the boundary tolerance of 1/2, from below.
    MisleadingBoundary,
}

impl SteadyLabel {
    pub fn classify(sampling_accuracy: f64, boundary_tol: f64) -> Self {
        let d = sampling_accuracy - 0.5;
        if d.abs() <= boundary_tol {
            if d >= 0.0 {
                SteadyLabel::InformativeBoundary
            } else {
                SteadyLabel::MisleadingBoundary
            }
        } else if d > 0.0 {
            SteadyLabel::StrictlyInformative
        } else {
            SteadyLabel::StrictlyMisleading
        }
    }

    /// Weakly misleading: sampling accuracy at most 1/2. Boundary points are both.
    pub fn is_misleading(self) -> bool {
        !matches!(self, SteadyLabel::StrictlyInformative)
    }

    pub fn is_informative(self) -> bool {
        !matches!(self, SteadyLabel::StrictlyMisleading)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SteadyLabel::StrictlyInformative => "strictly_informative",
            SteadyLabel::InformativeBoundary => "informative_boundary",
            SteadyLabel::StrictlyMisleading => "strictly_misleading",
            SteadyLabel::MisleadingBoundary => "misleading_boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    #[serde(rename = "x")]
    pub x_star: f64,
    pub residual: f64,
    pub stability: Stability,
    pub label: SteadyLabel,
    pub sampling_accuracy: f64,
}

/// Numerical controls for root isolation. All tolerances are implementation
/// choices; the defaults are tuned for `K ≤ 64`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    pub grid_points: usize,
    pub root_tol: f64,
    /// Largest `|φ − x|` at a sign-preserving local minimum still reported as a touchpoint.
    pub touch_tol: f64,
    pub stability_eps: f64,
    /// Roots closer than this are one cluster, classified from its outside.
    pub cluster_radius: f64,
    pub boundary_tol: f64,
    /// Cross-check the root count with a Sturm sequence.
    pub certify: bool,
}

impl Default for RootConfig {
    fn default() -> Self {
        RootConfig {
            grid_points: 4096,
            root_tol: 1e-10,
            touch_tol: 1e-7,
            stability_eps: 1e-6,
            cluster_radius: 1e-5,
            boundary_tol: 1e-9,
            certify: false,
        }
    }
}

/// Fixed points of `(1−ι)·φσ` on `[0, 1]`, ascending, with default numerics.
pub fn fixed_points(
    sigma: &Strategy,
    params: &ModelParams,
    iota: f64,
) -> Result<Vec<FixedPointReport>> {
    fixed_points_with(sigma, params, iota, &RootConfig::default())
}

pub fn fixed_points_with(
    sigma: &Strategy,
    params: &ModelParams,
    iota: f64,
    cfg: &RootConfig,
) -> Result<Vec<FixedPointReport>> {
    let f = InflowFn::new(sigma, params, iota)?;
    census(&f, cfg)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    x: f64,
    crossing: bool,
}

/// Fixed-point census of an inflow function.
pub fn census(f: &InflowFn, cfg: &RootConfig) -> Result<Vec<FixedPointReport>> {
    if cfg.grid_points < 3 {
        return Err(Error::domain("grid_points", "need at least 3 grid points"));
    }
    let g = |x: f64| f.gap(x);
    let dg = |x: f64| f.derivative(x) - 1.0;
    let candidates = isolate(&g, &dg, 0.0, 1.0, cfg)?;

    // merge clusters
    let mut clusters: Vec<Vec<Candidate>> = Vec::new();
    for c in candidates {
        match clusters.last_mut() {
            Some(last) if c.x - last.last().unwrap().x <= cfg.cluster_radius => last.push(c),
            _ => clusters.push(vec![c]),
        }
    }

    let degree_bound = f.feed_size.max(1);
    if clusters.len() > degree_bound {
        return Err(Error::Resolution {
            lo: 0.0,
            hi: 1.0,
            reason: format!(
                "found {} roots but the inflow polynomial has degree at most {degree_bound}",
                clusters.len()
            ),
        });
    }

    let mut reports = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let lo = cluster.first().unwrap().x;
        let hi = cluster.last().unwrap().x;
        let x = 0.5 * (lo + hi);
        let left = g((lo - cfg.stability_eps).max(0.0));
        let right = g((hi + cfg.stability_eps).min(1.0));
        let stability = match (left > 0.0, right < 0.0) {
            (true, true) => Stability::StableBoth,
            (true, false) => Stability::TouchLeftStable,
            (false, true) => Stability::TouchRightStable,
            (false, false) => Stability::Unstable,
        };
        let y = f.sampling_accuracy(x);
        reports.push(FixedPointReport {
            x_star: x,
            residual: g(x).abs(),
            stability,
            label: SteadyLabel::classify(y, cfg.boundary_tol),
            sampling_accuracy: y,
        });
    }

    if cfg.certify && clusters.iter().all(|c| c.len() == 1 && c[0].crossing) {
        let poly = f.polynomial().add(&Polynomial::linear(0.0, -1.0));
        let sturm = poly.count_roots(0.0, 1.0);
        if sturm != reports.len() {
            return Err(Error::Resolution {
                lo: 0.0,
                hi: 1.0,
                reason: format!(
                    "grid isolation found {} roots, Sturm sequence counts {sturm}",
                    reports.len()
                ),
            });
        }
    }
    Ok(reports)
}

/// Locates sign changes and near-zero sign-preserving minima of `g` on `[a, b]`.
fn isolate<G, D>(g: &G, dg: &D, a: f64, b: f64, cfg: &RootConfig) -> Result<Vec<Candidate>>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let n = cfg.grid_points;
    let xs: Vec<f64> = (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::Resolution {
            lo: xs[i.saturating_sub(1)],
            hi: xs[(i + 1).min(n - 1)],
            reason: "non-finite inflow value".into(),
        });
    }

    let mut out = Vec::new();
    for i in 0..n {
        if vals[i] == 0.0 {
            out.push(Candidate {
                x: xs[i],
                crossing: true,
            });
        }
        if i + 1 < n && vals[i] * vals[i + 1] < 0.0 {
            out.push(Candidate {
                x: bisect(g, xs[i], xs[i + 1], cfg.root_tol),
                crossing: true,
            });
        }
    }

    for i in 1..n - 1 {
        let (l, m, r) = (vals[i - 1], vals[i], vals[i + 1]);
        let same_sign = (l > 0.0 && m > 0.0 && r > 0.0) || (l < 0.0 && m < 0.0 && r < 0.0);
        if !same_sign || m.abs() > l.abs() || m.abs() > r.abs() {
            continue;
        }
        let xm = extremum(g, dg, xs[i - 1], xs[i + 1], cfg.root_tol);
        let gm = g(xm);
        if gm == 0.0 || (gm > 0.0) != (m > 0.0) {
            // the dip crosses zero between grid points: two nearby roots
            if gm == 0.0 {
                out.push(Candidate {
                    x: xm,
                    crossing: true,
                });
                continue;
            }
            out.push(Candidate {
                x: bisect(g, xs[i - 1], xm, cfg.root_tol),
                crossing: true,
            });
            out.push(Candidate {
                x: bisect(g, xm, xs[i + 1], cfg.root_tol),
                crossing: true,
            });
        } else if gm.abs() <= cfg.touch_tol {
            out.push(Candidate {
                x: xm,
                crossing: false,
            });
        }
    }
    out.sort_by(|p, q| p.x.total_cmp(&q.x));
    out.dedup_by(|p, q| (p.x - q.x).abs() <= cfg.root_tol);
    Ok(out)
}

/// Bisection on a sign-changing bracket until both the bracket and the
/// residual are below `tol`.
fn bisect<G: Fn(f64) -> f64>(g: &G, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut glo = g(lo);
    if glo == 0.0 {
        return lo;
    }
    if g(hi) == 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 || ((hi - lo) <= tol && gm.abs() <= tol) || mid == lo || mid == hi {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Location of the extremum of `|g|` in `[lo, hi]`: the zero of `g'` when it
/// changes sign there, otherwise a golden-section search.
fn extremum<G, D>(g: &G, dg: &D, lo: f64, hi: f64, tol: f64) -> f64
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (dl, dh) = (dg(lo), dg(hi));
    if dl * dh < 0.0 {
        return bisect(dg, lo, hi, tol * 1e-2);
    }
    let sign = if g(0.5 * (lo + hi)) >= 0.0 { 1.0 } else { -1.0 };
    golden_min(|x| sign * g(x), lo, hi, tol)
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Minimum of `g` on `[a, b]` by grid scan plus local refinement.
fn min_on<G, D>(g: &G, dg: &D, a: f64, b: f64, grid_points: usize, tol: f64) -> (f64, f64)
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let n = grid_points.max(3);
    let x_at = |i: usize| a + (b - a) * i as f64 / (n - 1) as f64;
    let (mut best_i, mut best) = (0, f64::INFINITY);
    for i in 0..n {
        let v = g(x_at(i));
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let lo = x_at(best_i.saturating_sub(1));
    let hi = x_at((best_i + 1).min(n - 1));
    let (dl, dh) = (dg(lo), dg(hi));
    let x = if dl < 0.0 && dh > 0.0 {
        bisect(dg, lo, hi, tol)
    } else {
        golden_min(g, lo, hi, tol)
    };
    let v = g(x);
    if v < best {
        (x, v)
    } else {
        (x_at(best_i), best)
    }
}

/// Critical virality weight, serialized with `"infinity"` for the sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalWeightResult {
    #[serde(serialize_with = "serialize_extended")]
    pub lambda_star: f64,
    pub bracket_width: f64,
    pub witness_x: Option<f64>,
    /// Whether the spot checks agreed with a predicate monotone in `λ`.
    pub monotone: bool,
}

impl CriticalWeightResult {
    pub fn is_finite(&self) -> bool {
        self.lambda_star.is_finite()
    }
}

pub(crate) fn serialize_extended<S: Serializer>(
    v: &f64,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str(if *v > 0.0 { "infinity" } else { "-infinity" })
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalConfig {
    pub tol: f64,
    /// Grid points used to scan `[0, 1/2]` for the minimum of `φ − x`.
    pub grid_points: usize,
    pub spot_checks: usize,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig {
            tol: 1e-9,
            grid_points: 4096,
            spot_checks: 8,
        }
    }
}

/// Smallest `λ` at which the majority rule has a fixed point in `[0, 1/2]`.
pub fn critical_virality(
    q: f64,
    feed_size: usize,
    capacity: usize,
    tol: f64,
) -> Result<CriticalWeightResult> {
    critical_virality_with(
        q,
        feed_size,
        capacity,
        &CriticalConfig {
            tol,
            ..CriticalConfig::default()
        },
    )
}

pub fn critical_virality_with(
    q: f64,
    feed_size: usize,
    capacity: usize,
    cfg: &CriticalConfig,
) -> Result<CriticalWeightResult> {
    validate_environment(q, feed_size, capacity)?;
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::domain(
            "tol",
            format!("need tol > 0, got {}", cfg.tol),
        ));
    }
    let sigma = majority_for(feed_size, capacity, TieBreak::FeedMajority)?;
    let env = ModelParams::new(q, feed_size, capacity, 0.0)?;
    let min_gap = |lambda: f64| -> Result<(f64, f64)> {
        let f = InflowFn::new(&sigma, &env.with_lambda(lambda)?, 0.0)?;
        let g = |x: f64| f.gap(x);
        let dg = |x: f64| f.derivative(x) - 1.0;
        Ok(min_on(&g, &dg, 0.0, 0.5, cfg.grid_points, 1e-13))
    };
    let has_misleading = |lambda: f64| -> Result<bool> { Ok(min_gap(lambda)?.1 <= 0.0) };

    let lo0 = (env.lambda_floor() + 1e-9).min(1.0);
    let hi0 = 1.0;
    if !has_misleading(hi0)? {
        return Ok(CriticalWeightResult {
            lambda_star: f64::INFINITY,
            bracket_width: 0.0,
            witness_x: None,
            monotone: true,
        });
    }
    if has_misleading(lo0)? {
        // cannot happen for the majority rule; surfaced rather than hidden
        return Ok(CriticalWeightResult {
            lambda_star: lo0,
            bracket_width: 0.0,
            witness_x: Some(min_gap(lo0)?.0),
            monotone: false,
        });
    }
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if has_misleading(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut monotone = true;
    for j in 1..=cfg.spot_checks {
        let lambda = lo0 + (hi0 - lo0) * j as f64 / (cfg.spot_checks + 1) as f64;
        if (lambda - hi).abs() <= 2.0 * cfg.tol {
            continue;
        }
        if has_misleading(lambda)? != (lambda > hi) {
            monotone = false;
        }
    }
    Ok(CriticalWeightResult {
        lambda_star: hi,
        bracket_width: hi - lo,
        witness_x: Some(min_gap(hi)?.0),
        monotone,
    })
}

/// The comparative-statics relations between critical weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticsRelation {
    /// `λ*(q′,K,C) ≥ λ*(q,K,C)` for `q′ > q`.
    HigherPrecision,
    /// `λ*(q,K,C′) ≥ λ*(q,K,C)` for `C′ < C`.
    LowerCapacity,
    /// `λ*(q,K−2,C) ≥ λ*(q,K,C)`.
    FeedMinusTwo,
    /// `λ*(q,K+1,C) ≥ λ*(q,K,C)` for odd `K`.
    OddFeedPlusOne,
    /// `λ*(q,K−1,C) ≥ λ*(q,K,C)` for odd `K`.
    OddFeedMinusOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StaticsEntry {
    pub q: f64,
    #[serde(rename = "K")]
    pub feed_size: usize,
    #[serde(rename = "C")]
    pub capacity: usize,
    #[serde(serialize_with = "serialize_extended")]
    pub lambda_star: f64,
    pub lambda_floor: f64,
    /// Finite critical weights must exceed `1 − 1/(2q)`.
    pub floor_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionCheck {
    pub relation: StaticsRelation,
    /// Index of the reference point `(q, K, C)`.
    pub base: usize,
    /// Index of the point predicted to have the weakly larger critical weight.
    pub other: usize,
    pub weak_ok: bool,
    /// Strict inequality, required whenever the reference weight is finite.
    pub strict_ok: bool,
}

impl DirectionCheck {
    pub fn violated(&self) -> bool {
        !self.weak_ok || !self.strict_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticsTable {
    pub entries: Vec<StaticsEntry>,
    pub checks: Vec<DirectionCheck>,
}

impl StaticsTable {
    pub fn violations(&self) -> impl Iterator<Item = &DirectionCheck> {
        self.checks.iter().filter(|c| c.violated())
    }

    pub fn floor_violations(&self) -> impl Iterator<Item = &StaticsEntry> {
        self.entries.iter().filter(|e| !e.floor_ok)
    }

    pub fn all_ok(&self) -> bool {
        self.violations().next().is_none() && self.floor_violations().next().is_none()
    }
}

/// Critical weights on a grid of `(q, K, C)` points, every applicable
/// pairwise direction check, and the lower-bound check per point.
pub fn comparative_statics_table(grid: &[(f64, usize, usize)], tol: f64) -> Result<StaticsTable> {
    use rayon::prelude::*;
    for &(q, k, c) in grid {
        validate_environment(q, k, c)?;
    }
    let stars: Vec<f64> = grid
        .par_iter()
        .map(|&(q, k, c)| critical_virality(q, k, c, tol).map(|r| r.lambda_star))
        .collect::<Result<_>>()?;

    let entries: Vec<StaticsEntry> = grid
        .iter()
        .zip(&stars)
        .map(|(&(q, k, c), &star)| {
            let floor = 1.0 - 1.0 / (2.0 * q);
            StaticsEntry {
                q,
                feed_size: k,
                capacity: c,
                lambda_star: star,
                lambda_floor: floor,
                floor_ok: !star.is_finite() || star > floor,
            }
        })
        .collect();

    let mut checks = Vec::new();
    for (i, a) in entries.iter().enumerate() {
        for (j, b) in entries.iter().enumerate() {
            if i == j {
                continue;
            }
            let relation = if a.feed_size == b.feed_size && a.capacity == b.capacity && b.q > a.q {
                Some(StaticsRelation::HigherPrecision)
            } else if a.q == b.q && a.feed_size == b.feed_size && b.capacity < a.capacity {
                Some(StaticsRelation::LowerCapacity)
            } else if a.q == b.q && a.capacity == b.capacity && b.feed_size + 2 == a.feed_size {
                Some(StaticsRelation::FeedMinusTwo)
            } else if a.q == b.q
                && a.capacity == b.capacity
                && a.feed_size % 2 == 1
                && b.feed_size == a.feed_size + 1
            {
                Some(StaticsRelation::OddFeedPlusOne)
            } else if a.q == b.q
                && a.capacity == b.capacity
                && a.feed_size % 2 == 1
                && b.feed_size + 1 == a.feed_size
            {
                Some(StaticsRelation::OddFeedMinusOne)
            } else {
                None
            };
            let Some(relation) = relation else { continue };
            let (la, lb) = (a.lambda_star, b.lambda_star);
            let weak_ok = if la.is_infinite() {
                lb.is_infinite()
            } else {
                lb >= la - 2.0 * tol
            };
            let strict_ok = la.is_infinite() || lb > la + 2.0 * tol;
            checks.push(DirectionCheck {
                relation,
                base: i,
                other: j,
                weak_ok,
                strict_ok,
            });
        }
    }
    Ok(StaticsTable { entries, checks })
}

/// Robustness threshold for manipulation at a fixed virality weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManipulationBound {
    /// `1 − max x/φ(x)` over the misleading region.
    pub iota_bound: f64,
    /// Maximizer of `x/φ(x)`; `None` when the region is empty.
    pub maximizer: Option<f64>,
    /// Right end of the misleading region `{x : λx + (1−λ)q ≤ 1/2}`.
    pub region_edge: Option<f64>,
    /// The maximizer sits on the region boundary, so the informative steady
    /// state itself turns misleading at the threshold (rather than a new
    /// misleading state appearing discontinuously).
    pub at_boundary: bool,
}

/// Manipulation rate below which the majority rule has no misleading fixed point.
pub fn manipulation_bound(params: &ModelParams) -> Result<ManipulationBound> {
    params.validate()?;
    let f = InflowFn::majority(params.q, params.feed_size, params.capacity, params.lambda)?;
    let lambda = params.lambda;
    let edge = if lambda > 0.0 {
        (0.5 - (1.0 - lambda) * params.q) / lambda
    } else {
        -1.0
    };
    if lambda <= params.lambda_floor() || edge <= 0.0 {
        return Ok(ManipulationBound {
            iota_bound: 1.0,
            maximizer: None,
            region_edge: None,
            at_boundary: false,
        });
    }
    let edge = edge.min(1.0);
    let ratio = |x: f64| x / f.eval(x);
    let step = 1e-5;
    let cells = (edge / step).ceil() as usize;
    let x_at = |i: usize| (i as f64 * step).min(edge);
    let (mut best_i, mut best) = (0, f64::NEG_INFINITY);
    for i in 0..=cells {
        let r = ratio(x_at(i));
        if r > best {
            best = r;
            best_i = i;
        }
    }
    let lo = x_at(best_i.saturating_sub(1));
    let hi = x_at((best_i + 1).min(cells));
    let interior = golden_min(|x| -ratio(x), lo, hi, 1e-10);
    let mut candidates = [
        (interior, ratio(interior)),
        (edge, ratio(edge)),
        (x_at(best_i), best),
    ];
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let (x_max, r_max) = candidates[0];
    Ok(ManipulationBound {
        iota_bound: 1.0 - r_max,
        maximizer: Some(x_max),
        region_edge: Some(edge),
        at_boundary: (x_max - edge).abs() <= 1e-8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::majority_rule;

    fn maj(q: f64, k: usize, c: usize, lambda: f64) -> (Strategy, ModelParams) {
        let p = ModelParams::new(q, k, c, lambda).unwrap();
        (majority_rule(&p).unwrap(), p)
    }

    #[test]
    fn k2_closed_form_value() {
        let (s, p) = maj(0.55, 2, 1, 1.0);
        let v = inflow_accuracy(&s, &p, 0.5, None, None).unwrap();
        assert!((v - 0.5375).abs() < 1e-15, "{v}");
    }

    #[test]
    fn uniform_sampling_ignores_viral_accuracy() {
        let (s, p) = maj(0.6, 5, 2, 0.0);
        let a = inflow_accuracy(&s, &p, 0.1, None, None).unwrap();
        let b = inflow_accuracy(&s, &p, 0.9, None, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn manipulation_scales_inflow() {
        let (s, p) = maj(0.55, 7, 3, 0.8);
        let a = inflow_accuracy(&s, &p, 0.4, None, None).unwrap();
        let b = inflow_accuracy(&s, &p, 0.4, None, Some(0.25)).unwrap();
        assert!((b - 0.75 * a).abs() < 1e-15);
        assert!(inflow_accuracy(&s, &p, 0.4, None, Some(1.0)).is_err());
        assert!(inflow_accuracy(&s, &p, -0.1, None, None).is_err());
    }

    #[test]
    fn k2_single_fixed_point() {
        let (s, p) = maj(0.55, 2, 1, 1.0);
        let fps = fixed_points(&s, &p, 0.0).unwrap();
        assert_eq!(fps.len(), 1);
        let expected = (-9.0 + 103f64.sqrt()) / 2.0;
        assert!((fps[0].x_star - expected).abs() < 1e-9);
        assert_eq!(fps[0].stability, Stability::StableBoth);
        assert_eq!(fps[0].label, SteadyLabel::StrictlyInformative);
        assert!(fps[0].residual <= 1e-10);
    }

    #[test]
    fn inflow_plot_census() {
        let (s, p) = maj(0.55, 7, 3, 0.3);
        let low = fixed_points(&s, &p, 0.0).unwrap();
        assert_eq!(low.len(), 1);
        assert_eq!(low[0].label, SteadyLabel::StrictlyInformative);

        let high = fixed_points(&s, &p.with_lambda(0.9).unwrap(), 0.0).unwrap();
        let stable: Vec<_> = high
            .iter()
            .filter(|r| r.stability == Stability::StableBoth)
            .collect();
        assert_eq!(stable.len(), 2, "{high:?}");
        assert_eq!(stable[0].label, SteadyLabel::StrictlyMisleading);
        assert_eq!(stable[1].label, SteadyLabel::StrictlyInformative);
        assert_eq!(high.len(), 3);
        assert_eq!(high[1].stability, Stability::Unstable);
    }

    #[test]
    fn touchpoint_is_one_sided() {
        let crit = critical_virality(0.55, 7, 3, 1e-12).unwrap();
        let (s, p) = maj(0.55, 7, 3, crit.lambda_star);
        let fps = fixed_points(&s, &p, 0.0).unwrap();
        assert_eq!(fps.len(), 2, "{fps:?}");
        assert_eq!(fps[0].stability, Stability::TouchLeftStable);
        assert!(fps[0].x_star < 0.5);
        assert!((fps[0].x_star - crit.witness_x.unwrap()).abs() < 1e-4);
        assert_eq!(fps[1].stability, Stability::StableBoth);
    }

    #[test]
    fn critical_weight_examples() {
        let a = critical_virality(0.55, 7, 3, 1e-9).unwrap();
        assert!((a.lambda_star - 0.76).abs() < 0.01, "{a:?}");
        assert!(a.monotone);
        assert!(a.witness_x.unwrap() <= 0.5);
        let b = critical_virality(0.51, 6, 3, 1e-9).unwrap();
        assert!((b.lambda_star - 0.77).abs() < 0.01, "{b:?}");
        let c = critical_virality(0.9, 2, 1, 1e-9).unwrap();
        assert!(c.lambda_star.is_infinite());
        assert!(c.witness_x.is_none());
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"infinity\""), "{json}");
    }

    #[test]
    fn critical_weight_rejects_bad_tolerance() {
        assert!(critical_virality(0.55, 7, 3, 0.0).is_err());
        assert!(critical_virality(0.55, 7, 4, 1e-6).is_err());
    }

    #[test]
    fn labels_follow_sampling_accuracy() {
        assert_eq!(
            SteadyLabel::classify(0.5 + 1e-10, 1e-9),
            SteadyLabel::InformativeBoundary
        );
        assert_eq!(
            SteadyLabel::classify(0.5 - 1e-10, 1e-9),
            SteadyLabel::MisleadingBoundary
        );
        assert_eq!(
            SteadyLabel::classify(0.51, 1e-9),
            SteadyLabel::StrictlyInformative
        );
        assert_eq!(
            SteadyLabel::classify(0.49, 1e-9),
            SteadyLabel::StrictlyMisleading
        );
        assert!(SteadyLabel::InformativeBoundary.is_misleading());
        assert!(SteadyLabel::MisleadingBoundary.is_informative());
    }

    #[test]
    fn polynomial_matches_evaluation() {
        let (s, p) = maj(0.58, 9, 4, 0.7);
        let f = InflowFn::new(&s, &p, 0.1).unwrap();
        let poly = f.polynomial();
        assert!(poly.degree() <= 9);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((poly.eval(x) - f.eval(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_certification_agrees() {
        let cfg = RootConfig {
            certify: true,
            ..RootConfig::default()
        };
        for &lambda in &[0.2, 0.5, 0.9, 1.0] {
            let (s, p) = maj(0.55, 7, 3, lambda);
            fixed_points_with(&s, &p, 0.0, &cfg).unwrap();
        }
    }

    #[test]
    fn strategy_size_mismatch_rejected() {
        let (s, _) = maj(0.55, 7, 3, 0.5);
        let p = ModelParams::new(0.55, 6, 3, 0.5).unwrap();
        assert!(matches!(fixed_points(&s, &p, 0.0), Err(Error::Strategy(_))));
    }

    #[test]
    fn comparative_statics_examples() {
        let table =
            comparative_statics_table(&[(0.55, 7, 3), (0.60, 7, 3), (0.55, 7, 2)], 1e-9).unwrap();
        assert!(table.all_ok(), "{table:?}");
        let l = |i: usize| table.entries[i].lambda_star;
        assert!(l(1) > l(0));
        assert!(l(2) > l(0));
        assert_eq!(table.checks.len(), 2);
        assert!(table.entries.iter().all(|e| e.floor_ok));
    }

    #[test]
    fn manipulation_bound_empty_region() {
        let q: f64 = 0.55;
        let p = ModelParams::new(q, 7, 3, 1.0 - 1.0 / (2.0 * q)).unwrap();
        let b = manipulation_bound(&p).unwrap();
        assert_eq!(b.iota_bound, 1.0);
        let b0 = manipulation_bound(&p.with_lambda(0.0).unwrap()).unwrap();
        assert_eq!(b0.iota_bound, 1.0);
    }
}
