//! Platform design: objective evaluation across virality weights and
//! robustness of the majority rule to manipulation.
//!
//! Payoffs come in two flavours. The finite payoff averages `f(x(n))` over the
//! ensemble. The limit payoff evaluates `f` at the fixed point each run's final
//! state flows to under the mean-field dynamics, which is what the payoff
//! converges to as `n` grows; close to the critical weight the two differ
//! substantially at desk-scale `n` because the process lingers near the ghost
//! of the vanishing touchpoint.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inflow::{
    critical_virality, fixed_points, manipulation_bound, FixedPointReport, ManipulationBound,
};
use crate::model::{majority_rule, ModelParams, Strategy};
use crate::sim::{run_ensemble, Estimate, Objective};

/// Tolerance used for the critical weight that decides where the majority rule applies.
pub const CRITICAL_TOL: f64 = 1e-9;

/// Where the equilibrium strategy at a given virality weight comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumSource {
    /// The majority rule below the critical weight; unresolved at or above it.
    Auto,
    /// The same strategy at every weight.
    Fixed(Strategy),
    /// Strategies supplied for particular weights (matched within 1e-12),
    /// falling back to [`EquilibriumSource::Auto`] elsewhere.
    PerLambda(Vec<(f64, Strategy)>),
}

impl EquilibriumSource {
    /// The strategy to play at `params.lambda` and a short description of it.
    pub fn resolve(&self, params: &ModelParams, lambda_star: f64) -> Result<(Strategy, String)> {
        let auto = || {
            if params.lambda < lambda_star {
                Ok((majority_rule(params)?, "majority".to_string()))
            } else {
                Err(Error::EquilibriumUnresolved {
                    lambda: params.lambda,
                    reason: format!(
                        "the majority rule is only known to be the equilibrium below the critical weight {lambda_star:.6}; \
                         supply a strategy for this weight"
                    ),
                })
            }
        };
        match self {
            EquilibriumSource::Auto => auto(),
            EquilibriumSource::Fixed(s) => Ok((s.clone(), "supplied".to_string())),
            EquilibriumSource::PerLambda(list) => match list
                .iter()
                .find(|(l, _)| (l - params.lambda).abs() <= 1e-12)
            {
                Some((_, s)) => Ok((s.clone(), "supplied".to_string())),
                None => auto(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub lambda: f64,
    pub objective: String,
    pub strategy: String,
    /// Mean of `f(x(n))`.
    pub finite: Estimate,
    /// Mean of `f` at each run's projected fixed point.
    pub limit: Estimate,
}

/// `Π_n(f, λ)` for several objectives from one ensemble.
pub fn platform_payoffs(
    objectives: &[Objective],
    params: &ModelParams,
    source: &EquilibriumSource,
    m_runs: usize,
    base_seed: u64,
) -> Result<Vec<PayoffEstimate>> {
    let lambda_star =
        critical_virality(params.q, params.feed_size, params.capacity, CRITICAL_TOL)?.lambda_star;
    payoffs_with(objectives, params, source, lambda_star, m_runs, base_seed)
}

fn payoffs_with(
    objectives: &[Objective],
    params: &ModelParams,
    source: &EquilibriumSource,
    lambda_star: f64,
    m_runs: usize,
    base_seed: u64,
) -> Result<Vec<PayoffEstimate>> {
    let (sigma, label) = source.resolve(params, lambda_star)?;
    let stats = run_ensemble(&sigma, params, m_runs, base_seed, objectives)?;
    Ok(objectives
        .iter()
        .zip(stats.objectives.iter().zip(&stats.limit_objectives))
        .map(|(o, (finite, limit))| PayoffEstimate {
            lambda: params.lambda,
            objective: o.name().to_string(),
            strategy: label.clone(),
            finite: finite.clone(),
            limit: limit.clone(),
        })
        .collect())
}

pub fn platform_payoff(
    f: &Objective,
    params: &ModelParams,
    source: &EquilibriumSource,
    m_runs: usize,
    base_seed: u64,
) -> Result<PayoffEstimate> {
    Ok(platform_payoffs(std::slice::from_ref(f), params, source, m_runs, base_seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArgmaxEntry {
    pub objective: String,
    pub finite_argmax: f64,
    pub limit_argmax: f64,
    /// Whether the limit argmax is at least `λ* − step`, with `step` the
    /// widest spacing of the grid.
    pub limit_at_or_above_critical: bool,
    pub finite_at_or_above_critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignReport {
    pub lambda_grid: Vec<f64>,
    pub lambda_star: f64,
    /// Equilibrium description per grid point.
    pub strategies: Vec<String>,
    /// Objective-major: all grid points for the first objective, then the next.
    pub estimates: Vec<PayoffEstimate>,
    pub argmax: Vec<ArgmaxEntry>,
}

impl DesignReport {
    pub fn estimate(&self, objective: &str, lambda: f64) -> Option<&PayoffEstimate> {
        self.estimates
            .iter()
            .find(|e| e.objective == objective && (e.lambda - lambda).abs() <= 1e-12)
    }
}

/// Payoffs over a grid of virality weights; each weight uses seed `base_seed`.
pub fn optimize_lambda(
    objectives: &[Objective],
    params: &ModelParams,
    lambda_grid: &[f64],
    source: &EquilibriumSource,
    m_runs: usize,
    base_seed: u64,
) -> Result<DesignReport> {
    if lambda_grid.is_empty() || objectives.is_empty() {
        return Err(Error::domain(
            "lambda_grid",
            "need at least one weight and one objective",
        ));
    }
    if lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::domain("lambda_grid", "weights must lie in [0, 1]"));
    }
    let lambda_star =
        critical_virality(params.q, params.feed_size, params.capacity, CRITICAL_TOL)?.lambda_star;
    let mut per_lambda = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let p = params.with_lambda(l)?;
        per_lambda.push(payoffs_with(
            objectives,
            &p,
            source,
            lambda_star,
            m_runs,
            base_seed,
        )?);
    }
    let strategies = per_lambda.iter().map(|v| v[0].strategy.clone()).collect();
    let mut sorted = lambda_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let step = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let mut estimates = Vec::with_capacity(objectives.len() * lambda_grid.len());
    let mut argmax = Vec::with_capacity(objectives.len());
    for (j, o) in objectives.iter().enumerate() {
        let column: Vec<&PayoffEstimate> = per_lambda.iter().map(|v| &v[j]).collect();
        let best = |pick: fn(&PayoffEstimate) -> f64| {
            column
                .iter()
                .max_by(|a, b| pick(a).total_cmp(&pick(b)))
                .map(|e| e.lambda)
                .unwrap()
        };
        let finite_argmax = best(|e| e.finite.mean);
        let limit_argmax = best(|e| e.limit.mean);
        argmax.push(ArgmaxEntry {
            objective: o.name().to_string(),
            finite_argmax,
            limit_argmax,
            limit_at_or_above_critical: limit_argmax >= lambda_star - step,
            finite_at_or_above_critical: finite_argmax >= lambda_star - step,
        });
        estimates.extend(column.into_iter().cloned());
    }
    Ok(DesignReport {
        lambda_grid: lambda_grid.to_vec(),
        lambda_star,
        strategies,
        estimates,
        argmax,
    })
}

/// How a misleading state first shows up as manipulation grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Emergence {
    /// The informative steady state slides into the misleading region.
    Continuous,
    /// A new misleading steady state appears away from the informative one.
    Discontinuous,
    /// The misleading region is empty at this weight.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub mean_final_x: f64,
    /// Share of runs flowing to a misleading fixed point.
    pub misleading_frequency: f64,
    /// Largest `|mean final x − x*|` over clusters that received runs.
    pub cluster_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub iota: f64,
    pub fixed_points: Vec<FixedPointReport>,
    pub misleading_fixed_points: usize,
    /// Largest informative steady state.
    pub informative_x: Option<f64>,
    pub ensemble: Option<EnsembleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessReport {
    pub params: ModelParams,
    pub lambda_star: f64,
    pub bound: ManipulationBound,
    pub rows: Vec<RobustnessRow>,
    /// Informative steady state never increases along the grid.
    pub informative_nonincreasing: bool,
    /// Every grid point below the bound is free of misleading fixed points.
    pub clean_below_bound: bool,
    /// A misleading (or boundary) fixed point exists at the bound itself.
    pub misleading_at_bound: bool,
    pub emergence: Emergence,
}

/// Fixed-point census and bot-injected ensembles across manipulation rates,
/// for the majority rule below the critical weight. `m_runs = 0` skips the
/// ensembles.
pub fn robustness_report(
    params: &ModelParams,
    iota_grid: &[f64],
    m_runs: usize,
    base_seed: u64,
) -> Result<RobustnessReport> {
    params.validate()?;
    let lambda_star =
        critical_virality(params.q, params.feed_size, params.capacity, CRITICAL_TOL)?.lambda_star;
    if params.lambda >= lambda_star {
        return Err(Error::Precondition(format!(
            "the manipulation bound only guarantees robustness below the critical weight: \
             lambda = {} is not below lambda* = {lambda_star:.6}",
            params.lambda
        )));
    }
    if iota_grid.iter().any(|i| !(0.0..1.0).contains(i)) {
        return Err(Error::domain("iota_grid", "rates must lie in [0, 1)"));
    }
    let sigma = majority_rule(params)?;
    let bound = manipulation_bound(params)?;
    let mut rows = Vec::with_capacity(iota_grid.len());
    for &iota in iota_grid {
        let p = params.with_iota(iota)?;
        let fixed = fixed_points(&sigma, &p, iota)?;
        let misleading_fixed_points = fixed.iter().filter(|f| f.label.is_misleading()).count();
        let informative_x = fixed
            .iter()
            .filter(|f| f.stability.is_steady_state() && f.label.is_informative())
            .map(|f| f.x_star)
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        let ensemble = if m_runs > 0 {
            let stats = run_ensemble(&sigma, &p, m_runs, base_seed, &[])?;
            let cluster_discrepancy = stats
                .clusters
                .iter()
                .filter_map(|c| c.mean_final_x.map(|x| (x - c.x_star).abs()))
                .fold(0.0, f64::max);
            Some(EnsembleSummary {
                runs: stats.runs,
                mean_final_x: stats.mean_final_x,
                misleading_frequency: stats
                    .projected
                    .iter()
                    .filter(|c| c.label.is_misleading())
                    .map(|c| c.frequency)
                    .sum(),
                cluster_discrepancy,
            })
        } else {
            None
        };
        rows.push(RobustnessRow {
            iota,
            fixed_points: fixed,
            misleading_fixed_points,
            informative_x,
            ensemble,
        });
    }
    let informative: Vec<f64> = rows.iter().filter_map(|r| r.informative_x).collect();
    let informative_nonincreasing = informative.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let clean_below_bound = rows
        .iter()
        .filter(|r| r.iota < bound.iota_bound)
        .all(|r| r.misleading_fixed_points == 0);
    let (misleading_at_bound, emergence) = if bound.maximizer.is_none() {
        (false, Emergence::Never)
    } else {
        let at = fixed_points(
            &sigma,
            &params.with_iota(bound.iota_bound)?,
            bound.iota_bound,
        )?;
        let found = at
            .iter()
            .any(|f| f.label.is_misleading() || f.sampling_accuracy <= 0.5 + 1e-7);
        let kind = if bound.at_boundary {
            Emergence::Continuous
        } else {
            Emergence::Discontinuous
        };
        (found, kind)
    };
    Ok(RobustnessReport {
        params: *params,
        lambda_star,
        bound,
        rows,
        informative_nonincreasing,
        clean_below_bound,
        misleading_at_bound,
        emergence,
    })
}
