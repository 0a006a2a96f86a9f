//! Social learning from popularity-weighted news feeds.
//!
//! Agents arrive in sequence, each with a binary private news story about a
//! binary state. An arrival sees `K` stories sampled from the platform (each
//! slot popularity-weighted with probability `λ`, uniform otherwise), shares
//! `C` of them and posts their own story. The crate provides:
//!
//! - [`model`]: parameters, strategies, the majority rule and probability kernels;
//! - [`inflow`]: the inflow accuracy function, its fixed points, the critical
//!   virality weight, comparative statics and the manipulation bound;
//! - [`sim`]: exact Monte Carlo simulation on the sufficient-statistic state;
//! - [`equilibrium`]: simulated posteriors, best responses and mixing equilibria;
//! - [`design`]: platform objectives, virality-weight optimization and robustness;
//! - [`output`]: CSV / JSON / SVG writers shared by the command-line front-end.

pub mod design;
pub mod equilibrium;
pub mod error;
pub mod inflow;
pub mod model;
pub mod output;
pub mod poly;
pub mod sim;

pub use design::{
    optimize_lambda, platform_payoff, robustness_report, DesignReport, EquilibriumSource,
};
pub use equilibrium::{
    best_response, empirical_posteriors, estimate_limit_equilibrium, solve_mixing_equilibrium,
    DeviationFamily, MixingSolution, PosteriorTable, Sampling, Splitting, StrategyFamily,
};
pub use error::{Error, Result};
pub use inflow::{
    comparative_statics_table, critical_virality, fixed_points, inflow_accuracy,
    manipulation_bound, CriticalWeightResult, FixedPointReport, InflowFn, Stability, SteadyLabel,
};
pub use model::{majority_rule, sampling_accuracy, ModelParams, Signal, Strategy, TieBreak};
pub use sim::{run_ensemble, run_trajectory, EnsembleStats, Objective, PlatformState, RunResult};
