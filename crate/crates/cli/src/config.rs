//! Run configuration: a JSON file (or an artifact carrying one) merged with
//! command-line flags, then completed with per-command defaults.
//!
//! The resolved configuration is what every artifact embeds, so it must hold
//! every value that influences results. Thread count, output directory and
//! plotting only affect where and how results are written and are left out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// A virality weight on a grid: a number, or `"lstar"` / `"lstar-<d>"` for a
/// point relative to the critical weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridPoint {
    Value(f64),
    Token(String),
}

impl GridPoint {
    pub fn parse(text: &str) -> GridPoint {
        match text.trim().parse::<f64>() {
            Ok(v) => GridPoint::Value(v),
            Err(_) => GridPoint::Token(text.trim().to_string()),
        }
    }

    pub fn resolve(&self, lambda_star: f64) -> Result<f64, CliError> {
        match self {
            GridPoint::Value(v) => Ok(*v),
            GridPoint::Token(t) => {
                let rest = t.strip_prefix("lstar").ok_or_else(|| {
                    CliError::invalid("lambda_grid", format!("unrecognized point `{t}`"))
                })?;
                if !lambda_star.is_finite() {
                    return Err(CliError::invalid(
                        "lambda_grid",
                        format!("`{t}` needs a finite critical weight"),
                    ));
                }
                if rest.is_empty() {
                    return Ok(lambda_star);
                }
                let offset: f64 = rest.parse().map_err(|_| {
                    CliError::invalid("lambda_grid", format!("bad offset in `{t}`"))
                })?;
                Ok(lambda_star + offset)
            }
        }
    }
}

/// A strategy supplied for one virality weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyAt {
    pub lambda: f64,
    pub strategy: String,
}

/// Splitting controls for posterior estimation; `keep_rate = 1` turns
/// splitting off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub at: usize,
    pub keep_rate: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub feed_size: Option<usize>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub capacity: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// `majority`, `majority-signal-tie`, `deviation:<p>`,
    /// `deviation:<s>:<k>:<p>` or a path to a strategy JSON file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify_radius: Option<f64>,
    /// Number of runs whose paths are recorded by `simulate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_paths: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_schedule: Option<Vec<usize>>,
    /// `auto` or `<s>:<k>`, for example `+1:2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivotal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<Vec<GridPoint>>,
    /// `accuracy`, `agreement`, or `table:<path>` (one value per line on a
    /// uniform grid over `[0, 1]`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objectives: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<Vec<StrategyAt>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota_grid: Option<Vec<f64>>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $(if $top.$field.is_some() { $base.$field = $top.$field; })*
    };
}

impl RunConfig {
    /// Parses a configuration file, or the configuration embedded in a
    /// CSV / JSON artifact. Errors name the offending field.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::invalid("config", format!("cannot read {}: {e}", path.display()))
        })?;
        let value = viralfeed::output::extract_config(&text)
            .map_err(|e| CliError::invalid("config", format!("{}: {e}", path.display())))?;
        serde_path_to_error::deserialize(value).map_err(|e| {
            let field = e.path().to_string();
            CliError::Invalid {
                field: if field == "." {
                    "config".to_string()
                } else {
                    field
                },
                reason: e.inner().to_string(),
            }
        })
    }

    /// Fields set in `top` replace those in `self`.
    pub fn merge(mut self, top: RunConfig) -> RunConfig {
        overlay!(
            self,
            top,
            q,
            feed_size,
            capacity,
            lambda,
            iota,
            n,
            strategy,
            m_runs,
            base_seed,
            horizon,
            classify_radius,
            record_paths,
            tol,
            curve_points,
            q_grid,
            k_grid,
            c_grid,
            p_grid,
            n_schedule,
            pivotal,
            split,
            lambda_grid,
            objectives,
            equilibria,
            iota_grid
        );
        self
    }
}

pub fn require<T: Copy>(v: Option<T>, field: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::invalid(field, "missing; pass it as a flag or in --config"))
}
