//! Subcommand bodies. Each completes the configuration with its defaults,
//! validates everything before simulating, and writes its artifacts.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use viralfeed::design::{optimize_lambda, robustness_report, EquilibriumSource, CRITICAL_TOL};
use viralfeed::equilibrium::{
    best_response_cells, best_response_violations, empirical_posteriors_at,
    estimate_limit_equilibrium, DeviationFamily, Sampling, Splitting, StrategyFamily,
    DEFAULT_INDIFFERENCE_SE,
};
use viralfeed::inflow::{
    census, comparative_statics_table, critical_virality, manipulation_bound, InflowFn, RootConfig,
};
use viralfeed::model::{
    majority_rule, majority_rule_with, ModelParams, Signal, Strategy, TieBreak,
};
use viralfeed::output::{fmt_f64, render_svg, write_csv, write_json, Metadata, Plot};
use viralfeed::sim::{
    project_to_fixed_point, run_ensemble_with, run_seed, run_with, EnsembleConfig, Objective,
    RunOptions, Simulator, DEFAULT_CLASSIFY_RADIUS,
};

use crate::config::{require, RunConfig, SplitConfig};
use crate::CliError;

const DEFAULT_SEED: u64 = 1;
const DEFAULT_AGENTS: usize = 20_000;

pub struct Output {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Output {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn svg(&self, name: &str, plot: &Plot) -> Result<(), CliError> {
        if self.plot {
            std::fs::write(self.path(name), render_svg(plot))?;
        }
        Ok(())
    }
}

pub fn default_split(from: Option<SplitConfig>) -> SplitConfig {
    from.unwrap_or_else(|| {
        let d = Splitting::default();
        SplitConfig {
            at: d.at,
            keep_rate: d.keep_rate,
            margin: d.margin,
        }
    })
}

fn fill<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

/// Short machine-readable result printed to stdout.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: String,
    pub artifacts: Vec<String>,
    pub result: Value,
}

pub fn execute(name: &str, mut cfg: RunConfig, out: &Output) -> Result<Summary, CliError> {
    preflight(&cfg)?;
    std::fs::create_dir_all(&out.dir)?;
    let mut artifacts = Vec::new();
    let result = match name {
        "analyze" => analyze(&mut cfg, out, &mut artifacts)?,
        "lambda-star" => lambda_star(&mut cfg, out, &mut artifacts)?,
        "statics" => statics(&mut cfg, out, &mut artifacts)?,
        "simulate" => simulate(&mut cfg, out, &mut artifacts)?,
        "equilibrium" => equilibrium(&mut cfg, out, &mut artifacts)?,
        "design" => design(&mut cfg, out, &mut artifacts)?,
        "robustness" => robustness(&mut cfg, out, &mut artifacts)?,
        other => {
            return Err(CliError::invalid(
                "command",
                format!("unknown subcommand `{other}`"),
            ))
        }
    };
    Ok(Summary {
        command: name.to_string(),
        artifacts,
        result,
    })
}

fn is_builtin(spec: &str) -> bool {
    spec == "majority" || spec == "majority-signal-tie" || spec.starts_with("deviation:")
}

/// Every referenced file must exist before any work starts.
fn preflight(cfg: &RunConfig) -> Result<(), CliError> {
    let check = |field: &str, path: &str| {
        if Path::new(path).is_file() {
            Ok(())
        } else {
            Err(CliError::invalid(
                field,
                format!("file `{path}` does not exist"),
            ))
        }
    };
    if let Some(s) = &cfg.strategy {
        if !is_builtin(s) {
            check("strategy", s)?;
        }
    }
    for e in cfg.equilibria.iter().flatten() {
        if !is_builtin(&e.strategy) {
            check("equilibria", &e.strategy)?;
        }
    }
    for o in cfg.objectives.iter().flatten() {
        if let Some(p) = o.strip_prefix("table:") {
            check("objectives", p)?;
        }
    }
    Ok(())
}

fn params(cfg: &mut RunConfig, lambda: Option<f64>) -> Result<ModelParams, CliError> {
    let q = require(cfg.q, "q")?;
    let k = require(cfg.feed_size, "K")?;
    let c = require(cfg.capacity, "C")?;
    let lambda = match lambda {
        Some(l) => l,
        None => require(cfg.lambda, "lambda")?,
    };
    let n = fill(&mut cfg.n, DEFAULT_AGENTS);
    let iota = fill(&mut cfg.iota, 0.0);
    Ok(ModelParams::new(q, k, c, lambda)?
        .with_agents(n)?
        .with_iota(iota)?)
}

fn parse_signal(text: &str, field: &str) -> Result<Signal, CliError> {
    let v: i8 = text
        .trim_start_matches('+')
        .parse()
        .map_err(|_| CliError::invalid(field, format!("bad signal `{text}`")))?;
    Ok(Signal::from_i8(v)?)
}

fn parse_prob(text: &str, field: &str) -> Result<f64, CliError> {
    text.parse()
        .map_err(|_| CliError::invalid(field, format!("bad probability `{text}`")))
}

pub fn build_strategy(spec: &str, params: &ModelParams, field: &str) -> Result<Strategy, CliError> {
    match spec {
        "majority" => return Ok(majority_rule(params)?),
        "majority-signal-tie" => {
            return Ok(majority_rule_with(
                params,
                TieBreak::SignalOnBalancedEvidence,
            )?)
        }
        _ => {}
    }
    if let Some(rest) = spec.strip_prefix("deviation:") {
        let parts: Vec<&str> = rest.split(':').collect();
        return match parts.as_slice() {
            [p] => Ok(DeviationFamily::two_matching(params)?.strategy(parse_prob(p, field)?)?),
            [s, k, p] => {
                let k: usize = k
                    .parse()
                    .map_err(|_| CliError::invalid(field, format!("bad feed count `{k}`")))?;
                let family = DeviationFamily::new(params, parse_signal(s, field)?, k)?;
                Ok(family.strategy(parse_prob(p, field)?)?)
            }
            _ => Err(CliError::invalid(
                field,
                format!("expected deviation:<p> or deviation:<s>:<k>:<p>, got `{spec}`"),
            )),
        };
    }
    let text = std::fs::read_to_string(spec)
        .map_err(|e| CliError::invalid(field, format!("{spec}: {e}")))?;
    let sigma =
        Strategy::from_json(&text).map_err(|e| CliError::invalid(field, format!("{spec}: {e}")))?;
    if sigma.feed_size() != params.feed_size || sigma.capacity() != params.capacity {
        return Err(CliError::invalid(
            field,
            format!(
                "{spec} is for K = {}, C = {} but the run uses K = {}, C = {}",
                sigma.feed_size(),
                sigma.capacity(),
                params.feed_size,
                params.capacity
            ),
        ));
    }
    Ok(sigma)
}

fn objective(spec: &str) -> Result<Objective, CliError> {
    match spec {
        "accuracy" => Ok(Objective::Accuracy),
        "agreement" => Ok(Objective::Agreement),
        _ => {
            let path = spec.strip_prefix("table:").ok_or_else(|| {
                CliError::invalid("objectives", format!("unknown objective `{spec}`"))
            })?;
            let text = std::fs::read_to_string(path)?;
            let values = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| {
                    l.parse::<f64>().map_err(|_| {
                        CliError::invalid("objectives", format!("{path}: bad value `{l}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let name = Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.to_string());
            Ok(Objective::tabulated(name, values)?)
        }
    }
}

fn objectives(cfg: &mut RunConfig) -> Result<Vec<Objective>, CliError> {
    fill(
        &mut cfg.objectives,
        vec!["accuracy".to_string(), "agreement".to_string()],
    )
    .iter()
    .map(|s| objective(s))
    .collect()
}

fn sampling(cfg: &mut RunConfig, default_runs: usize) -> Sampling {
    let m = fill(&mut cfg.m_runs, default_runs);
    let seed = fill(&mut cfg.base_seed, DEFAULT_SEED);
    let split = default_split(cfg.split);
    cfg.split = Some(split);
    if split.keep_rate >= 1.0 {
        Sampling::plain(m, seed)
    } else {
        Sampling::split(
            m,
            seed,
            Splitting {
                at: split.at,
                keep_rate: split.keep_rate,
                margin: split.margin,
            },
        )
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn analyze(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let p = params(cfg, None)?;
    let spec = fill(&mut cfg.strategy, "majority".to_string());
    let points = fill(&mut cfg.curve_points, 1001);
    cfg.n = None;
    let sigma = build_strategy(&spec, &p, "strategy")?;
    let inflow = InflowFn::new(&sigma, &p, p.iota)?;
    let fixed = census(&inflow, &RootConfig::default())?;
    let meta = Metadata::new("analyze", cfg)?;

    let rows: Vec<Vec<String>> = fixed
        .iter()
        .map(|f| {
            vec![
                fmt_f64(f.x_star),
                fmt_f64(f.residual),
                f.stability.as_str().to_string(),
                f.label.as_str().to_string(),
                fmt_f64(f.sampling_accuracy),
            ]
        })
        .collect();
    write_csv(
        &out.path("analyze_fixed_points.csv"),
        &meta,
        &["x", "residual", "stability", "label", "sampling_accuracy"],
        &rows,
    )?;
    let curve = inflow.curve(points);
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|&(x, y)| vec![fmt_f64(x), fmt_f64(y), fmt_f64(inflow.sampling_accuracy(x))])
        .collect();
    write_csv(
        &out.path("analyze_curve.csv"),
        &meta,
        &["x", "inflow", "sampling_accuracy"],
        &rows,
    )?;

    let steady: Vec<_> = fixed
        .iter()
        .filter(|f| f.stability.is_steady_state())
        .collect();
    let result = json!({
        "params": p,
        "strategy": spec,
        "fixed_points": fixed,
        "steady_states": steady.len(),
        "informative_only": steady.iter().all(|f| f.label.is_informative()),
    });
    write_json(&out.path("analyze.json"), &meta, &result)?;
    artifacts.extend(
        [
            "analyze_fixed_points.csv",
            "analyze_curve.csv",
            "analyze.json",
        ]
        .map(String::from),
    );

    let mut plot = Plot::new(
        "Inflow accuracy",
        "viral accuracy x",
        "inflow accuracy",
        (0.0, 1.0),
        (0.0, 1.0),
    )
    .series(&spec, curve);
    plot.diagonal = true;
    plot.v_lines = fixed.iter().map(|f| f.x_star).collect();
    out.svg("analyze_curve.svg", &plot)?;
    if out.plot {
        artifacts.push("analyze_curve.svg".into());
    }
    Ok(result)
}

fn lambda_star(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let q = require(cfg.q, "q")?;
    let k = require(cfg.feed_size, "K")?;
    let c = require(cfg.capacity, "C")?;
    let tol = fill(&mut cfg.tol, CRITICAL_TOL);
    let r = critical_virality(q, k, c, tol)?;
    let meta = Metadata::new("lambda-star", cfg)?;
    let mut result = serde_json::to_value(r)?;
    if let Value::Object(m) = &mut result {
        m.insert("q".into(), json!(q));
        m.insert("K".into(), json!(k));
        m.insert("C".into(), json!(c));
    }
    write_json(&out.path("lambda_star.json"), &meta, &result)?;
    artifacts.push("lambda_star.json".into());
    Ok(result)
}

fn statics(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let qs = fill(&mut cfg.q_grid, vec![0.55, 0.6, 0.7]);
    let ks = fill(&mut cfg.k_grid, vec![4, 5, 6, 7, 8]);
    let cs = fill(&mut cfg.c_grid, vec![1, 2, 3]);
    let tol = fill(&mut cfg.tol, CRITICAL_TOL);
    let mut grid = Vec::new();
    for &q in &qs {
        for &k in &ks {
            grid.extend(cs.iter().filter(|&&c| 2 * c <= k).map(|&c| (q, k, c)));
        }
    }
    if grid.is_empty() {
        return Err(CliError::invalid(
            "c_grid",
            "no grid point satisfies 2C <= K",
        ));
    }
    let table = comparative_statics_table(&grid, tol)?;
    let meta = Metadata::new("statics", cfg)?;
    let rows: Vec<Vec<String>> = table
        .entries
        .iter()
        .map(|e| {
            vec![
                fmt_f64(e.q),
                e.feed_size.to_string(),
                e.capacity.to_string(),
                fmt_f64(e.lambda_star),
                fmt_f64(e.lambda_floor),
                e.floor_ok.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.path("statics_entries.csv"),
        &meta,
        &["q", "K", "C", "lambda_star", "lambda_floor", "floor_ok"],
        &rows,
    )?;
    let relation = |c: &viralfeed::inflow::DirectionCheck| {
        serde_json::to_value(c.relation)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    };
    let rows: Vec<Vec<String>> = table
        .checks
        .iter()
        .map(|c| {
            vec![
                relation(c),
                c.base.to_string(),
                c.other.to_string(),
                c.weak_ok.to_string(),
                c.strict_ok.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.path("statics_checks.csv"),
        &meta,
        &["relation", "base", "other", "weak_ok", "strict_ok"],
        &rows,
    )?;
    write_json(&out.path("statics.json"), &meta, &table)?;
    artifacts
        .extend(["statics_entries.csv", "statics_checks.csv", "statics.json"].map(String::from));
    Ok(json!({
        "points": table.entries.len(),
        "checks": table.checks.len(),
        "violations": table.violations().count(),
        "floor_violations": table.floor_violations().count(),
        "all_ok": table.all_ok(),
    }))
}

fn simulate(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let p = params(cfg, None)?;
    let spec = fill(&mut cfg.strategy, "majority".to_string());
    let m = fill(&mut cfg.m_runs, 1000);
    let seed = fill(&mut cfg.base_seed, DEFAULT_SEED);
    let horizon = fill(&mut cfg.horizon, p.agents);
    let radius = fill(&mut cfg.classify_radius, DEFAULT_CLASSIFY_RADIUS);
    let paths = fill(&mut cfg.record_paths, 0).min(m);
    let objs = objectives(cfg)?;
    if horizon <= p.feed_size {
        return Err(CliError::invalid(
            "horizon",
            format!("must exceed K = {}", p.feed_size),
        ));
    }
    let sigma = build_strategy(&spec, &p, "strategy")?;
    let inflow = InflowFn::new(&sigma, &p, p.iota)?;
    let all = census(&inflow, &RootConfig::default())?;

    let ens_cfg = EnsembleConfig {
        horizon: Some(horizon),
        classify_radius: radius,
        ..EnsembleConfig::new(m, seed)
    };
    let stats = run_ensemble_with(&sigma, &p, &ens_cfg, &objs)?;
    let meta = Metadata::new("simulate", cfg)?;

    let rows: Vec<Vec<String>> = stats
        .results
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                r.seed.to_string(),
                fmt_f64(r.final_x),
                fmt_f64(r.final_z),
                opt(r.assigned.map(|a| stats.fixed_points[a].x_star)),
                opt(project_to_fixed_point(r.final_x, &inflow, &all).map(|a| all[a].x_star)),
            ]
        })
        .collect();
    write_csv(
        &out.path("simulate_runs.csv"),
        &meta,
        &[
            "run",
            "seed",
            "final_x",
            "final_z",
            "steady_state",
            "projected",
        ],
        &rows,
    )?;
    write_json(&out.path("simulate_summary.json"), &meta, &stats)?;
    artifacts.extend(["simulate_runs.csv", "simulate_summary.json"].map(String::from));

    if paths > 0 {
        let sim = Simulator::new(&sigma, &p)?;
        let opts = RunOptions {
            record_path: true,
            ..RunOptions::new(horizon)
        };
        let mut rows = Vec::new();
        let mut plot = Plot::new(
            "Viral accuracy",
            "agents t",
            "viral accuracy x",
            (0.0, horizon as f64),
            (0.0, 1.0),
        );
        for i in 0..paths {
            let r = run_with(&sim, run_seed(seed, i as u64), &opts)?;
            let path = r.path.unwrap_or_default();
            for pt in &path {
                rows.push(vec![
                    i.to_string(),
                    pt.t.to_string(),
                    fmt_f64(pt.x),
                    fmt_f64(pt.z),
                ]);
            }
            plot = plot.series(
                &format!("run {i}"),
                path.iter().map(|pt| (pt.t as f64, pt.x)).collect(),
            );
        }
        plot.h_lines = stats.fixed_points.iter().map(|f| f.x_star).collect();
        write_csv(
            &out.path("simulate_paths.csv"),
            &meta,
            &["run", "t", "x", "z"],
            &rows,
        )?;
        artifacts.push("simulate_paths.csv".into());
        out.svg("simulate_paths.svg", &plot)?;
        if out.plot {
            artifacts.push("simulate_paths.svg".into());
        }
    }
    Ok(json!({
        "runs": stats.runs,
        "fixed_points": stats.fixed_points,
        "clusters": stats.clusters,
        "unassigned": stats.unassigned,
        "projected": stats.projected,
        "mean_final_x": stats.mean_final_x,
        "objectives": stats.objectives,
    }))
}

fn pivotal_family(
    spec: &str,
    p: &ModelParams,
    sampling: &Sampling,
) -> Result<DeviationFamily, CliError> {
    if spec == "auto" {
        return Ok(DeviationFamily::auto_detect(
            p,
            sampling.m_runs,
            sampling.base_seed,
        )?);
    }
    let (s, k) = spec.split_once(':').ok_or_else(|| {
        CliError::invalid("pivotal", format!("expected auto or <s>:<k>, got `{spec}`"))
    })?;
    let k: usize = k
        .parse()
        .map_err(|_| CliError::invalid("pivotal", format!("bad feed count `{k}`")))?;
    Ok(DeviationFamily::new(p, parse_signal(s, "pivotal")?, k)?)
}

fn equilibrium(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let p = params(cfg, None)?;
    let spec = fill(&mut cfg.strategy, "majority".to_string());
    let samp = sampling(cfg, 2000);
    let p_grid = fill(&mut cfg.p_grid, (0..=8).map(|i| i as f64 * 0.05).collect());
    let schedule = fill(&mut cfg.n_schedule, vec![p.agents]);
    let pivotal = fill(&mut cfg.pivotal, "auto".to_string());
    if let Some(&bad) = schedule.iter().find(|&&n| n > p.agents || n <= p.feed_size) {
        return Err(CliError::invalid(
            "n_schedule",
            format!("{bad} is outside (K, n]"),
        ));
    }
    let sigma = build_strategy(&spec, &p, "strategy")?;
    let table = empirical_posteriors_at(&sigma, &p, &[p.agents], &samp)?.remove(0);
    let responses = best_response_cells(&table, &p, DEFAULT_INDIFFERENCE_SE);
    let violations = best_response_violations(&sigma, &table, &p);
    let meta = Metadata::new("equilibrium", cfg)?;

    let rows: Vec<Vec<String>> = table
        .cells
        .iter()
        .zip(&responses)
        .map(|(c, r)| {
            let response = serde_json::to_value(r.response)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            vec![
                c.signal.value().to_string(),
                c.k.to_string(),
                fmt_f64(c.belief),
                fmt_f64(c.std_error),
                fmt_f64(c.count),
                fmt_f64(c.mirror_count),
                c.low_confidence.to_string(),
                response,
                r.z.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.path("equilibrium_posteriors.csv"),
        &meta,
        &[
            "s",
            "k",
            "belief",
            "std_error",
            "count",
            "mirror_count",
            "low_confidence",
            "best_response",
            "z",
        ],
        &rows,
    )?;
    artifacts.push("equilibrium_posteriors.csv".into());

    let mut result = json!({
        "strategy": spec,
        "posteriors": table,
        "best_response": responses,
        "violations": violations,
        "is_equilibrium": violations.is_empty(),
    });

    if !p_grid.is_empty() {
        let family = pivotal_family(&pivotal, &p, &samp)?;
        let limit = estimate_limit_equilibrium(&family, &p, &schedule, &p_grid, &samp)?;
        let mut rows = Vec::new();
        for s in &limit.solutions {
            for ((pp, g), e) in s.p_grid.iter().zip(&s.gaps).zip(&s.gap_std_errors) {
                rows.push(vec![
                    s.n.to_string(),
                    fmt_f64(*pp),
                    fmt_f64(*g),
                    fmt_f64(*e),
                ]);
            }
        }
        write_csv(
            &out.path("equilibrium_mixing.csv"),
            &meta,
            &["n", "p", "gap", "std_error"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = limit
            .solutions
            .iter()
            .map(|s| vec![s.n.to_string(), opt(s.p_hat), opt(s.p_hat_std_error)])
            .collect();
        write_csv(
            &out.path("equilibrium_pn.csv"),
            &meta,
            &["n", "p_hat", "std_error"],
            &rows,
        )?;
        artifacts.extend(["equilibrium_mixing.csv", "equilibrium_pn.csv"].map(String::from));

        let curve: Vec<(f64, f64)> = limit
            .solutions
            .iter()
            .filter_map(|s| Some((s.n as f64, s.p_hat?)))
            .collect();
        let n_max = schedule.iter().copied().max().unwrap_or(p.agents) as f64;
        let mut plot = Plot::new(
            "Mixing probability",
            "agents n",
            "p_n",
            (0.0, n_max),
            (0.0, 1.0),
        )
        .series(&family.describe(), curve);
        plot.h_lines = limit.limit.into_iter().collect();
        out.svg("equilibrium_pn.svg", &plot)?;
        if out.plot {
            artifacts.push("equilibrium_pn.svg".into());
        }
        let (s, k) = family.pivotal();
        if let Value::Object(m) = &mut result {
            m.insert("pivotal".into(), json!({"s": s.value(), "k": k}));
            m.insert("mixing".into(), serde_json::to_value(&limit)?);
        }
    }
    write_json(&out.path("equilibrium.json"), &meta, &result)?;
    artifacts.push("equilibrium.json".into());
    Ok(result)
}

fn design(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let p = params(cfg, Some(0.0))?;
    cfg.lambda = None;
    let m = fill(&mut cfg.m_runs, 1000);
    let seed = fill(&mut cfg.base_seed, DEFAULT_SEED);
    let objs = objectives(cfg)?;
    let grid_spec = fill(
        &mut cfg.lambda_grid,
        ["0", "0.25", "0.5", "lstar-0.001"]
            .iter()
            .map(|t| crate::config::GridPoint::parse(t))
            .collect(),
    );
    let lambda_star = critical_virality(p.q, p.feed_size, p.capacity, CRITICAL_TOL)?.lambda_star;
    let grid: Vec<f64> = grid_spec
        .iter()
        .map(|g| g.resolve(lambda_star))
        .collect::<Result<_, _>>()?;
    let source = match (&cfg.equilibria, &cfg.strategy) {
        (Some(list), _) => EquilibriumSource::PerLambda(
            list.iter()
                .map(|e| {
                    let at = p.with_lambda(e.lambda)?;
                    Ok((e.lambda, build_strategy(&e.strategy, &at, "equilibria")?))
                })
                .collect::<Result<_, CliError>>()?,
        ),
        (None, Some(s)) => EquilibriumSource::Fixed(build_strategy(s, &p, "strategy")?),
        (None, None) => EquilibriumSource::Auto,
    };
    let report = optimize_lambda(&objs, &p, &grid, &source, m, seed)?;
    let meta = Metadata::new("design", cfg)?;
    let rows: Vec<Vec<String>> = report
        .estimates
        .iter()
        .map(|e| {
            vec![
                e.objective.clone(),
                fmt_f64(e.lambda),
                e.strategy.clone(),
                fmt_f64(e.finite.mean),
                fmt_f64(e.finite.std_error),
                fmt_f64(e.finite.ci_lo),
                fmt_f64(e.finite.ci_hi),
                fmt_f64(e.limit.mean),
                fmt_f64(e.limit.std_error),
                fmt_f64(e.limit.ci_lo),
                fmt_f64(e.limit.ci_hi),
                e.finite.runs.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.path("design.csv"),
        &meta,
        &[
            "objective",
            "lambda",
            "strategy",
            "finite_mean",
            "finite_std_error",
            "finite_ci_lo",
            "finite_ci_hi",
            "limit_mean",
            "limit_std_error",
            "limit_ci_lo",
            "limit_ci_hi",
            "runs",
        ],
        &rows,
    )?;
    write_json(&out.path("design.json"), &meta, &report)?;
    artifacts.extend(["design.csv", "design.json"].map(String::from));
    if out.plot {
        for o in &objs {
            let pick = |limit: bool| -> Vec<(f64, f64)> {
                let mut pts: Vec<(f64, f64)> = report
                    .estimates
                    .iter()
                    .filter(|e| e.objective == o.name())
                    .map(|e| (e.lambda, if limit { e.limit.mean } else { e.finite.mean }))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                pts
            };
            let mut plot = Plot::new(
                &format!("Platform payoff: {}", o.name()),
                "virality weight",
                "payoff",
                (0.0, 1.0),
                (0.0, 1.0),
            )
            .series("finite n", pick(false))
            .series("limit", pick(true));
            if lambda_star.is_finite() {
                plot.v_lines = vec![lambda_star];
            }
            let name = format!("design_{}.svg", o.name());
            out.svg(&name, &plot)?;
            artifacts.push(name);
        }
    }
    Ok(serde_json::to_value(&report)?)
}

fn robustness(
    cfg: &mut RunConfig,
    out: &Output,
    artifacts: &mut Vec<String>,
) -> Result<Value, CliError> {
    let p = params(cfg, None)?;
    cfg.iota = None;
    let p = p.with_iota(0.0)?;
    let m = fill(&mut cfg.m_runs, 200);
    let seed = fill(&mut cfg.base_seed, DEFAULT_SEED);
    let iota_grid = match &cfg.iota_grid {
        Some(g) => g.clone(),
        None => {
            let bound = manipulation_bound(&p)?.iota_bound;
            let top = (2.0 * bound).clamp(0.05, 0.95);
            let g: Vec<f64> = (0..=20).map(|i| top * i as f64 / 20.0).collect();
            cfg.iota_grid = Some(g.clone());
            g
        }
    };
    let report = robustness_report(&p, &iota_grid, m, seed)?;
    let meta = Metadata::new("robustness", cfg)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let e = r.ensemble.as_ref();
            vec![
                fmt_f64(r.iota),
                r.fixed_points.len().to_string(),
                r.misleading_fixed_points.to_string(),
                opt(r.informative_x),
                e.map(|e| e.runs.to_string()).unwrap_or_default(),
                opt(e.map(|e| e.mean_final_x)),
                opt(e.map(|e| e.misleading_frequency)),
            ]
        })
        .collect();
    write_csv(
        &out.path("robustness.csv"),
        &meta,
        &[
            "iota",
            "fixed_points",
            "misleading_fixed_points",
            "informative_x",
            "runs",
            "mean_final_x",
            "misleading_frequency",
        ],
        &rows,
    )?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .flat_map(|r| {
            r.fixed_points.iter().map(move |f| {
                vec![
                    fmt_f64(r.iota),
                    fmt_f64(f.x_star),
                    f.stability.as_str().to_string(),
                    f.label.as_str().to_string(),
                ]
            })
        })
        .collect();
    write_csv(
        &out.path("robustness_fixed_points.csv"),
        &meta,
        &["iota", "x", "stability", "label"],
        &rows,
    )?;
    write_json(&out.path("robustness.json"), &meta, &report)?;
    artifacts.extend(
        [
            "robustness.csv",
            "robustness_fixed_points.csv",
            "robustness.json",
        ]
        .map(String::from),
    );
    if out.plot {
        let pts: Vec<(f64, f64)> = report
            .rows
            .iter()
            .filter_map(|r| Some((r.iota, r.informative_x?)))
            .collect();
        let top = iota_grid.iter().copied().fold(0.0, f64::max).max(1e-9);
        let mut plot = Plot::new(
            "Informative steady state",
            "manipulation rate",
            "viral accuracy",
            (0.0, top),
            (0.0, 1.0),
        )
        .series("informative x*", pts);
        plot.v_lines = vec![report.bound.iota_bound];
        plot.h_lines = vec![0.5];
        out.svg("robustness.svg", &plot)?;
        artifacts.push("robustness.svg".into());
    }
    Ok(json!({
        "lambda_star": report.lambda_star,
        "bound": report.bound,
        "informative_nonincreasing": report.informative_nonincreasing,
        "clean_below_bound": report.clean_below_bound,
        "misleading_at_bound": report.misleading_at_bound,
        "emergence": report.emergence,
    }))
}
