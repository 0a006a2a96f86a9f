//! Acceptance checks. Each test prints one PASS/FAIL line to stdout, bypassing
//! the harness capture, and then asserts. Tests take a shared lock so that
//! runtimes are measured without competing for the CPU.

mod common;

use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viralfeed::equilibrium::{
    best_response_violations, empirical_posteriors_at, solve_mixing_equilibrium, DeviationFamily,
    Sampling, Splitting, StrategyFamily,
};
use viralfeed::inflow::{
    comparative_statics_table, critical_virality, fixed_points, inflow_accuracy,
    manipulation_bound, InflowFn,
};
use viralfeed::model::{majority_rule, ModelParams};
use viralfeed::sim::{
    run_ensemble, run_ensemble_with, run_rng, steady_states, EnsembleConfig, EnsembleStats,
    Objective, Orientation, PlatformState, Simulator,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: u32, ok: bool, detail: String) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stdout().lock(),
        "{verdict} criterion {criterion}: {detail}"
    );
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// (q, K, C, λ) of the two-matching deviation example.
fn deviation_params() -> ModelParams {
    ModelParams::new(0.51, 6, 3, 1.0).unwrap()
}

const FAMILY_P: f64 = 0.32;

/// The `n = 20000`, `m = 20000` ensemble of the deviation family at `p = 0.32`.
fn deviation_ensemble() -> &'static (EnsembleStats, Duration) {
    static CELL: OnceLock<(EnsembleStats, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let p = deviation_params().with_agents(20_000).unwrap();
        let sigma = DeviationFamily::two_matching(&p)
            .unwrap()
            .strategy(FAMILY_P)
            .unwrap();
        let start = Instant::now();
        let stats = run_ensemble(
            &sigma,
            &p,
            20_000,
            4,
            &[Objective::Accuracy, Objective::Agreement],
        )
        .unwrap();
        (stats, start.elapsed())
    })
}

#[test]
fn criterion_1_critical_weights() {
    let _g = serial();
    let mut ok = true;
    let mut detail = Vec::new();
    for (q, kk, cc, target) in [(0.55, 7, 3, 0.76), (0.51, 6, 3, 0.77)] {
        let start = Instant::now();
        let r = critical_virality(q, kk, cc, 1e-9).unwrap();
        let took = start.elapsed();
        ok &= within(r.lambda_star, target, 0.01) && took < Duration::from_secs(1);
        detail.push(format!(
            "λ*({q}, {kk}, {cc}) = {:.6} in {took:.2?} (want {target} ± 0.01, < 1 s)",
            r.lambda_star
        ));
    }
    report(1, ok, detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_2_fixed_point_census() {
    let _g = serial();
    let start = Instant::now();
    let census = |lambda: f64| {
        let p = ModelParams::new(0.55, 7, 3, lambda).unwrap();
        fixed_points(&majority_rule(&p).unwrap(), &p, 0.0).unwrap()
    };
    let (low, mid, high) = (census(0.3), census(0.6), census(0.9));
    let single = |f: &[viralfeed::FixedPointReport]| {
        f.len() == 1 && f[0].label.is_informative() && !f[0].label.is_misleading()
    };
    let steady: Vec<_> = high
        .iter()
        .filter(|f| f.stability.is_steady_state())
        .collect();
    let pair = steady.len() == 2
        && steady.iter().filter(|f| !f.label.is_misleading()).count() == 1
        && steady.iter().filter(|f| !f.label.is_informative()).count() == 1;
    let took = start.elapsed();
    let ok = single(&low)
        && single(&mid)
        && mid[0].x_star > low[0].x_star
        && pair
        && took < Duration::from_secs(1);
    report(
        2,
        ok,
        format!(
            "λ=0.3: {:?}; λ=0.6: {:?}; λ=0.9 steady: {:?}; in {took:.2?}",
            low.iter()
                .map(|f| (f.x_star, f.label.as_str()))
                .collect::<Vec<_>>(),
            mid.iter()
                .map(|f| (f.x_star, f.label.as_str()))
                .collect::<Vec<_>>(),
            steady
                .iter()
                .map(|f| (f.x_star, f.label.as_str()))
                .collect::<Vec<_>>(),
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_lower_bound_and_statics() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let random: Vec<(f64, usize, usize)> = (0..200)
        .map(|_| {
            let kk = rng.random_range(2..=20usize);
            let cc = rng.random_range(1..=kk / 2);
            (rng.random_range(0.505..0.95), kk, cc)
        })
        .collect();
    let sweep = comparative_statics_table(&random, 1e-9).unwrap();
    let finite = sweep
        .entries
        .iter()
        .filter(|e| e.lambda_star.is_finite())
        .count();
    let floor_bad = sweep.floor_violations().count();

    let mut grid = Vec::new();
    for q in [0.52, 0.55, 0.6, 0.7, 0.8] {
        for kk in 4..=8 {
            for cc in 1..=2 {
                grid.push((q, kk, cc));
            }
        }
    }
    let statics = comparative_statics_table(&grid, 1e-9).unwrap();
    let bad = statics.violations().count() + statics.floor_violations().count();
    let took = start.elapsed();
    let ok = floor_bad == 0 && bad == 0 && took < Duration::from_secs(30);
    report(
        3,
        ok,
        format!(
            "{floor_bad} floor violations among {finite} finite of 200 random points; \
             {bad} violations among {} checks on a {}-point grid; in {took:.2?}",
            statics.checks.len(),
            grid.len()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_deviation_ensemble() {
    let _g = serial();
    let (stats, took) = deviation_ensemble();
    let (informative, se) = stats.projected_informative();
    let mean_of = |informative: bool| {
        stats
            .clusters
            .iter()
            .filter(|c| c.label.is_misleading() != informative)
            .find_map(|c| c.mean_final_x)
    };
    let (hi, lo) = (mean_of(true), mean_of(false));
    let ok = within(informative, 0.533, 0.02)
        && hi.is_some_and(|x| within(x, 0.84, 0.02))
        && lo.is_some_and(|x| within(x, 0.18, 0.02));
    report(
        4,
        ok,
        format!(
            "informative frequency {informative:.4} ± {se:.4} (want 0.533 ± 0.02; radius-assigned {:.4}, {} unassigned); \
             cluster means {hi:?} / {lo:?} (want 0.84 / 0.18 ± 0.02); {took:.1?} for 20000 runs",
            stats.informative_frequency(),
            stats.unassigned
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_5_equilibrium_estimation() {
    let _g = serial();
    let start = Instant::now();
    let p = deviation_params().with_agents(20_000).unwrap();
    let family = DeviationFamily::two_matching(&p).unwrap();
    let grid = [0.20, 0.26, 0.32, 0.38, 0.44];
    let sol = solve_mixing_equilibrium(
        &family,
        &p,
        &grid,
        &Sampling::split(1_200_000, 5, Splitting::default()),
    )
    .unwrap();
    let p_ok = sol.p_hat.is_some_and(|v| within(v, 0.32, 0.03));

    let mut consistent = Vec::new();
    for lambda in [0.3, 0.6] {
        let p = ModelParams::new(0.55, 7, 3, lambda)
            .unwrap()
            .with_agents(20_000)
            .unwrap();
        let sigma = majority_rule(&p).unwrap();
        let table = empirical_posteriors_at(
            &sigma,
            &p,
            &[p.agents],
            &Sampling::split(20_000, 6, Splitting::default()),
        )
        .unwrap()
        .remove(0);
        consistent.push((lambda, best_response_violations(&sigma, &table, &p).len()));
    }
    let took = start.elapsed();
    let ok = p_ok && consistent.iter().all(|c| c.1 == 0) && took < Duration::from_secs(20 * 60);
    report(
        5,
        ok,
        format!(
            "p_hat(20000) = {:?} ± {:?} (want 0.32 ± 0.03; gaps {:?} on {grid:?}); \
             majority best-response violations at (λ, count) {consistent:?}; in {took:.1?}",
            sol.p_hat, sol.p_hat_std_error, sol.gaps
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_design_numbers() {
    let _g = serial();
    let base = deviation_params();
    let star = critical_virality(base.q, base.feed_size, base.capacity, 1e-9)
        .unwrap()
        .lambda_star;
    let below = base
        .with_lambda(star - 0.001)
        .unwrap()
        .with_agents(20_000)
        .unwrap();
    let sub = run_ensemble(
        &majority_rule(&below).unwrap(),
        &below,
        2000,
        6,
        &[Objective::Accuracy],
    )
    .unwrap();
    let (stats, _) = deviation_ensemble();
    let limit = |s: &EnsembleStats, name: &str| s.limit_objective(name).unwrap().mean;
    let finite = |s: &EnsembleStats, name: &str| s.objective(name).unwrap().mean;
    let (acc_below, acc_one, agree_one) = (
        limit(&sub, "accuracy"),
        limit(stats, "accuracy"),
        limit(stats, "agreement"),
    );
    let ok = within(acc_below, 0.76, 0.02)
        && within(acc_one, 0.53, 0.02)
        && within(agree_one, 0.33, 0.02);
    report(
        6,
        ok,
        format!(
            "large-n payoffs: accuracy at λ*−0.001 {acc_below:.4} (want 0.76), accuracy at 1 {acc_one:.4} (want 0.53), \
             agreement at 1 {agree_one:.4} (want 0.33), all ± 0.02; at n = 20000: {:.4}, {:.4}, {:.4}",
            finite(&sub, "accuracy"),
            finite(stats, "accuracy"),
            finite(stats, "agreement")
        ),
    );
    assert!(ok);
}

fn ks_distance(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Largest `|mean residual| / SE` over x-bins of one-step increments minus
/// the predicted drift `(C+1)(φ_z(x) − x)/(S + C + 1)`, sampled at arrival `t`.
fn drift_score(p: &ModelParams, t: usize, states: usize, draws: usize) -> (f64, usize) {
    let sigma = majority_rule(p).unwrap();
    let sim = Simulator::new(&sigma, p).unwrap();
    let f = InflowFn::new(&sigma, p, 0.0).unwrap();
    let bins = 8;
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); bins];
    for run in 0..states as u64 {
        let mut rng = run_rng(1000 + run);
        let state = sim.run(t, &mut rng, &mut ()).unwrap();
        let (x, z) = (state.viral_accuracy(), state.story_fraction());
        let total = (state.score_pos + state.score_neg) as f64;
        let cc = p.capacity as f64;
        let drift = (cc + 1.0) * (f.eval_at(x, z) - x) / (total + cc + 1.0);
        let bin = ((x * bins as f64) as usize).min(bins - 1);
        for _ in 0..draws {
            let mut next: PlatformState = state;
            sim.step(&mut next, &mut rng, &mut ()).unwrap();
            let r = next.viral_accuracy() - x - drift;
            let a = &mut acc[bin];
            a.0 += 1;
            a.1 += r;
            a.2 += r * r;
        }
    }
    let mut worst = 0.0f64;
    let mut tested = 0;
    for &(n, sum, sq) in &acc {
        if n < 1000 {
            continue;
        }
        let n = n as f64;
        let mean = sum / n;
        let se = ((sq / n - mean * mean) / (n - 1.0)).sqrt();
        worst = worst.max(mean.abs() / se);
        tested += 1;
    }
    (worst, tested)
}

#[test]
fn criterion_7_property_suites() {
    let _g = serial();
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;

    // brute-force inflow over random mixed strategies
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let kk = rng.random_range(2..=10usize);
        let cc = rng.random_range(1..=kk / 2);
        let p = ModelParams::new(
            rng.random_range(0.501..0.999),
            kk,
            cc,
            rng.random_range(0.0..=1.0),
        )
        .unwrap();
        let sigma = common::random_strategy(kk, cc, &mut rng);
        let (x, z) = (rng.random::<f64>(), rng.random::<f64>());
        let got = inflow_accuracy(&sigma, &p, x, Some(z), Some(0.0)).unwrap();
        worst = worst.max((got - common::brute_force_inflow(&sigma, &p, x, z, 0.0)).abs());
    }
    ok &= worst <= 1e-12;
    lines.push(format!("brute force max error {worst:.1e}"));

    // derivative against central differences
    let mut worst = 0.0f64;
    for &(q, kk, cc) in &[(0.55, 7, 3), (0.51, 6, 3), (0.7, 12, 5)] {
        for lambda in [0.25, 0.6, 0.9, 1.0] {
            let f = InflowFn::majority(q, kk, cc, lambda).unwrap();
            for i in 1..200 {
                let x = i as f64 / 200.0;
                let h = 1e-5;
                let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
                worst = worst.max((f.derivative(x) - fd).abs());
            }
        }
    }
    ok &= worst <= 1e-6;
    lines.push(format!("derivative max error {worst:.1e}"));

    // drift decomposition
    let p = ModelParams::new(0.55, 7, 3, 0.9).unwrap();
    for t in [500, 2000] {
        let (score, bins) = drift_score(&p, t, 400, 2000);
        ok &= score <= 3.0 && bins > 0;
        lines.push(format!(
            "drift at t={t}: worst bin {score:.2} SE over {bins} bins"
        ));
    }

    // state symmetry: the mirrored world's accuracy 1 − x has the same law
    let p = ModelParams::new(0.55, 7, 3, 0.9)
        .unwrap()
        .with_agents(2000)
        .unwrap();
    let sigma = majority_rule(&p).unwrap();
    let truth = run_ensemble(&sigma, &p, 20_000, 70, &[]).unwrap();
    let mirror = run_ensemble_with(
        &sigma,
        &p,
        &EnsembleConfig {
            orientation: Orientation::Mirror,
            ..EnsembleConfig::new(20_000, 90_000)
        },
        &[],
    )
    .unwrap();
    let ks = ks_distance(
        truth.results.iter().map(|r| r.final_x).collect(),
        mirror.results.iter().map(|r| 1.0 - r.final_x).collect(),
    );
    ok &= ks <= 0.02;
    lines.push(format!("symmetry KS {ks:.4}"));

    // the misleading touchpoint at the critical weight is reached with positive probability
    let star = critical_virality(0.55, 7, 3, 1e-9).unwrap().lambda_star;
    let p = ModelParams::new(0.55, 7, 3, star)
        .unwrap()
        .with_agents(20_000)
        .unwrap();
    let sigma = majority_rule(&p).unwrap();
    let steady = steady_states(&sigma, &p).unwrap();
    let touch = steady.iter().find(|f| f.label.is_misleading()).map(|f| f.x_star);
    let stats = run_ensemble(&sigma, &p, 10_000, 80, &[]).unwrap();
    let near = |x: f64| touch.is_some_and(|t| (x - t).abs() <= 0.05);
    let hits: Vec<f64> = stats
        .results
        .iter()
        .map(|r| if near(r.final_x) { 1.0 } else { 0.0 })
        .collect();
    let left = stats
        .results
        .iter()
        .filter(|r| near(r.final_x) && touch.is_some_and(|t| r.final_x <= t))
        .count();
    let mut boot: Vec<f64> = (0..2000)
        .map(|_| {
            (0..hits.len())
                .map(|_| hits[rng.random_range(0..hits.len())])
                .sum::<f64>()
                / hits.len() as f64
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let lower = boot[(0.005 * boot.len() as f64) as usize];
    ok &= touch.is_some() && lower > 0.0;
    lines.push(format!(
        "touchpoint frequency {:.4}, 99% bootstrap lower bound {lower:.4}, {left} of the hits below it",
        hits.iter().sum::<f64>() / hits.len() as f64
    ));

    // manipulation below the bound
    let p = ModelParams::new(0.55, 7, 3, 0.6).unwrap();
    let sigma = majority_rule(&p).unwrap();
    let bound = manipulation_bound(&p).unwrap().iota_bound;
    let misleading = (0..100)
        .map(|i| bound * i as f64 / 100.0)
        .filter(|&iota| {
            fixed_points(&sigma, &p, iota)
                .unwrap()
                .iter()
                .any(|f| f.label.is_misleading())
        })
        .count();
    ok &= misleading == 0;
    lines.push(format!(
        "{misleading} of 100 rates below ι = {bound:.4} have a misleading fixed point"
    ));

    let mut worst = 0.0f64;
    for iota in [0.0, 0.5 * bound, 0.9 * bound] {
        let p = p.with_iota(iota).unwrap().with_agents(20_000).unwrap();
        let stats = run_ensemble(&sigma, &p, 500, 81, &[]).unwrap();
        for c in &stats.clusters {
            if let Some(m) = c.mean_final_x {
                worst = worst.max((m - c.x_star).abs());
            }
        }
    }
    ok &= worst <= 0.03;
    lines.push(format!("ensemble vs analytic cluster gap {worst:.4}"));

    lines.push(format!("in {:.1?}", start.elapsed()));
    report(7, ok, lines.join("; "));
    assert!(ok);
}
