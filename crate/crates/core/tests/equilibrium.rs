use viralfeed::equilibrium::{
    best_response, best_response_violations, empirical_posteriors, empirical_posteriors_at,
    estimate_limit_equilibrium, solve_mixing_equilibrium, DeviationFamily, Sampling, Splitting,
    StrategyFamily,
};
use viralfeed::model::{
    majority_rule, majority_rule_with, ModelParams, Signal, Strategy, TieBreak,
};
use viralfeed::Result;

#[test]
fn uniform_sampling_posteriors_match_independent_signals() {
    // at λ = 0 every feed story is an independent signal of precision z → q
    let p = ModelParams::new(0.55, 7, 3, 0.0)
        .unwrap()
        .with_agents(4000)
        .unwrap();
    let table = empirical_posteriors(&majority_rule(&p).unwrap(), &p, 400, 21).unwrap();
    let step = (0.55f64 / 0.45).ln();
    let mut checked = 0;
    for c in &table.cells {
        let oracle = (2.0 * c.k as f64 - 7.0 + c.signal.value() as f64) * step;
        let logit = (c.belief / (1.0 - c.belief)).ln();
        let logit_se = c.std_error / (c.belief * (1.0 - c.belief));
        if logit_se < 0.03 {
            assert!(
                (logit - oracle).abs() < 0.1,
                "(s={}, k={}): {logit} vs {oracle}",
                c.signal,
                c.k
            );
            checked += 1;
        }
    }
    assert!(checked >= 8, "only {checked} cells are well sampled");
}

#[test]
fn posteriors_are_state_symmetric_and_monotone_in_the_signal() {
    let p = ModelParams::new(0.55, 7, 3, 0.6)
        .unwrap()
        .with_agents(5000)
        .unwrap();
    let table = empirical_posteriors(&majority_rule(&p).unwrap(), &p, 300, 4).unwrap();
    assert!(table.symmetry_defect() < 1e-12);
    for k in 0..=7 {
        let (pos, neg) = (table.cell(Signal::Pos, k), table.cell(Signal::Neg, k));
        let pooled = pos.std_error.hypot(neg.std_error);
        assert!(pos.belief >= neg.belief - 2.0 * pooled, "k = {k}");
        assert!((0.0..=1.0).contains(&pos.belief));
    }
}

#[test]
fn majority_is_not_self_consistent_above_the_critical_weight() {
    let p = ModelParams::new(0.51, 6, 3, 1.0).unwrap();
    let sigma = majority_rule(&p).unwrap();
    let samp = Sampling::split(200_000, 9, Splitting::default());
    let table = empirical_posteriors_at(&sigma, &p, &[p.agents], &samp)
        .unwrap()
        .remove(0);
    let pivot = table.cell(Signal::Pos, 2);
    let violations = best_response_violations(&sigma, &table, &p);
    eprintln!("belief at (+1, 2): {} ± {}", pivot.belief, pivot.std_error);
    assert!(
        violations
            .iter()
            .any(|v| v.signal == Signal::Pos && v.k == 2),
        "{violations:?}"
    );
}

#[test]
fn splitting_agrees_with_plain_sampling() {
    let p = ModelParams::new(0.51, 6, 3, 1.0)
        .unwrap()
        .with_agents(6000)
        .unwrap();
    let sigma = DeviationFamily::two_matching(&p)
        .unwrap()
        .strategy(0.3)
        .unwrap();
    let plain = empirical_posteriors(&sigma, &p, 3000, 77).unwrap();
    let split = empirical_posteriors_at(
        &sigma,
        &p,
        &[6000],
        &Sampling::split(12_000, 78, Splitting::default()),
    )
    .unwrap()
    .remove(0);
    for (a, b) in plain.cells.iter().zip(&split.cells) {
        let se = a.std_error.hypot(b.std_error);
        assert!(
            (a.belief - b.belief).abs() < 3.5 * se + 1e-9,
            "(s={}, k={}): {} vs {}",
            a.signal,
            a.k,
            a.belief,
            b.belief
        );
    }
}

#[test]
fn subcritical_family_has_no_interior_indifference() {
    let p = ModelParams::new(0.55, 7, 3, 0.5)
        .unwrap()
        .with_agents(5000)
        .unwrap();
    let family = DeviationFamily::two_matching(&p).unwrap();
    let sol =
        solve_mixing_equilibrium(&family, &p, &[0.0, 0.25, 0.5], &Sampling::plain(300, 2)).unwrap();
    assert_eq!(sol.p_hat, None);
    assert!(sol.gaps.iter().all(|g| *g < 0.0), "{:?}", sol.gaps);
    let table = empirical_posteriors(&majority_rule(&p).unwrap(), &p, 300, 2).unwrap();
    assert!(best_response_violations(family.base(), &table, &p).is_empty());
}

struct Constant(Strategy);

impl StrategyFamily for Constant {
    fn strategy(&self, _: f64) -> Result<Strategy> {
        Ok(self.0.clone())
    }

    fn pivotal(&self) -> (Signal, usize) {
        (Signal::Pos, 2)
    }

    fn describe(&self) -> String {
        "constant".into()
    }
}

#[test]
fn constant_family_gives_constant_sequence() {
    let p = ModelParams::new(0.51, 6, 3, 1.0)
        .unwrap()
        .with_agents(3000)
        .unwrap();
    let family = Constant(majority_rule(&p).unwrap());
    let est = estimate_limit_equilibrium(
        &family,
        &p,
        &[1000, 2000, 3000],
        &[0.0, 0.5, 1.0],
        &Sampling::plain(200, 5),
    )
    .unwrap();
    for s in &est.solutions {
        assert_eq!(s.p_hat, None);
        assert!(s.gaps.windows(2).all(|w| w[0] == w[1]));
    }
    assert_eq!(est.limit, None);
    assert!(!est.plateau);
}

#[test]
fn best_response_to_uniform_sampling_beliefs_follows_the_signal_on_balanced_cells() {
    // with odd K the cells where signal and feed cancel have belief exactly 1/2
    let p = ModelParams::new(0.6, 5, 2, 0.0)
        .unwrap()
        .with_agents(4000)
        .unwrap();
    let table = empirical_posteriors(&majority_rule(&p).unwrap(), &p, 300, 12).unwrap();
    let expected = majority_rule_with(&p, TieBreak::SignalOnBalancedEvidence).unwrap();
    assert_eq!(best_response(&table, &p).unwrap(), expected);
}
