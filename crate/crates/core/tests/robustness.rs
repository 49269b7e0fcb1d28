//! Seeded random compact problems through the whole pipeline: the run must
//! terminate with a coherent report, and exact runs must return points that
//! satisfy the constraints and match the reported value.

use momopt_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_compact_problems_terminate_coherently() {
    let vars = VariableTable::new(&["x", "y"]).unwrap();
    let ball = parse_polynomial("1 - x^2 - y^2", &vars).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20260806);
    let mut exact = 0;
    for case in 0..10 {
        let ms = monomials_up_to(2, 4);
        let f = Polynomial::from_terms(
            2,
            ms.iter()
                .map(|m| (m.clone(), (rng.random::<f64>() * 7.0).round() - 3.0))
                .collect(),
        );
        let pop = PopInstance::new(f.clone(), vec![ball.clone()], vec![], vars.clone());
        let cfg = RunConfig {
            max_order: Some(pop.min_order() + 1),
            ..RunConfig::default()
        };
        let report = finite_minimizers(&pop, &cfg);
        assert_ne!(
            report.status,
            RunStatus::Infeasible,
            "case {case}: the ball is never empty"
        );
        assert!(!report.trace.is_empty(), "case {case}: empty trace");
        if report.status == RunStatus::Exact {
            exact += 1;
            let m = report.minimizers.as_ref().unwrap();
            let f_star = report.f_star.unwrap();
            for p in &m.points {
                assert!(
                    ball.evaluate(p) >= -1e-4,
                    "case {case}: point {p:?} outside the ball"
                );
                assert!(
                    (f.evaluate(p) - f_star).abs() <= 10.0 * cfg.residual_tol,
                    "case {case}: f(ξ) = {} vs f* = {f_star}",
                    f.evaluate(p)
                );
            }
            // The reported bound is consistent with an actual feasible point.
            let by_sampling = (0..2000)
                .map(|_| {
                    let r = rng.random::<f64>().sqrt();
                    let th = rng.random::<f64>() * std::f64::consts::TAU;
                    f.evaluate(&[r * th.cos(), r * th.sin()])
                })
                .fold(f64::INFINITY, f64::min);
            assert!(
                f_star <= by_sampling + 1e-2,
                "case {case}: f* = {f_star} above sampled minimum {by_sampling}"
            );
        }
    }
    // The hierarchy is exact on most generic compact instances.
    assert!(exact >= 5, "only {exact} of 10 runs were exact");
}

#[test]
fn preordering_mode_runs_end_to_end() {
    let vars = VariableTable::new(&["x"]).unwrap();
    let pop = PopInstance::new(
        parse_polynomial("x^3 - x", &vars).unwrap(),
        vec![
            parse_polynomial("x", &vars).unwrap(),
            parse_polynomial("1 - x", &vars).unwrap(),
        ],
        vec![],
        vars,
    );
    // min x³ − x on [0, 1] is −2/(3√3) at x = 1/√3.
    let cfg = RunConfig {
        mode: RelaxationMode::Preordering,
        ..RunConfig::default()
    };
    let report = finite_minimizers(&pop, &cfg);
    assert_eq!(report.status, RunStatus::Exact);
    let f_star = report.f_star.unwrap();
    let expect = -2.0 / (3.0 * 3f64.sqrt());
    assert!((f_star - expect).abs() < 1e-4, "f* = {f_star}");
    let m = report.minimizers.unwrap();
    assert!((m.points[0][0] - 1.0 / 3f64.sqrt()).abs() < 1e-3);
}

#[test]
fn kkt_mode_projects_extended_minimizers() {
    // min (x − 1)² with x ≥ 0: the KKT system in (x, Λ) has the single
    // solution x = 1, Λ = 0; the report projects back onto x.
    let vars = VariableTable::new(&["x"]).unwrap();
    let pop = PopInstance::new(
        parse_polynomial("x^2 - 2*x + 1", &vars).unwrap(),
        vec![parse_polynomial("x", &vars).unwrap()],
        vec![],
        vars,
    );
    let report = polar_minimize(
        &pop,
        PolarMode::Kkt,
        &PolarCaps::default(),
        &RunConfig::default(),
    )
    .unwrap();
    assert_eq!(report.status, RunStatus::Exact);
    assert!(report.f_star.unwrap().abs() < 1e-4);
    let m = report.minimizers.unwrap();
    assert_eq!(m.points[0].len(), 1, "projected back to the x coordinate");
    assert!((m.points[0][0] - 1.0).abs() < 1e-3);
    assert_eq!(report.vars.names(), &["x".to_string()]);
}
