use std::sync::Arc;

use pq_spectra::*;

fn interval(n: usize, p: f64, q: f64) -> Spec64 {
    let mesh = Arc::new(build_interval_mesh(n, 0.0, 1.0).unwrap());
    let nn = mesh.node_count();
    ProblemSpec::new(mesh, p, q, vec![1.0; nn], vec![0.0; nn]).unwrap()
}

fn opts() -> Options64 {
    Options64::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

/// Checks shared by every accepted eigenpair with positive eigenvalue.
fn assert_eigenpair(spec: &Spec64, e: &EigenPair64, lambda1: f64) {
    let v = e.values;
    assert!(e.weak_residual_norm <= 1e-8, "residual {}", e.weak_residual_norm);
    assert!(e.cone_residual <= 1e-10, "cone {}", e.cone_residual);
    assert!(e.field.oscillation() > 1e-6 * e.field.sup_norm());
    assert!(e.lambda > lambda1);
    // lambda - R_q(u) = T1 / T3 > 0
    let lhs = e.lambda - v.t2 / v.t3;
    assert!(rel(lhs, v.t1 / v.t3) <= 1e-8, "{lhs} vs {}", v.t1 / v.t3);
    assert!(lhs > 0.0);
    let check = kkt_check(spec, e.lambda, &e.field, &opts()).unwrap();
    assert!(check.passed, "{check:?}");
    let flipped = kkt_check(spec, e.lambda, &e.field.scaled(-1.0), &opts()).unwrap();
    assert!(flipped.passed);
}

#[test]
fn nehari_case_examples() {
    let spec = interval(128, 1.5, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    for factor in [1.05, 2.0, 10.0] {
        let e = solve_nehari(&spec, factor * th.lambda1, &th, &opts()).unwrap();
        assert_eq!(e.case_tag, CaseTag::Nehari);
        assert_eigenpair(&spec, &e, th.lambda1);
        let v = e.values;
        assert!(rel(v.j_lambda, (3.0 - 1.5) / (1.5 * 3.0) * v.t1) <= 1e-10);
        assert!(e.m_lambda.unwrap() > 0.0);
        let scale = v.t1 + v.t2 + e.lambda * v.t3;
        assert!(e.nehari_residual.unwrap().abs() <= 1e-8 * scale);
        let kkt = e.kkt.unwrap();
        assert!(kkt.multipliers.iter().all(|m| m.abs() <= 1e-6), "{kkt:?}");
    }
}

#[test]
fn nehari_rejects_lambda_below_threshold() {
    let spec = interval(64, 1.5, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    let err = solve_nehari(&spec, 0.5 * th.lambda1, &th, &opts()).unwrap_err();
    assert!(matches!(err, Error::NoScalingWitness { .. }));
}

#[test]
fn coercive_case_examples() {
    let spec = interval(128, 4.0, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    for factor in [1.05, 2.0, 10.0] {
        let e = solve_coercive(&spec, factor * th.lambda1, &th, &opts()).unwrap();
        assert_eq!(e.case_tag, CaseTag::Coercive);
        assert_eigenpair(&spec, &e, th.lambda1);
        assert!(e.values.j_lambda < 0.0);
        assert!(e.kkt.unwrap().multipliers[0].abs() <= 1e-6);
    }
    assert_eq!(solve_coercive(&spec, 0.0, &th, &opts()).unwrap_err(), Error::UseZeroEigenpair);
    assert!(matches!(
        solve_coercive(&spec, 0.5 * th.lambda1, &th, &opts()),
        Err(Error::SuspectBelowThreshold { .. })
    ));
}

#[test]
fn zero_eigenpair_and_constants() {
    let spec = interval(32, 1.5, 3.0);
    let z = zero_eigenpair(&spec);
    assert_eq!(z.lambda, 0.0);
    assert_eq!(z.case_tag, CaseTag::Zero);
    assert!(z.weak_residual_norm <= f64::EPSILON);
    assert!(kkt_check(&spec, 0.0, &z.field, &opts()).unwrap().passed);
    let c = DiscreteField::constant(&spec.mesh, -3.0);
    assert!(kkt_check(&spec, 0.0, &c, &opts()).unwrap().passed);
    assert_eq!(kkt_check(&spec, 0.0, &DiscreteField::zeros(&spec.mesh), &opts()).unwrap_err(), Error::ZeroField);
}

#[test]
fn random_field_fails_verification() {
    let spec = interval(64, 1.5, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    let u = project_to_cone(&spec, &DiscreteField::interpolate(&spec.mesh, |x| (7.0 * x[0]).sin() + x[0]).unwrap()).unwrap();
    let r = kkt_check(&spec, 2.0 * th.lambda1, &u, &opts()).unwrap();
    assert!(!r.passed);
    assert!(r.weak_residual_norm > 1e-3);
}

#[test]
fn certificates() {
    let spec = interval(64, 1.5, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    let c = certify_nonexistence(&spec, 0.5 * th.lambda1, &th, &opts()).unwrap();
    assert!(!c.boundary_case);
    assert!(rel(c.margin, 0.5 * th.lambda1) < 1e-12);
    assert!(c.min_quotient >= th.lambda1 * (1.0 - 1e-8));
    assert!(c.probe_count >= opts().probes);
    let b = certify_nonexistence(&spec, th.lambda1, &th, &opts()).unwrap();
    assert!(b.boundary_case);
    assert_eq!(b.margin, 0.0);
    assert!(matches!(
        certify_nonexistence(&spec, 1.5 * th.lambda1, &th, &opts()),
        Err(Error::OutsideCertifiedInterval { .. })
    ));
    assert!(matches!(certify_nonexistence(&spec, 0.0, &th, &opts()), Err(Error::Precondition(_))));
}

#[test]
fn trichotomy_never_overlaps() {
    // a certificate and a verified eigenpair can never coexist at one lambda
    let spec = interval(64, 1.5, 3.0);
    let th = solve_lambda1(&spec, &opts()).unwrap();
    for factor in [0.3, 0.9, 1.0, 1.2, 3.0] {
        let lambda = factor * th.lambda1;
        let cert = certify_nonexistence(&spec, lambda, &th, &opts()).is_ok();
        let pair = solve_nehari(&spec, lambda, &th, &opts()).is_ok();
        assert!(cert != pair, "lambda = {factor} lambda1: cert {cert}, pair {pair}");
    }
}

#[test]
fn nehari_on_square_with_boundary_weight() {
    let mesh = Arc::new(build_rectangle_mesh(10, 10, (0.0, 1.0, 0.0, 1.0)).unwrap());
    let nn = mesh.node_count();
    let b = weight_from_expression(&mesh, &WeightExpr::Constant(1.0), WeightTarget::Boundary).unwrap();
    let a = weight_from_expression(
        &mesh,
        &WeightExpr::Indicator { lower: [Some(0.0), None], upper: [Some(0.5), None], value: 2.0 },
        WeightTarget::Volume,
    )
    .unwrap();
    assert_eq!(a.len(), nn);
    let spec = ProblemSpec::new(mesh, 1.5, 3.0, a, b).unwrap();
    let th = solve_lambda1(&spec, &opts()).unwrap();
    let e = solve_nehari(&spec, 2.0 * th.lambda1, &th, &opts()).unwrap();
    assert_eigenpair(&spec, &e, th.lambda1);
}
