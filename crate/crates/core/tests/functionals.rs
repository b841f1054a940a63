use std::sync::Arc;

use proptest::prelude::*;
use pq_spectra::*;

fn interval(n: usize, p: f64, q: f64, a: f64, b: f64) -> Spec64 {
    let mesh = Arc::new(build_interval_mesh(n, 0.0, 1.0).unwrap());
    let nn = mesh.node_count();
    ProblemSpec::new(mesh, p, q, vec![a; nn], vec![b; nn]).unwrap()
}

fn square(n: usize, p: f64, q: f64) -> Spec64 {
    let mesh = Arc::new(build_rectangle_mesh(n, n, (0.0, 1.0, 0.0, 1.0)).unwrap());
    let nn = mesh.node_count();
    let b = weight_from_expression(&mesh, &WeightExpr::Constant(0.5), WeightTarget::Boundary).unwrap();
    ProblemSpec::new(mesh, p, q, vec![1.0; nn], b).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn nodal(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Independent root finder for the projection shift: plain bisection on
/// `s -> g(u - s)` using the public cone residual.
fn bisection_shift(spec: &Spec64, u: &Field64) -> f64 {
    let (mut lo, mut hi) = (-2.0, 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = cone_residual(spec, &u.shifted(mid)).unwrap();
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn projection_shift_matches_bisection_oracle() {
    let spec = interval(64, 1.5, 3.0, 1.0, 0.0);
    let u = DiscreteField::interpolate(&spec.mesh, |x| x[0]).unwrap();
    let s = bisection_shift(&spec, &u);
    let pu = project_to_cone(&spec, &u).unwrap();
    let shift = u.values()[0] - pu.values()[0];
    assert!((shift - s).abs() < 1e-12, "{shift} vs {s}");
    assert!(cone_residual(&spec, &pu).unwrap().abs() < 1e-12);
}

#[test]
fn weak_residual_of_linear_field_matches_finite_differences() {
    // u = x at lambda = 0 with p = 1.5, q = 3: nonzero stiffness action.
    let spec = interval(32, 1.5, 3.0, 1.0, 0.0);
    let u = DiscreteField::interpolate(&spec.mesh, |x| x[0]).unwrap();
    let r = weak_residual(&spec, 0.0, &u).unwrap();
    assert!(r.iter().any(|x| x.abs() > 1e-3));
    let h = 1e-6;
    for i in [0, 5, 32] {
        let mut e = vec![0.0; u.len()];
        e[i] = 1.0;
        let plus = spec.field(u.values().iter().zip(&e).map(|(a, b)| a + h * b).collect()).unwrap();
        let minus = spec.field(u.values().iter().zip(&e).map(|(a, b)| a - h * b).collect()).unwrap();
        let fd = (energy_j_lambda(&spec, 0.0, &plus).unwrap() - energy_j_lambda(&spec, 0.0, &minus).unwrap()) / (2.0 * h);
        assert!((fd - r[i]).abs() <= 1e-6 * r[i].abs().max(1e-3), "node {i}: {fd} vs {}", r[i]);
    }
}

#[test]
fn cone_residual_examples_on_square_with_boundary_weight() {
    let spec = square(8, 1.5, 3.0);
    // odd about the centre in x, so both weighted integrals cancel
    let u = DiscreteField::interpolate(&spec.mesh, |x| x[0] - 0.5).unwrap();
    assert!(cone_residual(&spec, &u).unwrap().abs() < 1e-12);
    let one = DiscreteField::constant(&spec.mesh, 1.0);
    assert!((cone_residual(&spec, &one).unwrap() - 3.0).abs() < 1e-12);
}

fn directional_check(spec: &Spec64, lambda: f64, u: &[f64], v: &[f64]) -> (f64, f64) {
    let uf = spec.field(u.to_vec()).unwrap();
    let norm = uf.sup_norm();
    let h = 1e-6 * norm;
    let shifted = |s: f64| spec.field(u.iter().zip(v).map(|(a, b)| a + s * b).collect()).unwrap();
    let fd = (energy_j_lambda(spec, lambda, &shifted(h)).unwrap() - energy_j_lambda(spec, lambda, &shifted(-h)).unwrap())
        / (2.0 * h);
    let r = weak_residual(spec, lambda, &uf).unwrap();
    let an: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
    (fd, an)
}

fn no_flat_elements(spec: &Spec64, u: &[f64]) -> bool {
    let mesh = &spec.mesh;
    let norm = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (0..mesh.elements().len()).all(|e| {
        let g = mesh.element_gradient(e, u);
        (g[0] * g[0] + g[1] * g[1]).sqrt() > 1e-3 * norm
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gradient_consistency_interval(u in nodal(25), v in nodal(25), lambda in 0.0f64..40.0, p in 2.0f64..5.0) {
        let spec = interval(24, p, 3.0, 1.0, 0.7);
        let (fd, an) = directional_check(&spec, lambda, &u, &v);
        prop_assert!(rel(fd, an) < 1e-5 || (fd - an).abs() < 1e-9, "{} vs {}", fd, an);
    }

    #[test]
    fn gradient_consistency_square(u in nodal(25), v in nodal(25), lambda in 0.0f64..40.0) {
        let spec = square(4, 2.5, 3.5);
        let (fd, an) = directional_check(&spec, lambda, &u, &v);
        prop_assert!(rel(fd, an) < 1e-5 || (fd - an).abs() < 1e-9, "{} vs {}", fd, an);
    }

    #[test]
    fn gradient_consistency_small_p(u in nodal(25), v in nodal(25), lambda in 0.0f64..40.0) {
        let spec = interval(24, 1.5, 3.0, 1.0, 0.0);
        prop_assume!(no_flat_elements(&spec, &u));
        let (fd, an) = directional_check(&spec, lambda, &u, &v);
        prop_assert!(rel(fd, an) < 1e-5 || (fd - an).abs() < 1e-9, "{} vs {}", fd, an);
    }

    #[test]
    fn homogeneity(u in nodal(25), t in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        let spec = square(4, 1.7, 3.2);
        let uf = spec.field(u).unwrap();
        let a = evaluate(&spec, 0.0, &uf).unwrap();
        let b = evaluate(&spec, 0.0, &uf.scaled(t)).unwrap();
        let (p, q) = (spec.p, spec.q);
        prop_assert!(rel(b.t1, t.abs().powf(p) * a.t1) < 1e-12);
        prop_assert!(rel(b.t2, t.abs().powf(q) * a.t2) < 1e-12);
        prop_assert!(rel(b.t3, t.abs().powf(q) * a.t3) < 1e-12);
        let expected = t.abs().powf(q - 2.0) * t * a.g;
        prop_assert!((b.g - expected).abs() <= 1e-12 * (t.abs().powf(q - 1.0) * (a.g.abs() + a.t3)), "{} vs {}", b.g, expected);
    }

    #[test]
    fn projection_idempotent_and_odd(u in nodal(33)) {
        let spec = interval(32, 1.5, 3.0, 1.0, 1.0);
        let uf = spec.field(u).unwrap();
        prop_assume!(uf.oscillation() > 1e-3);
        let pu = project_to_cone(&spec, &uf).unwrap();
        let ppu = project_to_cone(&spec, &pu).unwrap();
        let scale = pu.sup_norm();
        for (a, b) in pu.values().iter().zip(ppu.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let neg = project_to_cone(&spec, &uf.scaled(-1.0)).unwrap();
        for (a, b) in pu.values().iter().zip(neg.values()) {
            prop_assert!((a + b).abs() <= 1e-12 * scale);
        }
        prop_assert!(scaled_cone_residual(&spec, &pu).unwrap() <= 1e-12);
    }

    #[test]
    fn ab_norm_positive_definite(u in nodal(25)) {
        let spec = square(4, 1.5, 3.0);
        let uf = spec.field(u).unwrap();
        prop_assume!(!uf.is_zero());
        prop_assert!(ab_norm(&spec, &uf).unwrap() > 0.0);
    }

    #[test]
    fn energy_matches_its_definition(u in nodal(25), lambda in -5.0f64..50.0) {
        let spec = interval(24, 1.5, 3.0, 1.0, 0.3);
        let uf = spec.field(u).unwrap();
        let v = evaluate(&spec, lambda, &uf).unwrap();
        prop_assert!(v.t1 >= 0.0 && v.t2 >= 0.0 && v.t3 >= 0.0);
        let j = v.t1 / 1.5 + v.t2 / 3.0 - lambda * v.t3 / 3.0;
        prop_assert!((v.j_lambda - j).abs() <= 1e-12 * (v.t1 + v.t2 + lambda.abs() * v.t3));
    }

    #[test]
    fn nehari_scaling_lands_on_manifold(u in nodal(33), factor in 1.01f64..20.0) {
        let spec = interval(32, 1.5, 3.0, 1.0, 0.0);
        let uf = project_to_cone(&spec, &spec.field(u).unwrap()).unwrap();
        prop_assume!(uf.oscillation() > 1e-3);
        let lambda = factor * rayleigh_q(&spec, &uf).unwrap();
        let (t, w) = nehari_scale(&spec, lambda, &uf).unwrap();
        prop_assert!(t > 0.0);
        let v = evaluate(&spec, lambda, &w).unwrap();
        let res = nehari_residual(&spec, lambda, &w).unwrap();
        prop_assert!(res.abs() <= 1e-12 * (v.t1 + v.t2 + lambda * v.t3));
        // on the manifold, J = (q - p)/(pq) T1
        prop_assert!(rel(v.j_lambda, (3.0 - 1.5) / 4.5 * v.t1) < 1e-10);
    }
}
