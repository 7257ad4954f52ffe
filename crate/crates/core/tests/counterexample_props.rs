use proptest::prelude::*;

use singular_orbits::counterexample_gen::{
    bracket_residual, build_h2, build_plateau_q, check_nonresonance, convergents, desk_system, region_probes,
    resonance_integers, verify_integrability_witness, PlateauSpec, Rational, DESK_KAPPA,
};
use singular_orbits::expr::HamiltonianExpr;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn non_square() -> impl Strategy<Value = u32> {
    (2u32..60).prop_filter("not a perfect square", |d| {
        let r = (*d as f64).sqrt().round() as u32;
        r * r != *d
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn convergents_approach_from_alternating_sides(d in non_square(), count in 2usize..8) {
        let x = (d as f64).sqrt();
        let c = convergents(x, count);
        prop_assert_eq!(c.len(), count);
        for (k, r) in c.iter().enumerate() {
            prop_assert!(r.den > 0);
            // |x − p/q| < 1/q²
            prop_assert!((x - r.value()).abs() < 1.0 / (r.den as f64).powi(2));
            if k > 0 {
                prop_assert!((x - r.value()).abs() < (x - c[k - 1].value()).abs());
                prop_assert!(r.den >= c[k - 1].den);
                prop_assert!((x - r.value()).signum() != (x - c[k - 1].value()).signum());
            }
        }
    }

    #[test]
    fn desk_specs_are_valid_and_nested(d in non_square(), count in 1usize..=4) {
        let gamma = [1.0, (d as f64).sqrt()];
        let spec = PlateauSpec::desk(&gamma, count);
        prop_assert!(spec.validate(&gamma).is_ok());
        for k in 1..count {
            prop_assert!(spec.radii[k] < spec.radii[k - 1]);
            prop_assert!(spec.centers[k][0] < spec.centers[k - 1][0]);
        }
    }

    #[test]
    fn plateau_q_has_the_prescribed_slopes(count in 1usize..=3, u in -0.45f64..0.45, v in -0.45f64..0.45) {
        let gamma = [1.0, SQRT2];
        let spec = PlateauSpec::desk(&gamma, count);
        let q = build_plateau_q(&spec, &gamma).unwrap();
        for k in 0..count {
            let (c, r) = (&spec.centers[k], spec.radii[k]);
            let want = spec.slope_values(k);
            // inside the half-radius ball
            let i = [c[0] + r * u, c[1] + r * v];
            let g = q.gradient(&i);
            prop_assert!((g[0] - want[0]).abs() < 1e-12 && (g[1] - want[1]).abs() < 1e-12, "{:?} vs {:?}", g, want);
            let at_center = gamma[0] * c[0] + gamma[1] * c[1];
            prop_assert!((q.eval(c) - at_center).abs() < 1e-14);
        }
        // far from every ball Q is γ·I
        let i = [0.9 + 0.05 * u, 0.9 + 0.05 * v];
        let g = q.gradient(&i);
        prop_assert!((g[0] - gamma[0]).abs() < 1e-15 && (g[1] - gamma[1]).abs() < 1e-15);
    }

    #[test]
    fn witness_commutes_for_every_amplitude(e0 in 0.0f64..1e-2, e1 in 0.0f64..1e-2) {
        let gamma = [1.0, SQRT2];
        let q = build_plateau_q(&PlateauSpec::desk(&gamma, 2), &gamma).unwrap();
        let sys = build_h2(&q, &[e0, e1], DESK_KAPPA).unwrap();
        for k in 0..2 {
            let rep = verify_integrability_witness(&sys, k, 64, 1e-8).unwrap();
            prop_assert!(rep.passed, "{:?}", rep);
        }
    }

    #[test]
    fn resonance_integers_solve_the_resonance(p1 in 1i64..6, q1 in 1i64..6, p2 in 1i64..6, q2 in 1i64..6) {
        let (s1, s2) = (Rational { num: p1, den: q1 }, Rational { num: p2, den: q2 });
        match resonance_integers(s1, s2, 1000) {
            Some((a, b)) => {
                prop_assert_eq!(a as i64 * p1 * q2, b as i64 * p2 * q1);
                prop_assert!(a > 0 && b > 0);
            }
            None => prop_assert!(false, "positive slopes always resonate"),
        }
    }

    #[test]
    fn rational_frequencies_are_resonant(a in 1i64..20, b in 1i64..20) {
        let rep = check_nonresonance(&[a as f64, b as f64], 25, 1e-9).unwrap();
        prop_assert!(!rep.nonresonant);
        prop_assert!(rep.worst_value < 1e-12);
        let dot = rep.worst[0] * a + rep.worst[1] * b;
        prop_assert_eq!(dot, 0);
    }
}

#[test]
fn zero_amplitude_gives_back_the_integrable_system() {
    let gamma = [1.0, SQRT2];
    let q = build_plateau_q(&PlateauSpec::desk(&gamma, 2), &gamma).unwrap();
    let sys = build_h2(&q, &[0.0, 0.0], DESK_KAPPA).unwrap();
    for k in 0..2 {
        let pts = region_probes(&sys, k, 1.0, 48);
        for z in &pts {
            assert!((sys.h2.eval(z.as_slice()) - sys.h1.eval(z.as_slice())).abs() < 1e-15);
        }
        assert!(bracket_residual(&sys.h2, &sys.regions[k].witness, &pts) < 1e-12);
        assert!(bracket_residual(&sys.h2, &sys.h1, &pts) < 1e-12);
    }
}

#[test]
fn quadratic_irrational_frequencies_are_nonresonant() {
    for d in [2.0f64, 3.0, 5.0, 7.0] {
        let rep = check_nonresonance(&[1.0, d.sqrt()], 50, 1e-9).unwrap();
        assert!(rep.nonresonant, "sqrt {d}: {rep:?}");
    }
}

#[test]
fn perturbation_breaks_the_single_actions() {
    let sys = desk_system(&[1.0, SQRT2], 1, 1e-3).unwrap();
    let pts = region_probes(&sys, 0, 0.5, 48);
    let layout = sys.h2.layout();
    for i in 1..=2 {
        let action = HamiltonianExpr::parse_on(&format!("x{i}^2 + y{i}^2"), layout).unwrap();
        assert!(bracket_residual(&sys.h2, &action, &pts) > 1e-6);
    }
    // H1 has slope (1, 1) on this plateau, so it equals the witness there
    assert!(bracket_residual(&sys.h2, &sys.h1, &pts) < 1e-12);
}
