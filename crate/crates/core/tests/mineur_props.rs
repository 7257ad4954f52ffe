use std::f64::consts::PI;

use proptest::prelude::*;

use singular_orbits::mineur_actions::{
    action_profile, trace_cycle, verify_period_one, CycleOptions, PeriodOptions, PeriodStatus, PlanarSystem, PrimitiveTag,
};

/// Positive definite `a x² + 2c xy + b y²`.
fn quadratic() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.3f64..2.0, 0.3f64..2.0, -0.9f64..0.9).prop_map(|(a, b, t)| (a, b, t * (a * b).sqrt()))
}

fn text(a: f64, b: f64, c: f64, quartic: f64, cubic: f64) -> String {
    format!("{a}*x1^2 + {}*x1*y1 + {b}*y1^2 + {quartic}*(x1^2 + y1^2)^2 + {cubic}*x1^3", 2.0 * c)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn quadratic_actions_match_the_enclosed_area((a, b, c) in quadratic(), e in 0.05f64..0.8) {
        let sys = PlanarSystem::parse(&text(a, b, c, 0.0, 0.0), 4.0).unwrap();
        let cyc = trace_cycle(&sys, e, &CycleOptions::default()).unwrap();
        let area = PI * e / (a * b - c * c).sqrt();
        for tag in PrimitiveTag::ALL {
            prop_assert!((cyc.action(tag) - area).abs() < 1e-8 * area, "{:?}: {} vs {}", tag, cyc.action(tag), area);
        }
        prop_assert!(cyc.tag_spread() < 1e-8 * area);
        // period of a linear flow: 2π/ω with ω = 2√det
        let period = PI / (a * b - c * c).sqrt();
        prop_assert!((cyc.period - period).abs() < 1e-8 * period);
    }

    #[test]
    fn convex_profiles_are_increasing((a, b, c) in quadratic(), d in 0.0f64..0.5) {
        let sys = PlanarSystem::parse(&text(a, b, c, d, 0.0), 4.0).unwrap();
        let energies: Vec<f64> = (1..=6).map(|i| 0.1 * i as f64).collect();
        let prof = action_profile(&sys, &energies, &CycleOptions::default()).unwrap();
        prop_assert!(prof.monotone);
        prop_assert!(prof.actions.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn flipped_system_has_the_same_actions((a, b, c) in quadratic(), s in -1.0f64..1.0, e in 0.05f64..0.3) {
        // c₃² < 0.4 λ_min keeps `λ_min r² + c₃ r³ + 0.1 r⁴` positive, so
        // the level sets stay closed.
        let lambda_min = 0.5 * (a + b) - (0.25 * (a - b).powi(2) + c * c).sqrt();
        let cubic = s * (0.3 * lambda_min).sqrt();
        let sys = PlanarSystem::parse(&text(a, b, c, 0.1, cubic), 8.0).unwrap();
        let opts = CycleOptions::default();
        let p = trace_cycle(&sys, e, &opts).unwrap();
        let q = trace_cycle(&sys.flipped(), e, &opts).unwrap();
        for tag in PrimitiveTag::ALL {
            prop_assert!((p.action(tag) - q.action(tag)).abs() < 1e-12 * p.action(tag).abs().max(1.0));
        }
    }

    #[test]
    fn action_derivative_is_the_period((a, b, c) in quadratic(), d in 0.0f64..0.5) {
        let sys = PlanarSystem::parse(&text(a, b, c, d, 0.0), 4.0).unwrap();
        let prof = action_profile(&sys, &[0.2, 0.5], &CycleOptions::default()).unwrap();
        let rep = verify_period_one(&sys, &prof, &PeriodOptions::default()).unwrap();
        prop_assert_eq!(rep.status, PeriodStatus::Pass, "{:?}", rep);
        prop_assert!(rep.max_period_mismatch < 1e-6);
    }
}

#[test]
fn energy_outside_the_domain_is_rejected() {
    let sys = PlanarSystem::parse("x1^2 + y1^2", 1.0).unwrap();
    assert!(trace_cycle(&sys, 4.0, &CycleOptions::default()).is_err());
}
