use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use singular_orbits::linalg;
use singular_orbits::symplectic_linear::{self as sl, ClassifyOptions, QuadraticHamiltonian, SymplecticSpace, WilliamsonType};

fn quadratic(n: usize, seed: u64) -> QuadraticHamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QuadraticHamiltonian::new(SymplecticSpace::new(n).unwrap(), linalg::random_symmetric(2 * n, 1.0, &mut rng)).unwrap()
}

fn bracket(a: &QuadraticHamiltonian, b: &QuadraticHamiltonian) -> QuadraticHamiltonian {
    sl::poisson_bracket(a, b).unwrap()
}

fn wtype() -> impl Strategy<Value = (usize, usize, usize)> {
    (0usize..=2, 0usize..=2, 0usize..=1).prop_filter("nonempty, n <= 4", |(e, h, f)| {
        let k = e + h + 2 * f;
        (1..=4).contains(&k)
    })
}

fn check_conjugated_model(e: usize, h: usize, f: usize, m: usize, s: u64) -> Result<(), TestCaseError> {
    let k = e + h + 2 * f;
    let mut rng = ChaCha8Rng::seed_from_u64(s);
    let conj = linalg::random_symplectic(k, 0.4, &mut rng);
    let model = sl::model_family(&WilliamsonType::fiber(e, h, f));
    let fam = model.conjugate(&conj);
    let opts = ClassifyOptions { seed: s, ..ClassifyOptions::default() };
    let c = sl::williamson_type(&fam, m, &opts).unwrap();
    prop_assert_eq!(c.wtype.triple(), (e, h, f));
    prop_assert_eq!(c.wtype.k_e + c.wtype.k_h + 2 * c.wtype.k_f, c.wtype.n - c.wtype.m);
    // spectrum symmetric under negation and conjugation
    prop_assert!(c.symmetry_defect < opts.eps);
    let basis = sl::normalizing_basis(&fam, &opts).unwrap();
    prop_assert!(linalg::symplectic_residual(&basis) < 1e-8 * (1.0 + basis.amax().powi(2)));
    prop_assert!(sl::model_residual(&fam, &basis, &model).unwrap() < opts.eps);
    Ok(())
}

// Used to stall the unbounded Schur iteration.
#[test]
fn elliptic_focus_seed_terminates() {
    check_conjugated_model(1, 0, 1, 1, 4443945322170132690).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(n in 1usize..=4, s in any::<u64>()) {
        let (a, b, c) = (quadratic(n, s), quadratic(n, s ^ 1), quadratic(n, s ^ 2));
        let anti = bracket(&a, &b).add(&bracket(&b, &a)).unwrap();
        prop_assert!(anti.matrix().amax() < 1e-10);
        let jac = bracket(&a, &bracket(&b, &c))
            .add(&bracket(&b, &bracket(&c, &a)))
            .unwrap()
            .add(&bracket(&c, &bracket(&a, &b)))
            .unwrap();
        prop_assert!(jac.matrix().amax() < 1e-10);
    }

    #[test]
    fn lin_is_a_homomorphism(n in 1usize..=4, s in any::<u64>()) {
        let (a, b) = (quadratic(n, s), quadratic(n, s.wrapping_add(7)));
        let (la, lb) = (sl::hamiltonian_matrix(&a), sl::hamiltonian_matrix(&b));
        let lhs = sl::hamiltonian_matrix(&bracket(&a, &b));
        prop_assert!((lhs - (&la * &lb - &lb * &la)).amax() < 1e-10);
    }

    #[test]
    fn conjugated_models_classify_and_normalize((e, h, f) in wtype(), m in 0usize..=2, s in any::<u64>()) {
        check_conjugated_model(e, h, f, m, s)?;
    }

    #[test]
    fn random_spectra_are_symmetric(n in 1usize..=4, s in any::<u64>()) {
        let b = sl::hamiltonian_matrix(&quadratic(n, s));
        let ev = sl::spectrum(&b).unwrap();
        let scale = b.norm();
        for l in &ev {
            let near = |t: num_complex::Complex64| ev.iter().map(|m| (m - t).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(near(-l) < 1e-8 * scale);
            prop_assert!(near(l.conj()) < 1e-8 * scale);
        }
    }
}
