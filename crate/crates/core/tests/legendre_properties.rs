use nalgebra::{DMatrix, DVector};
use phs_lab::legendre::{conjugate_energy, involution_check, partial_legendre, verify_legendre_identities};
use phs_lab::models::*;
use phs_lab::TwoPortPhs;
use proptest::prelude::*;

fn quadratic() -> TwoPortPhs {
    TwoPortPhs::builder(
        1,
        1,
        1,
        |x1, x2| x1[0] * x1[0] + 0.5 * x1[0] * x2[0] + 0.75 * x2[0] * x2[0],
        DMatrix::identity(1, 1),
    )
    .gradient(|x1, x2| DVector::from_vec(vec![2.0 * x1[0] + 0.5 * x2[0], 0.5 * x1[0] + 1.5 * x2[0]]))
    .build()
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gas_identities(t in 250.0..500.0f64, vol in 5e-4..3e-3f64) {
        let p = GasPistonParams::default();
        let sys = make_gas_piston(p).unwrap();
        let e1 = DVector::from_element(1, t);
        let x2 = DVector::from_vec(vec![vol, 0.1]);
        let pt = partial_legendre(&sys, &e1, &x2, &DVector::from_element(1, 0.0)).unwrap();
        prop_assert!((pt.x1_solved[0] - p.entropy_at(t, vol)).abs() < 1e-8);
        let (rc, rp) = verify_legendre_identities(&sys, &pt).unwrap().relative();
        prop_assert!(rc < 1e-5 && rp < 1e-5, "{rc:e} {rp:e}");
    }

    #[test]
    fn actuator_identities(i in -3.0..3.0f64, q in 0.0..0.5f64, mom in -1.0..1.0f64) {
        let sys = make_actuator(ActuatorParams::default()).unwrap();
        let e1 = DVector::from_element(1, i);
        let x2 = DVector::from_vec(vec![q, mom]);
        let pt = partial_legendre(&sys, &e1, &x2, &DVector::from_element(1, 0.0)).unwrap();
        let (rc, rp) = verify_legendre_identities(&sys, &pt).unwrap().relative();
        prop_assert!(rc < 1e-5 && rp < 1e-5, "{rc:e} {rp:e}");
    }

    #[test]
    fn quadratic_involution(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64) {
        let sys = quadratic();
        let r = involution_check(&sys, &DVector::from_vec(vec![x1, x2])).unwrap();
        prop_assert!(r.max_error() < 1e-8, "{r:?}");
    }

    #[test]
    fn conjugate_energy_is_h_minus_product(x1 in -2.0..2.0f64, x2 in -2.0..2.0f64, e in -1.0..1.0f64) {
        let sys = quadratic();
        let x = DVector::from_vec(vec![x1, x2]);
        let direct = sys.hamiltonian(&x) - e * x1;
        prop_assert_eq!(conjugate_energy(&sys, &DVector::from_element(1, e), &x), direct);
    }
}

#[test]
fn actuator_involution_across_states() {
    let sys = make_actuator(ActuatorParams::default()).unwrap();
    for (phi, q) in [(0.3, 0.0), (-1.2, 0.2), (2.0, 0.05)] {
        let r = involution_check(&sys, &DVector::from_vec(vec![phi, q, 0.1])).unwrap();
        assert!(r.max_error() < 1e-8, "{r:?}");
    }
}
