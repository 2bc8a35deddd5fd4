use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use torbit_core::cone::{ConeSpec, HomologyClass};
use torbit_core::dynamics::{flow, MechanicalSystem, Scheme, SigmaProfile};
use torbit_core::model::{Blocks, ModelParams};

fn blocks() -> &'static Blocks {
    static B: OnceLock<Blocks> = OnceLock::new();
    B.get_or_init(|| Blocks::new(ModelParams::default()).unwrap())
}

fn condition(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    sv.max() / sv.min()
}

prop_compose! {
    fn generator_matrix(n: usize)(entries in prop::collection::vec(-2.0f64..2.0, n * n)) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, &entries)
    }
}

fn cone_from(a: DMatrix<f64>) -> Option<ConeSpec> {
    if !(condition(&a) < 1e3) {
        return None;
    }
    let n = a.nrows();
    let p_star = &a * DVector::from_element(n, 1.0);
    ConeSpec::new(a, p_star, 1.0).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn dual_membership_matches_dual_generators(
        a in generator_matrix(3),
        alpha in prop::collection::vec(-4i64..=4, 3),
    ) {
        let Some(cone) = cone_from(a) else { return Ok(()) };
        prop_assume!(alpha.iter().any(|&v| v != 0));
        let alpha = HomologyClass::new(alpha).unwrap();
        let dual = cone_from(cone.dual_cone_basis());
        prop_assume!(dual.is_some());
        let dual = dual.unwrap();
        let eye = cone.a().transpose() * cone.dual_cone_basis();
        prop_assert!((eye - DMatrix::identity(3, 3)).amax() < 1e-10);
        prop_assert_eq!(cone.in_dual_cone(&alpha), dual.contains(&alpha.as_real()));
    }

    #[test]
    fn normalised_generators_span_the_same_cone(
        a in generator_matrix(2),
        x in prop::collection::vec(-3.0f64..3.0, 2),
        weights in prop::collection::vec(0.1f64..3.0, 2),
    ) {
        prop_assume!(condition(&a) < 1e3);
        let p_star = &a * DVector::from_vec(weights);
        let cone = ConeSpec::new(a.clone(), p_star.clone(), 1.0).unwrap();
        let ones = cone.to_y(&p_star);
        prop_assert!((ones - DVector::from_element(2, 1.0)).amax() < 1e-12);
        let normed = ConeSpec::new(cone.a_norm().clone(), p_star, 1.0).unwrap();
        let x = DVector::from_vec(x);
        prop_assert_eq!(cone.contains(&x), normed.contains(&x));
    }

    #[test]
    fn no_line_in_the_cone(a in generator_matrix(3), x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let Some(cone) = cone_from(a) else { return Ok(()) };
        let x = DVector::from_vec(x);
        prop_assert!(!(cone.contains(&x) && cone.contains(&-&x)));
    }

    #[test]
    fn blocks_stay_in_the_unit_interval(x in -1.0f64..2.0, s in 1.0f64..6.0, r in 0.0f64..1.5) {
        let b = blocks();
        for v in [b.u(x).value, b.u_s(s, x).value, b.v_s(s, x).value, b.w_s(s, x).value] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(b.w_s(s, r).d1 <= 0.0);
    }

    #[test]
    fn shifted_u_is_v(y in prop::collection::vec(-0.3f64..=0.0, 2), s in prop::sample::select(vec![1.0, 2.0, 5.0])) {
        let b = blocks();
        let y = DVector::from_vec(y);
        let shifted = y.map(|v| v + b.params.d_s(s));
        prop_assert!((b.big_u(s, &shifted).value - b.big_v(s, &y).value).abs() < 1e-10);
    }

    #[test]
    fn sigma_is_a_step(r in -1.0f64..2.0) {
        let v = SigmaProfile::sigma(r);
        prop_assert!((0.0..=1.0).contains(&v));
        if r <= 0.0 { prop_assert_eq!(v, 0.0); }
        if r >= 1.0 { prop_assert_eq!(v, 1.0); }
        if r > 0.0 && r < 1.0 { prop_assert!(SigmaProfile::sigma_d1(r) > 0.0); }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flows_preserve_phase_volume(z in prop::collection::vec(-1.0f64..1.0, 4), amp in 0.0f64..0.3) {
        let sys = MechanicalSystem::arnold(amp);
        let fl = flow(&sys, &DVector::from_vec(z), 0.5, 1e-2, Scheme::Midpoint, true).unwrap();
        prop_assert!((fl.tangent.unwrap().determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn winding_is_additive(z in prop::collection::vec(-1.0f64..1.0, 4), t1 in 0.1f64..1.0, t2 in 0.1f64..1.0) {
        let sys = MechanicalSystem::arnold(0.05);
        let z0 = DVector::from_vec(z);
        let step = 1e-3;
        let a = flow(&sys, &z0, t1, step, Scheme::Midpoint4, false).unwrap().state;
        let b = flow(&sys, &a, t2, step, Scheme::Midpoint4, false).unwrap().state;
        let total = (&b - &z0).rows(2, 2).into_owned();
        let parts = (&a - &z0).rows(2, 2) + (&b - &a).rows(2, 2);
        prop_assert!((total - parts).amax() < 1e-14);
    }
}
