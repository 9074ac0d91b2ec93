mod common;

use common::{gs, hump, A, PSI, SIGMA};
use fdrcurve_core::{
    build_realization, check_invariance, validate_spec, ExpTerm, FdrError, Functional, InvarianceGrid, PointShape,
    QuasiExponential, Realization, VolatilitySpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn state_dependent() -> Realization {
    let f = Functional::BoundedOfPoint {
        maturity: 1.0,
        shape: PointShape::Logistic { scale: 0.4, steepness: 1.0, center: 5.0 },
        bound: 0.4,
        lipschitz: 0.2,
    };
    let spec = VolatilitySpec::new(
        vec![QuasiExponential::poly_exp(1.5, vec![0.0, 1.0])],
        vec![vec![f, Functional::Constant(0.1)]],
        0.2,
        0.4,
    )
    .unwrap();
    let h0 = QuasiExponential::new(5.0, vec![ExpTerm::new(1.0, vec![1.0])]);
    build_realization(&spec, &[0.3, -0.2], h0, 0.25, 1.0).unwrap()
}

#[test]
fn energy_model_structure() {
    let r = gs();
    assert_eq!(r.mat_a(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -A]));
    assert_eq!(r.kappa(0.3, &[1.0, -2.0]), DMatrix::from_row_slice(2, 2, &[SIGMA[0], 0.0, 0.0, SIGMA[1]]));
    let premium = r.risk_premium(0.0, &[0.0, 0.0]);
    assert_eq!(premium.as_slice(), &[SIGMA[0] * PSI[0], SIGMA[1] * PSI[1]]);
}

#[test]
fn hump_structure() {
    let r = hump();
    assert_eq!(r.mat_a(), &DMatrix::from_row_slice(2, 2, &[-A, 0.0, 1.0, -A]));
    let k = r.kappa(0.0, &[0.0, 0.0]);
    assert_eq!(k.as_slice(), DMatrix::from_row_slice(2, 1, &[0.4, 0.0]).as_slice());
}

#[test]
fn invariance_on_fixtures() {
    for r in [gs(), hump(), state_dependent()] {
        let grid = InvarianceGrid::standard(r.dim(), 10, 10, 50, 2.0, 2.0, 10.0);
        let report = check_invariance(&r, &grid);
        assert_eq!(report.points, 10 * 10 * 50);
        assert!(report.max() <= 1e-8, "{report:?}");
    }
}

#[test]
fn invalid_specs_are_rejected() {
    // Unbounded volatility of the curve level.
    let unbounded = VolatilitySpec::new(
        vec![QuasiExponential::exponential(1.0, 1.0)],
        vec![vec![Functional::BoundedOfPoint {
            maturity: 0.5,
            shape: PointShape::IdentityClipped { cap: None },
            bound: 10.0,
            lipschitz: 1.0,
        }]],
        1.0,
        10.0,
    )
    .unwrap();
    assert!(matches!(validate_spec(&unbounded, 1.0), Err(FdrError::Spec { .. })));

    let slow = VolatilitySpec::diagonal(vec![QuasiExponential::exponential(0.2, 1.0)], &[0.3]).unwrap();
    assert!(matches!(validate_spec(&slow, 1.0), Err(FdrError::Spec { .. })));

    let dependent = VolatilitySpec::diagonal(
        vec![QuasiExponential::exponential(1.0, 1.0), QuasiExponential::exponential(1.0, 2.0)],
        &[0.3, 0.3],
    )
    .unwrap();
    assert!(matches!(validate_spec(&dependent, 1.0), Err(FdrError::Spec { .. })));
}

fn state() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (0.0f64..3.0, prop::collection::vec(-3.0f64..3.0, 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_beyond_spanning_functions_vanish((t, z) in state()) {
        for r in [hump(), state_dependent()] {
            let k = r.kappa(t, &z);
            for i in r.p()..r.dim() {
                prop_assert!(k.row(i).iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn gaussian_drift_is_affine((t, z1) in state(), z2 in prop::collection::vec(-3.0f64..3.0, 2), lambda in 0.0f64..1.0) {
        for r in [gs(), hump()] {
            let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let lhs = r.beta(t, &mix);
            let rhs = r.beta(t, &z1) * lambda + r.beta(t, &z2) * (1.0 - lambda);
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }
    }

    #[test]
    fn curve_is_affine_in_state((t, z) in state(), y in 0.0f64..10.0) {
        for r in [gs(), hump(), state_dependent()] {
            let mut expected = r.theta(t, y);
            let mut v = vec![0.0; r.dim()];
            r.basis().evaluate_into(y, &mut v);
            expected += z.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!((r.curve_value(t, &z, y) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }
}
