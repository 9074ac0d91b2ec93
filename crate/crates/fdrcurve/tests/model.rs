use fdrcurve::model::{FunctionalSpec, QexpSpec, TermSpec, BJORK_GOMBANI, GS_TWO_FACTOR};
use fdrcurve::{parse_model, MarketError, ModelSpecFile};
use proptest::prelude::*;

fn mat_a(spec: &ModelSpecFile) -> Vec<Vec<f64>> {
    let r = spec.realization().unwrap();
    let a = r.mat_a();
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

#[test]
fn fixtures_round_trip() {
    for text in [GS_TWO_FACTOR, BJORK_GOMBANI] {
        let m = parse_model(text).unwrap();
        let again = parse_model(&m.to_json()).unwrap();
        assert_eq!(m, again);
        assert_eq!(m.to_json(), again.to_json());
    }
}

#[test]
fn fixture_structure() {
    let gs = parse_model(GS_TWO_FACTOR).unwrap();
    assert_eq!(mat_a(&gs), vec![vec![0.0, 0.0], vec![0.0, -1.0]]);
    let bg = parse_model(BJORK_GOMBANI).unwrap();
    assert_eq!(mat_a(&bg), vec![vec![-1.0, 0.0], vec![1.0, -1.0]]);
}

#[test]
fn missing_field_is_parse_error() {
    let err = parse_model("{ \"alpha\": 1.0 }").unwrap_err();
    assert!(matches!(err, MarketError::Parse { .. }), "{err:?}");
}

fn gs_with(a: f64, s1: f64, s2: f64, psi: [f64; 2], h: f64) -> ModelSpecFile {
    let mut m = parse_model(GS_TWO_FACTOR).unwrap();
    m.volatility.spanning[1] = QexpSpec { constant: 0.0, terms: vec![TermSpec { rate: a, coeffs: vec![1.0] }] };
    m.volatility.phi[0][0] = FunctionalSpec::Constant { value: s1 };
    m.volatility.phi[1][1] = FunctionalSpec::Constant { value: s2 };
    m.volatility.bound = s1.max(s2);
    m.psi = psi.to_vec();
    m.h0.constant = h;
    m
}

proptest! {
    #[test]
    fn round_trip_identity(
        a in 0.6f64..3.0,
        s1 in 0.01f64..1.0,
        s2 in 0.01f64..1.0,
        p1 in -1.0f64..1.0,
        p2 in -1.0f64..1.0,
        h in -50.0f64..50.0,
    ) {
        let m = gs_with(a, s1, s2, [p1, p2], h);
        let text = m.to_json();
        let parsed = parse_model(&text).unwrap();
        prop_assert_eq!(&parsed, &m);
        prop_assert_eq!(parsed.to_json(), text);
        prop_assert_eq!(mat_a(&parsed), vec![vec![0.0, 0.0], vec![0.0, -a]]);
    }
}
