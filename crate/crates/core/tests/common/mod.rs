#![allow(dead_code)]

use fdrcurve_core::{build_realization, ExpTerm, QuasiExponential, Realization, VolatilitySpec};

pub const A: f64 = 1.0;
pub const SIGMA: [f64; 2] = [0.3, 0.5];
pub const PSI: [f64; 2] = [0.2, 0.1];
pub const RATE: f64 = 0.02;

/// Two-factor energy model: level plus mean-reverting short end.
pub fn gs() -> Realization {
    gs_with(PSI)
}

pub fn gs_with(psi: [f64; 2]) -> Realization {
    let spec = VolatilitySpec::diagonal(
        vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(A, 1.0)],
        &SIGMA,
    )
    .unwrap();
    let h0 = QuasiExponential::new(40.0, vec![ExpTerm::new(A, vec![-5.0])]);
    build_realization(&spec, &psi, h0, 0.0, 1.0).unwrap()
}

/// One volatility `σ y e^{−ay}`, realized in two dimensions.
pub fn hump() -> Realization {
    let spec = VolatilitySpec::diagonal(vec![QuasiExponential::poly_exp(A, vec![0.0, 1.0])], &[0.4]).unwrap();
    let h0 = QuasiExponential::new(30.0, vec![ExpTerm::new(A, vec![2.0, -1.0])]);
    build_realization(&spec, &[0.25], h0, 0.0, 1.0).unwrap()
}
