use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::SimError;
use crate::fdr::Realization;
use crate::linalg;

/// Largest condition number of `Θ` accepted by [`extract_state`].
pub const MAX_CONDITION: f64 = 1e12;

/// Recovers `z` from `d` benchmark quotes `(y_i, f_t(y_i))` by solving
/// `Θ z = f − θ(t)` with `Θ_ij = v_j(y_i)`.
pub fn extract_state(r: &Realization, quotes: &[(f64, f64)], t: f64) -> Result<Vec<f64>, SimError> {
    let d = r.dim();
    if quotes.len() != d {
        return Err(SimError::Shape(alloc::format!("{} quotes for a {d}-dimensional state", quotes.len())));
    }
    let mut theta = DMatrix::zeros(d, d);
    let mut rhs = DVector::zeros(d);
    for (i, &(y, price)) in quotes.iter().enumerate() {
        for j in 0..d {
            theta[(i, j)] = r.basis().basis()[j].evaluate(y);
        }
        rhs[i] = price - r.theta(t, y);
    }
    let condition = linalg::condition_number(&theta);
    if !(condition <= MAX_CONDITION) {
        return Err(SimError::Singular { condition });
    }
    linalg::solve(&theta, &rhs)
        .map(|z| z.as_slice().to_vec())
        .ok_or(SimError::Singular { condition: f64::INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, Functional, VolatilitySpec};
    use crate::qexp::{ExpTerm, QuasiExponential};
    use crate::sim::reconstruct_curve;
    use alloc::vec;

    fn gs() -> Realization {
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)],
            &[0.3, 0.5],
        )
        .unwrap();
        let h0 = QuasiExponential::new(10.0, vec![ExpTerm::new(1.0, vec![-2.0])]);
        build_realization(&spec, &[0.2, 0.1], h0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn round_trip_and_duplicates() {
        let r = gs();
        let z = [0.8, -0.35];
        let ys = [0.5, 2.0];
        let snap = reconstruct_curve(&r, &z, 0.4, &ys);
        let quotes: Vec<(f64, f64)> = ys.iter().copied().zip(snap.values.iter().copied()).collect();
        let back = extract_state(&r, &quotes, 0.4).unwrap();
        assert!((back[0] - z[0]).abs() < 1e-10 && (back[1] - z[1]).abs() < 1e-10);
        let dup = [(1.0, 10.0), (1.0, 10.0)];
        assert!(matches!(extract_state(&r, &dup, 0.0), Err(SimError::Singular { .. })));
    }

    #[test]
    fn hump_benchmark_matrix() {
        let a = 1.0;
        let spec = VolatilitySpec::new(
            vec![QuasiExponential::poly_exp(a, vec![0.0, 1.0])],
            vec![vec![Functional::Constant(1.0)]],
            0.0,
            1.0,
        )
        .unwrap();
        let r = build_realization(&spec, &[0.2], QuasiExponential::constant_fn(5.0), 0.0, 1.0).unwrap();
        // Θ = [[e^{-a}, e^{-a}], [2e^{-2a}, e^{-2a}]] for y = (1, 2).
        let z = [0.3, -0.6];
        let (e1, e2) = ((-a).exp(), (-2.0 * a).exp());
        let quotes = [(1.0, 5.0 + e1 * z[0] + e1 * z[1]), (2.0, 5.0 + 2.0 * e2 * z[0] + e2 * z[1])];
        let back = extract_state(&r, &quotes, 0.0).unwrap();
        assert!((back[0] - z[0]).abs() < 1e-12 && (back[1] - z[1]).abs() < 1e-12);
    }
}
