use alloc::vec::Vec;

use crate::fdr::Realization;

/// Curve values at a set of maturities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSnapshot {
    pub t: f64,
    pub maturities: Vec<f64>,
    pub values: Vec<f64>,
}

impl CurveSnapshot {
    /// Largest absolute pointwise difference; the grids must match.
    pub fn max_abs_diff(&self, other: &CurveSnapshot) -> f64 {
        assert_eq!(self.maturities.len(), other.maturities.len(), "maturity grids differ");
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// `f_t(y) = h0(y + t0 + t) + Σ_i z_i v_i(y)` on the given maturities.
pub fn reconstruct_curve(r: &Realization, z: &[f64], t: f64, maturities: &[f64]) -> CurveSnapshot {
    let values = maturities.iter().map(|&y| r.curve_value(t, z, y)).collect();
    CurveSnapshot { t, maturities: maturities.to_vec(), values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, VolatilitySpec};
    use crate::qexp::{ExpTerm, QuasiExponential};
    use alloc::vec;

    #[test]
    fn gs_explicit_form() {
        let a = 1.0;
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(a, 1.0)],
            &[0.3, 0.5],
        )
        .unwrap();
        let h0 = QuasiExponential::new(10.0, vec![ExpTerm::new(1.0, vec![-2.0])]);
        let r = build_realization(&spec, &[0.2, 0.1], h0.clone(), 0.5, 1.0).unwrap();
        let ys = [0.0, 0.5, 3.0, 40.0];
        let (t, z) = (0.25, [0.7, -1.3]);
        let snap = reconstruct_curve(&r, &z, t, &ys);
        for (y, f) in ys.iter().zip(snap.values.iter()) {
            let expected = h0.evaluate(y + 0.5 + t) + z[0] + (-a * y).exp() * z[1];
            assert!((f - expected).abs() < 1e-14);
        }
        let flat = reconstruct_curve(&r, &[0.0, 0.0], t, &ys);
        assert_eq!(flat.values[2], h0.evaluate(3.75));
        let far = snap.values[3] - (h0.evaluate(40.75) + z[0]);
        assert!(far.abs() < 1e-16);
    }
}
