//! Volatility specifications, realizations and invariance diagnostics.
//!
//! The volatility of the curve is `σ_j(h) = Σ_{i≤p} v_i Φ_ij(h)` where the
//! `v_i` are quasi-exponential spanning functions and `Φ_ij` are bounded,
//! Lipschitz functionals. Every functional here depends on `h` through at
//! most one point value, so coefficient maps are closed-form in `(t, z)`.

mod realization;
mod validate;

pub use realization::{
    build_realization, check_invariance, check_invariance_with, CoefficientField, InvarianceGrid,
    InvarianceReport, LeafCurve, Realization,
};
pub use validate::{validate_spec, CheckResult, ValidationReport};

use alloc::string::String;
use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

use crate::qexp::{QexpError, QuasiExponential};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdrError {
    /// The first assumption that failed, with the full report attached.
    #[error("volatility spec violates the {assumption} assumption")]
    Spec { assumption: &'static str, report: ValidationReport },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Qexp(#[from] QexpError),
}

/// Anything that can be evaluated at a maturity.
pub trait Curve {
    fn value(&self, y: f64) -> f64;
}

impl Curve for QuasiExponential {
    fn value(&self, y: f64) -> f64 {
        self.evaluate(y)
    }
}

/// Scalar map applied to a point value `h(y*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointShape {
    /// `x`, clipped to `[-cap, cap]` when a cap is given.
    IdentityClipped { cap: Option<f64> },
    /// `scale / (1 + exp(-steepness (x - center)))`.
    Logistic { scale: f64, steepness: f64, center: f64 },
    /// `slope x + intercept`, clipped to `[-cap, cap]`.
    AffineClipped { slope: f64, intercept: f64, cap: f64 },
}

impl PointShape {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            PointShape::IdentityClipped { cap: None } => x,
            PointShape::IdentityClipped { cap: Some(c) } => x.max(-c).min(c),
            PointShape::Logistic { scale, steepness, center } => {
                scale / (1.0 + (-steepness * (x - center)).exp())
            }
            PointShape::AffineClipped { slope, intercept, cap } => {
                (slope * x + intercept).max(-cap).min(cap)
            }
        }
    }

    /// Point values where the map bends; used to aim Lipschitz probes.
    pub(crate) fn knots(&self) -> Vec<f64> {
        match *self {
            PointShape::IdentityClipped { cap: None } => Vec::new(),
            PointShape::IdentityClipped { cap: Some(c) } => alloc::vec![-c, c],
            PointShape::Logistic { center, .. } => alloc::vec![center],
            PointShape::AffineClipped { slope, intercept, cap } if slope != 0.0 => {
                alloc::vec![(-cap - intercept) / slope, (cap - intercept) / slope]
            }
            PointShape::AffineClipped { .. } => Vec::new(),
        }
    }
}

/// Entry `Φ_ij` of the volatility array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    Constant(f64),
    /// `shape(h(maturity))` with declared bound `M` and Lipschitz constant `L`.
    BoundedOfPoint { maturity: f64, shape: PointShape, bound: f64, lipschitz: f64 },
}

impl Functional {
    pub fn apply<C: Curve + ?Sized>(&self, h: &C) -> f64 {
        match self {
            Functional::Constant(v) => *v,
            Functional::BoundedOfPoint { maturity, shape, .. } => shape.apply(h.value(*maturity)),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Functional::Constant(_))
    }

    /// Maturity the functional reads, if any.
    pub fn maturity(&self) -> Option<f64> {
        match self {
            Functional::Constant(_) => None,
            Functional::BoundedOfPoint { maturity, .. } => Some(*maturity),
        }
    }
}

/// `p` spanning functions, a `p × n` array of functionals, and the declared
/// global constants `M` (bound) and `L` (Lipschitz) of the volatility.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilitySpec {
    pub spanning: Vec<QuasiExponential>,
    pub phi: Vec<Vec<Functional>>,
    pub lipschitz: f64,
    pub bound: f64,
}

impl VolatilitySpec {
    pub fn new(
        spanning: Vec<QuasiExponential>,
        phi: Vec<Vec<Functional>>,
        lipschitz: f64,
        bound: f64,
    ) -> Result<Self, FdrError> {
        if spanning.len() != phi.len() {
            return Err(FdrError::Shape(alloc::format!(
                "{} spanning functions but {} rows of phi",
                spanning.len(),
                phi.len()
            )));
        }
        let n = phi.first().map_or(0, |r| r.len());
        if n == 0 || phi.iter().any(|r| r.len() != n) {
            return Err(FdrError::Shape("phi rows must be nonempty and of equal length".into()));
        }
        Ok(Self { spanning, phi, lipschitz, bound })
    }

    /// Diagonal constant volatility `Φ_ii = σ_i`.
    pub fn diagonal(spanning: Vec<QuasiExponential>, sigma: &[f64]) -> Result<Self, FdrError> {
        let p = sigma.len();
        let phi = (0..p)
            .map(|i| (0..p).map(|j| Functional::Constant(if i == j { sigma[i] } else { 0.0 })).collect())
            .collect();
        let m = sigma.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        Self::new(spanning, phi, 0.0, m)
    }

    pub fn p(&self) -> usize {
        self.spanning.len()
    }

    pub fn n(&self) -> usize {
        self.phi.first().map_or(0, |r| r.len())
    }

    pub fn is_constant(&self) -> bool {
        self.phi.iter().flatten().all(Functional::is_constant)
    }

    /// `σ_j(h)(y) = Σ_i v_i(y) Φ_ij(h)`.
    pub fn sigma_at<C: Curve + ?Sized>(&self, h: &C, j: usize, y: f64) -> f64 {
        self.spanning
            .iter()
            .zip(self.phi.iter())
            .map(|(v, row)| v.evaluate(y) * row[j].apply(h))
            .sum()
    }
}

/// Eigenvalues of a trace-class covariance, nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CovSpectrum {
    eigenvalues: Vec<f64>,
}

impl CovSpectrum {
    /// Sorts into nonincreasing order; rejects negative or non-finite values.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self, FdrError> {
        if eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(FdrError::Shape("eigenvalues must be finite and nonnegative".into()));
        }
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Smallest `n` whose discarded tail carries at most `eps` of the trace.
    pub fn truncate(&self, eps: f64) -> usize {
        let total = self.trace();
        // Relative slack so that exact decimal splits such as 0.9/0.1 are kept.
        let budget = eps * total + 4.0 * f64::EPSILON * total;
        let mut tail = total;
        for (n, l) in self.eigenvalues.iter().enumerate() {
            if tail <= budget {
                return n;
            }
            tail -= l;
        }
        self.eigenvalues.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn truncation_examples() {
        assert_eq!(CovSpectrum::new(vec![1.0, 0.0, 0.0]).unwrap().truncate(0.01), 1);
        assert_eq!(CovSpectrum::new(vec![0.7, 0.2, 0.05, 0.05]).unwrap().truncate(0.1), 2);
        assert_eq!(CovSpectrum::new(vec![0.5, 0.5]).unwrap().truncate(0.6), 1);
        assert_eq!(CovSpectrum::new(vec![0.5, 0.5]).unwrap().truncate(0.4), 2);
        assert!(CovSpectrum::new(vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn shapes() {
        let s = PointShape::IdentityClipped { cap: Some(2.0) };
        assert_eq!(s.apply(5.0), 2.0);
        assert_eq!(s.apply(-1.5), -1.5);
        let l = PointShape::Logistic { scale: 2.0, steepness: 1.0, center: 3.0 };
        assert_eq!(l.apply(3.0), 1.0);
        let a = PointShape::AffineClipped { slope: 0.1, intercept: 0.2, cap: 0.5 };
        assert!((a.apply(1.0) - 0.3).abs() < 1e-15);
        assert_eq!(a.apply(100.0), 0.5);
    }
}
