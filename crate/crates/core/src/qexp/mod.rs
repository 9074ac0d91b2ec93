//! Quasi-exponential curves.
//!
//! A [`QuasiExponential`] is `c + Σ_k p_k(y) e^{-a_k y}` with real rates
//! `a_k` and real polynomials `p_k`. The family is closed under `d/dy`,
//! which is what makes finite-dimensional realizations possible.

mod closure;

pub use closure::{closure, sample_rank, ClosureBasis, SAMPLE_GRID};

use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use thiserror::Error;

/// Coefficients at or below this magnitude are dropped during canonicalization.
pub const COEFF_TOL: f64 = 1e-12;
/// Relative singular-value tolerance for linear-independence tests.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QexpError {
    /// A rate is too small for the curve to lie in `H_α`.
    #[error("rate {rate} is not above alpha/2 = {} (curve not in H_alpha)", alpha / 2.0)]
    Membership { rate: f64, alpha: f64 },
    #[error("spanning functions are linearly dependent (numerical rank {rank} < {expected})")]
    Dependence { rank: usize, expected: usize },
    #[error("at least one spanning function is required")]
    Empty,
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
}

pub(crate) fn same_rate(a: f64, b: f64) -> bool {
    (a - b).abs() <= COEFF_TOL * a.abs().max(b.abs()).max(1.0)
}

/// One `p(y) e^{-rate·y}` term; `coeffs[k]` multiplies `y^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub rate: f64,
    pub coeffs: Vec<f64>,
}

impl ExpTerm {
    pub fn new(rate: f64, coeffs: Vec<f64>) -> Self {
        Self { rate, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    fn poly(&self, y: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * y + c)
    }
}

/// `constant + Σ_terms p(y) e^{-a y}` in canonical form: rates strictly
/// increasing, no zero polynomials, nonzero leading coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuasiExponential {
    constant: f64,
    terms: Vec<ExpTerm>,
}

impl QuasiExponential {
    /// Builds a canonical quasi-exponential. Equal rates are merged, trailing
    /// coefficients below [`COEFF_TOL`] are trimmed and empty terms dropped.
    /// A rate-zero constant polynomial folds into the constant part.
    pub fn new(constant: f64, terms: Vec<ExpTerm>) -> Self {
        let mut terms: Vec<ExpTerm> = terms.into_iter().filter(|t| !t.coeffs.is_empty()).collect();
        terms.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap_or(core::cmp::Ordering::Equal));

        let mut merged: Vec<ExpTerm> = Vec::with_capacity(terms.len());
        for term in terms {
            match merged.last_mut() {
                Some(last) if same_rate(last.rate, term.rate) => {
                    if last.coeffs.len() < term.coeffs.len() {
                        last.coeffs.resize(term.coeffs.len(), 0.0);
                    }
                    for (dst, src) in last.coeffs.iter_mut().zip(term.coeffs.iter()) {
                        *dst += *src;
                    }
                }
                _ => merged.push(term),
            }
        }

        let mut constant = constant;
        let mut out = Vec::with_capacity(merged.len());
        for mut term in merged {
            while matches!(term.coeffs.last(), Some(c) if c.abs() <= COEFF_TOL) {
                term.coeffs.pop();
            }
            if term.coeffs.is_empty() {
                continue;
            }
            if term.rate == 0.0 && term.coeffs.len() == 1 {
                constant += term.coeffs[0];
                continue;
            }
            out.push(term);
        }
        if constant.abs() <= COEFF_TOL {
            constant = 0.0;
        }
        Self { constant, terms: out }
    }

    pub fn constant_fn(c: f64) -> Self {
        Self::new(c, Vec::new())
    }

    /// `scale · e^{-rate·y}`.
    pub fn exponential(rate: f64, scale: f64) -> Self {
        Self::new(0.0, vec![ExpTerm::new(rate, vec![scale])])
    }

    /// `p(y) e^{-rate·y}` with `p` given by ascending coefficients.
    pub fn poly_exp(rate: f64, coeffs: Vec<f64>) -> Self {
        Self::new(0.0, vec![ExpTerm::new(rate, coeffs)])
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    /// Point evaluation `h(y)`. Defined for every real `y`; curves are only
    /// meaningful for `y ≥ 0`.
    pub fn evaluate(&self, y: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|t| t.poly(y) * (-t.rate * y).exp())
                .sum::<f64>()
    }

    /// Exact derivative: `(p' − a p) e^{-a y}` per term, constant drops out.
    pub fn differentiate(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let m = t.coeffs.len();
                let coeffs = (0..m)
                    .map(|k| {
                        let from_poly = if k + 1 < m { (k + 1) as f64 * t.coeffs[k + 1] } else { 0.0 };
                        from_poly - t.rate * t.coeffs[k]
                    })
                    .collect();
                ExpTerm::new(t.rate, coeffs)
            })
            .collect();
        Self::new(0.0, terms)
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(self.constant + other.constant, terms)
    }

    /// `s · self`.
    pub fn scale(&self, s: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| ExpTerm::new(t.rate, t.coeffs.iter().map(|c| c * s).collect()))
            .collect();
        Self::new(self.constant * s, terms)
    }

    /// Checks `a > α/2` for every term.
    pub fn check_membership(&self, alpha: f64) -> Result<(), QexpError> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(QexpError::InvalidAlpha(alpha));
        }
        match self.terms.iter().find(|t| !(t.rate > alpha / 2.0)) {
            Some(t) => Err(QexpError::Membership { rate: t.rate, alpha }),
            None => Ok(()),
        }
    }

    /// `H_α` norm `(|h(0)|² + ∫₀^∞ e^{αy} |h'(y)|² dy)^{1/2}` in closed form,
    /// using `∫₀^∞ y^k e^{-βy} dy = k!/β^{k+1}`.
    pub fn h_alpha_norm(&self, alpha: f64) -> Result<f64, QexpError> {
        self.check_membership(alpha)?;
        let deriv = self.differentiate();
        let h0 = self.evaluate(0.0);

        let mut factorial = vec![1.0f64; 1];
        let mut integral = 0.0;
        for (s, ts) in deriv.terms.iter().enumerate() {
            for (t, tt) in deriv.terms.iter().enumerate().skip(s) {
                let beta = ts.rate + tt.rate - alpha;
                let mut cross = 0.0;
                for (j, cj) in ts.coeffs.iter().enumerate() {
                    for (k, ck) in tt.coeffs.iter().enumerate() {
                        let p = j + k;
                        while factorial.len() <= p {
                            let next = factorial[factorial.len() - 1] * factorial.len() as f64;
                            factorial.push(next);
                        }
                        cross += cj * ck * factorial[p] / beta.powi(p as i32 + 1);
                    }
                }
                integral += if s == t { cross } else { 2.0 * cross };
            }
        }
        Ok((h0 * h0 + integral.max(0.0)).sqrt())
    }

    /// Value as `y → ∞`: the constant when every rate is positive.
    pub fn limit_at_infinity(&self) -> Option<f64> {
        if self.terms.iter().all(|t| t.rate > 0.0) {
            Some(self.constant)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn evaluate_examples() {
        assert_eq!(QuasiExponential::exponential(1.0, 1.0).evaluate(0.0), 1.0);
        assert_eq!(QuasiExponential::poly_exp(0.7, vec![0.0, 1.0]).evaluate(0.0), 0.0);
        let h = QuasiExponential::new(1.0, vec![ExpTerm::new(2.0, vec![1.0])]);
        assert!((h.evaluate(LN_2) - 1.25).abs() < 1e-15);
    }

    #[test]
    fn differentiate_examples() {
        let a = 1.3;
        let d = QuasiExponential::exponential(a, 1.0).differentiate();
        assert_eq!(d, QuasiExponential::exponential(a, -a));
        let d = QuasiExponential::poly_exp(a, vec![0.0, 1.0]).differentiate();
        assert_eq!(d, QuasiExponential::poly_exp(a, vec![1.0, -a]));
        assert!(QuasiExponential::constant_fn(4.2).differentiate().is_zero());
    }

    #[test]
    fn canonical_form_merges_and_trims() {
        let h = QuasiExponential::new(
            0.0,
            vec![
                ExpTerm::new(2.0, vec![1.0, 0.0, 1e-14]),
                ExpTerm::new(1.0, vec![3.0]),
                ExpTerm::new(2.0, vec![-1.0]),
                ExpTerm::new(0.0, vec![5.0]),
            ],
        );
        assert_eq!(h.constant(), 5.0);
        assert_eq!(h.terms(), &[ExpTerm::new(1.0, vec![3.0])]);
    }

    #[test]
    fn norm_examples() {
        assert_eq!(QuasiExponential::constant_fn(-3.0).h_alpha_norm(1.0).unwrap(), 3.0);
        let (a, alpha) = (1.0, 0.5);
        let n = QuasiExponential::exponential(a, 1.0).h_alpha_norm(alpha).unwrap();
        assert!((n - (1.0 + a * a / (2.0 * a - alpha)).sqrt()).abs() < 1e-15);
        let err = QuasiExponential::exponential(0.25, 1.0).h_alpha_norm(0.5);
        assert!(matches!(err, Err(QexpError::Membership { .. })));
    }

    #[test]
    fn limit_at_infinity() {
        let h = QuasiExponential::new(2.0, vec![ExpTerm::new(1.0, vec![1.0])]);
        assert_eq!(h.limit_at_infinity(), Some(2.0));
        assert_eq!(QuasiExponential::exponential(-1.0, 1.0).limit_at_infinity(), None);
    }
}
