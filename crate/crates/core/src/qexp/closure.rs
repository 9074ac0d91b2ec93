//! Derivative closure of a family of quasi-exponentials.
//!
//! The smallest `d/dy`-invariant space containing canonical spanning
//! functions is the full monomial space
//! `{1} ∪ {y^k e^{-a y} : k ≤ m_a}` over the rates `a` they use (`m_a` the
//! largest degree attached to `a`; the constant only when some spanning
//! function carries one). The closure keeps the user functions first and
//! completes them with monomials in a fixed order: constant, then rates
//! ascending, degrees descending.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use super::{same_rate, ExpTerm, QexpError, QuasiExponential, RANK_TOL};
use crate::linalg;

/// Sample grid `0, 0.25, …, 10` used for numerical independence checks.
pub const SAMPLE_GRID: (f64, f64, usize) = (0.0, 0.25, 41);

#[derive(Debug, Clone, Copy, PartialEq)]
enum Monomial {
    Constant,
    Term { rate: f64, power: usize },
}

impl Monomial {
    fn to_function(self) -> QuasiExponential {
        match self {
            Monomial::Constant => QuasiExponential::constant_fn(1.0),
            Monomial::Term { rate, power } => {
                let mut coeffs = alloc::vec![0.0; power + 1];
                coeffs[power] = 1.0;
                QuasiExponential::new(0.0, alloc::vec![ExpTerm::new(rate, coeffs)])
            }
        }
    }
}

/// Coordinates of quasi-exponentials over a monomial basis.
struct MonomialSpace {
    keys: Vec<Monomial>,
}

impl MonomialSpace {
    fn spanned_by(functions: &[QuasiExponential]) -> Self {
        let mut rates: Vec<(f64, usize)> = Vec::new();
        let mut has_constant = false;
        for h in functions {
            has_constant |= h.constant() != 0.0;
            for t in h.terms() {
                match rates.iter_mut().find(|(r, _)| same_rate(*r, t.rate)) {
                    Some(entry) => entry.1 = entry.1.max(t.degree()),
                    None => rates.push((t.rate, t.degree())),
                }
            }
        }
        rates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
        let mut keys = Vec::new();
        if has_constant {
            keys.push(Monomial::Constant);
        }
        for (rate, max_degree) in rates {
            for power in (0..=max_degree).rev() {
                keys.push(Monomial::Term { rate, power });
            }
        }
        Self { keys }
    }

    fn dim(&self) -> usize {
        self.keys.len()
    }

    fn coordinates(&self, h: &QuasiExponential) -> DVector<f64> {
        let mut v = DVector::zeros(self.keys.len());
        for (i, key) in self.keys.iter().enumerate() {
            v[i] = match *key {
                Monomial::Constant => h.constant(),
                Monomial::Term { rate, power } => h
                    .terms()
                    .iter()
                    .find(|t| same_rate(t.rate, rate))
                    .and_then(|t| t.coeffs.get(power).copied())
                    .unwrap_or(0.0),
            };
        }
        v
    }

    fn matrix(&self, functions: &[QuasiExponential]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), functions.len());
        for (j, h) in functions.iter().enumerate() {
            m.set_column(j, &self.coordinates(h));
        }
        m
    }
}

/// Rank of the matrix `[h_j(y_i)]` sampled on [`SAMPLE_GRID`].
pub fn sample_rank(functions: &[QuasiExponential]) -> usize {
    let (start, step, count) = SAMPLE_GRID;
    let mut m = DMatrix::zeros(count, functions.len());
    for i in 0..count {
        let y = start + step * i as f64;
        for (j, h) in functions.iter().enumerate() {
            m[(i, j)] = h.evaluate(y);
        }
    }
    linalg::numerical_rank(&m, RANK_TOL)
}

/// Basis `v_1..v_d` of the derivative closure together with the matrix `A`
/// satisfying `v_k' = Σ_j v_j A[j][k]` (row vector `v' = v·A`).
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureBasis {
    basis: Vec<QuasiExponential>,
    mat_a: DMatrix<f64>,
    origin_count: usize,
}

impl ClosureBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[QuasiExponential] {
        &self.basis
    }

    /// Matrix `A` with `v_k' = Σ_j v_j a_{jk}`.
    pub fn mat_a(&self) -> &DMatrix<f64> {
        &self.mat_a
    }

    /// Number of user-supplied spanning functions (they come first).
    pub fn origin_count(&self) -> usize {
        self.origin_count
    }

    /// Writes `v_i(y)` for every basis element into `out`.
    pub fn evaluate_into(&self, y: f64, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(self.basis.iter()) {
            *o = v.evaluate(y);
        }
    }

    /// Largest `|v_k'(y) − Σ_j v_j(y) a_{jk}|` over the given maturities,
    /// relative to `1 + max |v|`.
    pub fn closure_residual(&self, maturities: &[f64]) -> f64 {
        let derivs: Vec<QuasiExponential> = self.basis.iter().map(|v| v.differentiate()).collect();
        let d = self.dim();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut vals = alloc::vec![0.0; d];
        for &y in maturities {
            self.evaluate_into(y, &mut vals);
            scale = vals.iter().fold(scale, |m, v| m.max(v.abs()));
            for k in 0..d {
                let combo: f64 = (0..d).map(|j| vals[j] * self.mat_a[(j, k)]).sum();
                worst = worst.max((derivs[k].evaluate(y) - combo).abs());
            }
        }
        worst / (1.0 + scale)
    }

    /// Assembles a basis without recomputing the closure. Intended for
    /// perturbation studies; the closure identity is not enforced.
    pub fn from_parts(basis: Vec<QuasiExponential>, mat_a: DMatrix<f64>, origin_count: usize) -> Self {
        assert_eq!(mat_a.shape(), (basis.len(), basis.len()));
        assert!(origin_count <= basis.len());
        Self { basis, mat_a, origin_count }
    }
}

/// Completes linearly independent spanning functions to a basis of their
/// derivative closure and computes the companion matrix `A`.
pub fn closure(spanning: &[QuasiExponential], alpha: f64) -> Result<ClosureBasis, QexpError> {
    if spanning.is_empty() {
        return Err(QexpError::Empty);
    }
    for h in spanning {
        h.check_membership(alpha)?;
    }

    let space = MonomialSpace::spanned_by(spanning);
    let p = spanning.len();
    let coeff_rank = linalg::numerical_rank(&space.matrix(spanning), RANK_TOL);
    if coeff_rank < p {
        return Err(QexpError::Dependence { rank: coeff_rank, expected: p });
    }
    let grid_rank = sample_rank(spanning);
    if grid_rank < p {
        return Err(QexpError::Dependence { rank: grid_rank, expected: p });
    }

    let mut basis: Vec<QuasiExponential> = spanning.to_vec();
    let mut rank = p;
    for key in &space.keys {
        if rank == space.dim() {
            break;
        }
        let candidate = key.to_function();
        let mut trial = basis.clone();
        trial.push(candidate.clone());
        if linalg::numerical_rank(&space.matrix(&trial), RANK_TOL) > rank {
            basis = trial;
            rank += 1;
        }
    }

    let coords = space.matrix(&basis);
    let derivs: Vec<QuasiExponential> = basis.iter().map(|v| v.differentiate()).collect();
    let dcoords = space.matrix(&derivs);
    let mat_a = coords
        .lu()
        .solve(&dcoords)
        .ok_or(QexpError::Dependence { rank, expected: basis.len() })?;

    Ok(ClosureBasis { basis, mat_a, origin_count: p })
}
