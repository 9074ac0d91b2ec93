//! Small dense linear-algebra helpers layered on `nalgebra`.
//!
//! All matrices handled here are tiny (the realization dimension is a
//! handful), so clarity wins over blocking or in-place tricks.

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

/// Singular values in nonincreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut s = m.clone().svd(false, false).singular_values;
    s.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    s
}

/// Numerical rank: singular values above `rel_tol * σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.iter().next() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > rel_tol * smax).count(),
        _ => 0,
    }
}

/// 2-norm condition number `σ_max / σ_min`; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if s.is_empty() {
        return f64::INFINITY;
    }
    let smax = s[0];
    let smin = s[s.len() - 1];
    if smin <= 0.0 || !smin.is_finite() {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Moore–Penrose pseudo-inverse with singular values below
/// `rel_tol * σ_max` treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let smax = singular_values(m).iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(c, r);
    }
    m.clone()
        .pseudo_inverse(rel_tol * smax)
        .unwrap_or_else(|_| DMatrix::zeros(c, r))
}

/// Factor `L` with `L Lᵀ = Σ` for a symmetric positive semidefinite `Σ`.
///
/// Uses the symmetric eigendecomposition so rank-deficient covariances
/// (degenerate noise directions) are handled without pivoting.
pub fn psd_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut l = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..n {
            l[(i, j)] *= s;
        }
    }
    l
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé(6,6)
/// approximant. The scaled matrix has 1-norm at most 1/2, which keeps the
/// approximant error below double-precision round-off.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const ORDER: usize = 6;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil().max(0.0) as u32;
    }
    let scaled = a / 2f64.powi(squarings as i32);

    let ident = DMatrix::<f64>::identity(n, n);
    let mut numer = ident.clone();
    let mut denom = ident.clone();
    let mut power = ident;
    let mut coeff = 1.0;
    for k in 1..=ORDER {
        coeff *= (ORDER - k + 1) as f64 / (k * (2 * ORDER - k + 1)) as f64;
        power = &power * &scaled;
        let term = &power * coeff;
        numer += &term;
        if k % 2 == 0 {
            denom += &term;
        } else {
            denom -= &term;
        }
    }
    let mut out = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for ‖A‖ ≤ 1/2");
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

/// Solves `m x = rhs` by LU; `None` when `m` is singular.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    m.clone().lu().solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_diagonal_is_elementwise() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 3.0]);
        let e = expm(&a);
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - 3.0f64.exp()).abs() < 1e-12 * 3.0f64.exp());
        assert!(e[(0, 1)].abs() < 1e-15 && e[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn expm_of_jordan_block() {
        // exp([[-a,0],[1,-a]] t) = e^{-at} [[1,0],[t,1]]
        let (a, t) = (0.7, 2.5);
        let m = DMatrix::from_row_slice(2, 2, &[-a * t, 0.0, t, -a * t]);
        let e = expm(&m);
        let s = (-a * t).exp();
        assert!((e[(0, 0)] - s).abs() < 1e-14);
        assert!((e[(1, 0)] - t * s).abs() < 1e-14);
        assert!(e[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn expm_rotation() {
        let th = 4.0;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]);
        let e = expm(&m);
        assert!((e[(0, 0)] - th.cos()).abs() < 1e-13);
        assert!((e[(1, 0)] - th.sin()).abs() < 1e-13);
    }

    #[test]
    fn rank_and_condition() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&m, 1e-9), 1);
        assert!(condition_number(&m) > 1e15);
        assert_eq!(numerical_rank(&DMatrix::<f64>::identity(3, 3), 1e-9), 3);
    }

    #[test]
    fn psd_factor_reconstructs() {
        let s = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let l = psd_factor(&s);
        let back = &l * l.transpose();
        assert!((back - s).abs().max() < 1e-12);
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = pseudo_inverse(&m, 1e-12);
        assert_eq!(p, m);
    }
}
