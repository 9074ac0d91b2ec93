use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{validate_spec, Curve, FdrError, VolatilitySpec};
use crate::qexp::{closure, ClosureBasis, QuasiExponential};

/// Finite-dimensional realization `f_t = θ(t) + Σ_i Z^i_t v_i` with
/// `θ(t)(y) = h0(y + t0 + t)`.
#[derive(Debug, Clone)]
pub struct Realization {
    basis: ClosureBasis,
    h0: QuasiExponential,
    h0_prime: QuasiExponential,
    t0: f64,
    psi: Vec<f64>,
    spec: VolatilitySpec,
    alpha: f64,
    kappa_const: Option<DMatrix<f64>>,
}

/// Point on the leaf through `θ(t)` with coordinates `z`.
pub struct LeafCurve<'a> {
    pub realization: &'a Realization,
    pub t: f64,
    pub z: &'a [f64],
}

impl Curve for LeafCurve<'_> {
    fn value(&self, y: f64) -> f64 {
        self.realization.curve_value(self.t, self.z, y)
    }
}

impl Realization {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Number of Brownian drivers.
    pub fn n(&self) -> usize {
        self.spec.n()
    }

    /// Number of user spanning functions.
    pub fn p(&self) -> usize {
        self.spec.p()
    }

    pub fn basis(&self) -> &ClosureBasis {
        &self.basis
    }

    pub fn mat_a(&self) -> &DMatrix<f64> {
        self.basis.mat_a()
    }

    pub fn h0(&self) -> &QuasiExponential {
        &self.h0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn spec(&self) -> &VolatilitySpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `θ(t)(y) = h0(y + t0 + t)`.
    pub fn theta(&self, t: f64, y: f64) -> f64 {
        self.h0.evaluate(y + self.t0 + t)
    }

    /// `∂_t θ(t)(y) = h0'(y + t0 + t)`.
    pub fn theta_prime(&self, t: f64, y: f64) -> f64 {
        self.h0_prime.evaluate(y + self.t0 + t)
    }

    /// `θ(t)(y) + Σ_i z_i v_i(y)`.
    pub fn curve_value(&self, t: f64, z: &[f64], y: f64) -> f64 {
        self.theta(t, y)
            + self
                .basis
                .basis()
                .iter()
                .zip(z.iter())
                .map(|(v, zi)| zi * v.evaluate(y))
                .sum::<f64>()
    }

    /// `κ` when every functional is constant (then `κ` ignores `(t, z)`).
    pub fn constant_kappa(&self) -> Option<&DMatrix<f64>> {
        self.kappa_const.as_ref()
    }

    /// True when `κ` is constant and the drift affine, i.e. `Z` is Gaussian.
    pub fn is_gaussian(&self) -> bool {
        self.kappa_const.is_some()
    }

    /// Writes `κ(t, z)` (`d × n`; rows beyond `p` stay zero) into `out`.
    pub fn kappa_into(&self, t: f64, z: &[f64], out: &mut DMatrix<f64>) {
        if let Some(k) = &self.kappa_const {
            out.copy_from(k);
            return;
        }
        out.fill(0.0);
        let leaf = LeafCurve { realization: self, t, z };
        for (i, row) in self.spec.phi.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                out[(i, j)] = f.apply(&leaf);
            }
        }
    }

    pub fn kappa(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim(), self.n());
        self.kappa_into(t, z, &mut out);
        out
    }

    /// Risk premium `κ(t, z) ψ`.
    pub fn risk_premium(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.kappa(t, z) * DVector::from_column_slice(&self.psi)
    }

    /// Drift of `Z` under the market measure: `κψ + A z`.
    pub fn beta(&self, t: f64, z: &[f64]) -> DVector<f64> {
        self.risk_premium(t, z) + self.mat_a() * DVector::from_column_slice(z)
    }

    /// Drift of `Z` under the pricing measure: `A z`.
    pub fn beta_q(&self, _t: f64, z: &[f64]) -> DVector<f64> {
        self.mat_a() * DVector::from_column_slice(z)
    }

    /// Copy with `A` replaced. Breaks the closure identity unless `mat_a`
    /// is the true derivative matrix; meant for sensitivity studies.
    pub fn with_mat_a(&self, mat_a: DMatrix<f64>) -> Self {
        let basis = ClosureBasis::from_parts(self.basis.basis().to_vec(), mat_a, self.basis.origin_count());
        Self { basis, ..self.clone() }
    }

    /// Copy with a different market price of risk.
    pub fn with_psi(&self, psi: &[f64]) -> Result<Self, FdrError> {
        if psi.len() != self.n() {
            return Err(FdrError::Shape(alloc::format!("psi has length {}, expected {}", psi.len(), self.n())));
        }
        Ok(Self { psi: psi.to_vec(), ..self.clone() })
    }
}

/// Validates the spec, closes the spanning family under `d/dy` and
/// assembles `κ` and `β`.
pub fn build_realization(
    spec: &VolatilitySpec,
    psi: &[f64],
    h0: QuasiExponential,
    t0: f64,
    alpha: f64,
) -> Result<Realization, FdrError> {
    validate_spec(spec, alpha)?;
    if psi.len() != spec.n() {
        return Err(FdrError::Shape(alloc::format!("psi has length {}, expected n = {}", psi.len(), spec.n())));
    }
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(FdrError::Shape(alloc::format!("t0 must be finite and nonnegative, got {t0}")));
    }
    h0.check_membership(alpha)?;
    let basis = closure(&spec.spanning, alpha)?;
    let kappa_const = spec.is_constant().then(|| {
        let mut k = DMatrix::zeros(basis.dim(), spec.n());
        for (i, row) in spec.phi.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                k[(i, j)] = f.apply(&QuasiExponential::default());
            }
        }
        k
    });
    Ok(Realization {
        h0_prime: h0.differentiate(),
        basis,
        h0,
        t0,
        psi: psi.to_vec(),
        spec: spec.clone(),
        alpha,
        kappa_const,
    })
}

/// Coefficient maps `κ(t, z)` and market-measure drift `β(t, z)` of the
/// coordinate process.
pub trait CoefficientField {
    fn kappa(&self, t: f64, z: &[f64]) -> DMatrix<f64>;
    fn beta(&self, t: f64, z: &[f64]) -> DVector<f64>;
}

impl CoefficientField for Realization {
    fn kappa(&self, t: f64, z: &[f64]) -> DMatrix<f64> {
        Realization::kappa(self, t, z)
    }

    fn beta(&self, t: f64, z: &[f64]) -> DVector<f64> {
        Realization::beta(self, t, z)
    }
}

/// Evaluation points for [`check_invariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceGrid {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub maturities: Vec<f64>,
}

impl InvarianceGrid {
    /// `n_t` times on `[0, t_max]`, the origin plus `n_z - 1` fixed
    /// pseudo-random states in `[-radius, radius]^d`, and `n_y` maturities
    /// on `[0, y_max]`.
    pub fn standard(d: usize, n_t: usize, n_z: usize, n_y: usize, t_max: f64, radius: f64, y_max: f64) -> Self {
        let lin = |n: usize, hi: f64| -> Vec<f64> {
            match n {
                0 => Vec::new(),
                1 => vec![0.0],
                _ => (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect(),
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x1f0_1a7e);
        let mut states = Vec::with_capacity(n_z);
        if n_z > 0 {
            states.push(vec![0.0; d]);
        }
        while states.len() < n_z {
            states.push((0..d).map(|_| rng.random_range(-radius..=radius)).collect());
        }
        Self { times: lin(n_t, t_max), states, maturities: lin(n_y, y_max) }
    }
}

/// Largest absolute residual of each invariance condition over the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceReport {
    /// `ν(θ(t)) − ∂_tθ(t) − Σ β_i(t, 0) v_i`.
    pub drift: f64,
    /// `σ_j(θ(t) + Σ z_k v_k) − Σ_i v_i κ_ij(t, z)`.
    pub volatility: f64,
    /// `v_k' − Σ_i v_i ∂_{z_k}(β_i − Σ_j κ_ij ψ_j)`.
    pub ode: f64,
    pub points: usize,
}

impl InvarianceReport {
    pub fn max(&self) -> f64 {
        self.drift.max(self.volatility).max(self.ode)
    }
}

/// Step of the central differences used for `∂_{z_k}`.
pub const FD_STEP: f64 = 1e-5;

pub fn check_invariance(r: &Realization, grid: &InvarianceGrid) -> InvarianceReport {
    check_invariance_with(r, r, grid)
}

/// Invariance residuals of the leaf structure of `r` under the coefficient
/// maps supplied by `field` (which may differ from the ones `r` builds).
pub fn check_invariance_with<F: CoefficientField + ?Sized>(
    r: &Realization,
    field: &F,
    grid: &InvarianceGrid,
) -> InvarianceReport {
    let d = r.dim();
    let n = r.n();
    let psi = DVector::from_column_slice(r.psi());
    let derivs: Vec<QuasiExponential> = r.basis().basis().iter().map(|v| v.differentiate()).collect();
    let ny = grid.maturities.len();
    let mut v_at = vec![0.0; ny * d];
    let mut dv_at = vec![0.0; ny * d];
    for (iy, &y) in grid.maturities.iter().enumerate() {
        r.basis().evaluate_into(y, &mut v_at[iy * d..(iy + 1) * d]);
        for k in 0..d {
            dv_at[iy * d + k] = derivs[k].evaluate(y);
        }
    }
    let net = |t: f64, z: &[f64]| field.beta(t, z) - field.kappa(t, z) * &psi;

    let zero = vec![0.0; d];
    let mut rep = InvarianceReport { drift: 0.0, volatility: 0.0, ode: 0.0, points: 0 };
    for &t in &grid.times {
        let beta0 = field.beta(t, &zero);
        let leaf0 = LeafCurve { realization: r, t, z: &zero };
        for (iy, &y) in grid.maturities.iter().enumerate() {
            let v = &v_at[iy * d..(iy + 1) * d];
            // A θ(t) and ∂_t θ(t) are both h0'(y + t0 + t) and cancel exactly.
            let a_theta = r.theta_prime(t, y);
            let nu = a_theta + (0..n).map(|j| r.spec().sigma_at(&leaf0, j, y) * psi[j]).sum::<f64>();
            let rhs = r.theta_prime(t, y) + (0..d).map(|i| beta0[i] * v[i]).sum::<f64>();
            rep.drift = rep.drift.max((nu - rhs).abs());
        }

        for z in &grid.states {
            let kappa = field.kappa(t, z);
            let leaf = LeafCurve { realization: r, t, z };
            let mut jac = DMatrix::zeros(d, d);
            let mut zp = z.clone();
            for k in 0..d {
                zp[k] = z[k] + FD_STEP;
                let up = net(t, &zp);
                zp[k] = z[k] - FD_STEP;
                let dn = net(t, &zp);
                zp[k] = z[k];
                jac.set_column(k, &((up - dn) / (2.0 * FD_STEP)));
            }
            for (iy, &y) in grid.maturities.iter().enumerate() {
                let v = &v_at[iy * d..(iy + 1) * d];
                for j in 0..n {
                    let sigma = r.spec().sigma_at(&leaf, j, y);
                    let fitted: f64 = (0..d).map(|i| v[i] * kappa[(i, j)]).sum();
                    rep.volatility = rep.volatility.max((sigma - fitted).abs());
                }
                for k in 0..d {
                    let fitted: f64 = (0..d).map(|i| v[i] * jac[(i, k)]).sum();
                    rep.ode = rep.ode.max((dv_at[iy * d + k] - fitted).abs());
                }
                rep.points += 1;
            }
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{Functional, PointShape};
    use crate::qexp::ExpTerm;

    fn gs(a: f64, s1: f64, s2: f64, psi: [f64; 2]) -> Realization {
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(a, 1.0)],
            &[s1, s2],
        )
        .unwrap();
        let h0 = QuasiExponential::new(10.0, vec![ExpTerm::new(1.0, vec![-2.0])]);
        build_realization(&spec, &psi, h0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn gs_structure() {
        let (a, s1, s2, psi) = (1.0, 0.3, 0.5, [0.2, 0.1]);
        let r = gs(a, s1, s2, psi);
        assert_eq!(r.mat_a(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -a]));
        assert_eq!(r.kappa(0.3, &[1.0, -2.0]), DMatrix::from_row_slice(2, 2, &[s1, 0.0, 0.0, s2]));
        let b = r.beta(0.0, &[0.0, 0.0]);
        assert_eq!(b.as_slice(), &[s1 * psi[0], s2 * psi[1]]);
        let b = r.beta(0.0, &[0.7, 2.0]);
        assert_eq!(b[1], s2 * psi[1] - a * 2.0);
        assert!(r.is_gaussian());
    }

    #[test]
    fn hump_example_and_zero_vol() {
        let a = 1.0;
        let spec = VolatilitySpec::new(
            vec![QuasiExponential::poly_exp(a, vec![0.0, 1.0])],
            vec![vec![Functional::Constant(1.0)]],
            0.0,
            1.0,
        )
        .unwrap();
        let h0 = QuasiExponential::new(5.0, vec![ExpTerm::new(1.0, vec![1.0, 1.0])]);
        let r = build_realization(&spec, &[0.0], h0.clone(), 0.0, 1.0).unwrap();
        assert_eq!(r.kappa(0.0, &[0.0, 0.0]).as_slice(), &[1.0, 0.0]);
        let z = [0.4, -1.1];
        let b = r.beta(0.2, &z);
        assert_eq!(b.as_slice(), &[-a * z[0], z[0] - a * z[1]]);

        let spec0 = VolatilitySpec::new(
            spec.spanning.clone(),
            vec![vec![Functional::Constant(0.0)]],
            0.0,
            1.0,
        )
        .unwrap();
        let r0 = build_realization(&spec0, &[0.7], h0, 0.0, 1.0).unwrap();
        assert_eq!(r0.kappa(0.0, &z), DMatrix::zeros(2, 1));
        assert_eq!(r0.beta(0.0, &z), r0.mat_a() * DVector::from_column_slice(&z));
    }

    #[test]
    fn invariance_holds_on_builds() {
        let r = gs(1.0, 0.3, 0.5, [0.2, 0.1]);
        let grid = InvarianceGrid::standard(2, 10, 10, 50, 2.0, 3.0, 10.0);
        let rep = check_invariance(&r, &grid);
        assert!(rep.max() <= 1e-8, "{rep:?}");
        assert_eq!(rep.points, 10 * 10 * 50);
    }

    #[test]
    fn state_dependent_functional_still_invariant() {
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
        let r = build_realization(&spec, &[0.3, -0.2], h0, 0.25, 1.0).unwrap();
        assert!(!r.is_gaussian());
        let grid = InvarianceGrid::standard(2, 5, 5, 20, 1.0, 2.0, 8.0);
        assert!(check_invariance(&r, &grid).max() <= 1e-8);
    }

    #[test]
    fn perturbed_mat_a_scales_residual() {
        let r = gs(1.0, 0.3, 0.5, [0.2, 0.1]);
        let grid = InvarianceGrid::standard(2, 3, 3, 20, 1.0, 1.0, 10.0);
        let res = |eps: f64| {
            let mut a = r.mat_a().clone();
            a[(1, 1)] += eps;
            check_invariance(&r.with_mat_a(a), &grid).ode
        };
        let ratio = (res(1e-3) / 1e-3) / (res(1e-4) / 1e-4);
        assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn measure_consistency() {
        let r = gs(1.0, 0.3, 0.5, [0.2, 0.1]);
        let r0 = r.with_psi(&[0.0, 0.0]).unwrap();
        let z = [0.3, -0.4];
        let diff = r.beta(0.1, &z) - r0.beta(0.1, &z);
        assert!((diff - r.risk_premium(0.1, &z)).abs().max() < 1e-15);
    }
}
