//! Utility maximization over futures exposures on the realized state.
//!
//! With `X` the wealth and `Z` the coordinates, the value
//! `V(t, x, z) = sup_γ E[u(X_T) | X_t = x, Z_t = z]` solves
//!
//! ```text
//! V_t + sup_γ { V_x (r x + γᵀκψ) + ½ V_xx γᵀKγ + γᵀK ∇_z V_x }
//!     + βᵀ∇_z V + ½ tr(K ∇²_z V) = 0,      K = κκᵀ,
//! ```
//!
//! whose pointwise maximizer is `γ* = −K⁺(V_x κψ + K ∇_z V_x)/V_xx`.
//!
//! Boundary treatment: on the x-edges the solution is extrapolated from its
//! neighbour with the shape of the riskless value `u(x e^{r(T−t)})` (a ratio
//! for exponential and power utility, a difference for log). This is exact
//! for exponential utility whenever the true value factorizes in `x`, as in
//! the Gaussian models. On the z-edges the explicit terms use one-sided
//! second-order differences.

mod solver;
mod stencil;
mod verify;

pub use solver::{solve_hjb, solve_window, Level, ValueFunction, ValueSummary};
pub use verify::{standard_perturbations, verify_candidate, McParams, MonteCarloEstimate, PerturbationResult, VerificationReport};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use thiserror::Error;

use crate::fdr::Realization;
use crate::linalg;

/// Largest state dimension the grid solver accepts.
pub const MAX_DIM: usize = 3;
/// Minimum nodes per axis (one-sided second-order stencils need four).
pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("value function is not strictly concave in x at t = {t}, x = {x} (V_xx = {vxx})")]
    Concavity { t: f64, x: f64, vxx: f64 },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("value function diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `−exp(−ρ x)` on the whole line.
    Exponential { rho: f64 },
    /// `x^γ / γ` on `x > 0`, `0 < γ < 1`.
    Power { gamma: f64 },
    /// `ln x` on `x > 0`.
    Log,
}

impl Utility {
    pub fn validate(&self) -> Result<(), HjbError> {
        match *self {
            Utility::Exponential { rho } if rho > 0.0 && rho.is_finite() => Ok(()),
            Utility::Power { gamma } if gamma > 0.0 && gamma < 1.0 => Ok(()),
            Utility::Log => Ok(()),
            u => Err(HjbError::Grid(alloc::format!("invalid utility parameters {u:?}"))),
        }
    }

    /// Infimum of the domain.
    pub fn lower_bound(&self) -> f64 {
        match self {
            Utility::Exponential { .. } => f64::NEG_INFINITY,
            _ => 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Exponential { rho } => -(-rho * x).exp(),
            Utility::Power { gamma } => x.powf(gamma) / gamma,
            Utility::Log => x.ln(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Exponential { rho } => rho * (-rho * x).exp(),
            Utility::Power { gamma } => x.powf(gamma - 1.0),
            Utility::Log => 1.0 / x,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Utility::Exponential { rho } => -rho * rho * (-rho * x).exp(),
            Utility::Power { gamma } => (gamma - 1.0) * x.powf(gamma - 2.0),
            Utility::Log => -1.0 / (x * x),
        }
    }

    /// Boundary value from its neighbour: `V_b = mult · V_in + shift`.
    pub(crate) fn edge_map(&self, x_edge: f64, x_in: f64, growth: f64) -> (f64, f64) {
        match self {
            Utility::Log => (1.0, (x_edge / x_in).ln()),
            _ => (self.value(x_edge * growth) / self.value(x_in * growth), 0.0),
        }
    }
}

/// `γ* = −K⁺(V_x κψ + K V_xz)/V_xx` with `K = κκᵀ`. Rows of `κ` that are
/// identically zero get `γ_i = 0`.
pub fn pointwise_maximizer(
    vx: f64,
    vxx: f64,
    vxz: &[f64],
    kappa: &DMatrix<f64>,
    psi: &[f64],
) -> Result<DVector<f64>, HjbError> {
    if !(vxx < 0.0) {
        return Err(HjbError::Concavity { t: f64::NAN, x: f64::NAN, vxx });
    }
    let d = kappa.nrows();
    let k = kappa * kappa.transpose();
    let active: Vec<usize> = (0..d).filter(|&i| kappa.row(i).iter().any(|v| *v != 0.0)).collect();
    let mut gamma = DVector::zeros(d);
    if active.is_empty() {
        return Ok(gamma);
    }
    let kpsi = kappa * DVector::from_column_slice(psi);
    let rhs = kpsi * vx + &k * DVector::from_column_slice(vxz);
    let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| k[(active[a], active[b])]);
    let pinv = linalg::pseudo_inverse(&sub, 1e-12);
    for (a, &i) in active.iter().enumerate() {
        gamma[i] = -(0..active.len()).map(|b| pinv[(a, b)] * rhs[active[b]]).sum::<f64>() / vxx;
    }
    Ok(gamma)
}

/// Uniform axis with `n` nodes on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Self { min, max, n }
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    // Index of the cell containing `v` (clamped) and the weight of its right node.
    pub(crate) fn locate(&self, v: f64) -> (usize, f64) {
        let s = ((v - self.min) / self.step()).max(0.0).min((self.n - 1) as f64);
        let i = (s as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    fn check(&self, name: &str) -> Result<(), HjbError> {
        if self.n < MIN_NODES || !(self.max > self.min) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(HjbError::Grid(alloc::format!(
                "{name} axis needs at least {MIN_NODES} nodes on a finite nonempty interval, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Space-time grid for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct HjbGrid {
    pub x: Axis,
    pub z: Vec<Axis>,
    pub horizon: f64,
    pub time_steps: usize,
    /// Full levels are kept every `snapshot_stride` steps (plus `t = 0, T`).
    pub snapshot_stride: usize,
}

impl HjbGrid {
    pub fn dt(&self) -> f64 {
        if self.time_steps == 0 {
            0.0
        } else {
            self.horizon / self.time_steps as f64
        }
    }

    pub fn slices(&self) -> usize {
        self.z.iter().map(|a| a.n).product()
    }

    pub fn nodes(&self) -> usize {
        self.slices() * self.x.n
    }

    pub fn validate(&self, d: usize, utility: &Utility) -> Result<(), HjbError> {
        if d == 0 || d > MAX_DIM {
            return Err(HjbError::Grid(alloc::format!("state dimension {d} outside 1..={MAX_DIM}")));
        }
        if self.z.len() != d {
            return Err(HjbError::Grid(alloc::format!("{} z axes for a {d}-dimensional state", self.z.len())));
        }
        self.x.check("x")?;
        for (j, a) in self.z.iter().enumerate() {
            a.check(&alloc::format!("z{}", j + 1))?;
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(HjbError::Grid(alloc::format!("horizon must be finite and nonnegative, got {}", self.horizon)));
        }
        if self.horizon > 0.0 && self.time_steps == 0 {
            return Err(HjbError::Grid("positive horizon needs at least one time step".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(HjbError::Grid("snapshot stride must be positive".into()));
        }
        if self.x.min <= utility.lower_bound() {
            return Err(HjbError::Grid(alloc::format!(
                "x grid starts at {} but the utility is only defined above {}",
                self.x.min,
                utility.lower_bound()
            )));
        }
        Ok(())
    }
}

/// Boxes `[lo, hi]` per coordinate covering `width` standard deviations of
/// `Z_T` around the segment from `z0` to `E[Z_T]`, using the Gaussian
/// moments of the linearization at `z0` under the market measure.
pub fn gaussian_z_axes(r: &Realization, z0: &[f64], horizon: f64, nodes: usize, width: f64) -> Vec<Axis> {
    let d = r.dim();
    let kappa = r.kappa(0.0, z0);
    let drift = r.risk_premium(0.0, z0);
    let a = r.mat_a();

    let mut aug = DMatrix::zeros(d + 1, d + 1);
    aug.view_mut((0, 0), (d, d)).copy_from(&(a * horizon));
    for i in 0..d {
        aug[(i, d)] = drift[i] * horizon;
    }
    let e = linalg::expm(&aug);
    let mut mean = vec![0.0; d];
    for i in 0..d {
        mean[i] = (0..d).map(|j| e[(i, j)] * z0[j]).sum::<f64>() + e[(i, d)];
    }

    let mut vl = DMatrix::zeros(2 * d, 2 * d);
    vl.view_mut((0, 0), (d, d)).copy_from(&(-a * horizon));
    vl.view_mut((0, d), (d, d)).copy_from(&(&kappa * kappa.transpose() * horizon));
    vl.view_mut((d, d), (d, d)).copy_from(&(a.transpose() * horizon));
    let ev = linalg::expm(&vl);
    let cov = ev.view((d, d), (d, d)).transpose() * ev.view((0, d), (d, d));

    (0..d)
        .map(|i| {
            let sd = cov[(i, i)].max(0.0).sqrt();
            let half = if sd > 0.0 { width * sd } else { 1.0 };
            Axis::new(z0[i].min(mean[i]) - half, z0[i].max(mean[i]) + half, nodes)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizer_examples() {
        let kappa = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.5]);
        let g = pointwise_maximizer(1.0, -2.0, &[0.0, 0.0], &kappa, &[0.0, 0.0]).unwrap();
        assert_eq!(g.as_slice(), &[0.0, 0.0]);

        // Exponential utility: V_x/V_xx = −1/ρ after discounting.
        let (rho, psi) = (2.0, [0.2, 0.1]);
        let g = pointwise_maximizer(rho, -rho * rho, &[0.0, 0.0], &kappa, &psi).unwrap();
        let exposure = kappa.transpose() * g;
        assert!((exposure[0] - psi[0] / rho).abs() < 1e-14);
        assert!((exposure[1] - psi[1] / rho).abs() < 1e-14);

        let tall = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let g = pointwise_maximizer(1.0, -1.0, &[0.3, 0.4], &tall, &[0.2]).unwrap();
        assert_eq!(g[1], 0.0);
        assert!(matches!(
            pointwise_maximizer(1.0, 0.0, &[0.0], &tall.rows(0, 1).clone_owned(), &[0.2]),
            Err(HjbError::Concavity { .. })
        ));
    }

    #[test]
    fn utilities_are_concave_increasing() {
        for u in [Utility::Exponential { rho: 1.5 }, Utility::Power { gamma: 0.5 }, Utility::Log] {
            for x in [0.2, 1.0, 3.0] {
                assert!(u.derivative(x) > 0.0 && u.second_derivative(x) < 0.0);
                let h = 1e-4;
                let fd = (u.value(x + h) - u.value(x - h)) / (2.0 * h);
                assert!((fd - u.derivative(x)).abs() < 1e-6 * u.derivative(x).max(1.0));
            }
        }
    }
}
