use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::SimError;
use crate::fdr::Realization;
use crate::{linalg, par};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// Market measure: drift `κψ + A z`.
    P,
    /// Pricing measure: drift `A z`.
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Exact Gaussian transition (constant `κ`, affine drift).
    ExactOu,
    EulerMaruyama,
}

/// Random stream for one path.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// One simulated trajectory of `Z` with the increments that drove it.
///
/// Alongside `Z_k` the bundle keeps `ΔW_k` and `I_k = ∫_{t_k}^{t_{k+1}} Z_s ds`
/// (exact for the Gaussian scheme, `Z_k Δt` for Euler). With these,
/// `Z_{k+1} − Z_k = b Δt + A I_k + κ ΔW_k` holds to rounding for constant
/// `κ`, which is what makes wealth reductions comparable pathwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub dt: f64,
    pub measure: Measure,
    pub seed: u64,
    pub path_index: u64,
    d: usize,
    n: usize,
    z: Vec<f64>,
    dw: Vec<f64>,
    z_integral: Vec<f64>,
}

impl PathBundle {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn noise_dim(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    /// `Z` at step `k` (`0 ≤ k ≤ N`).
    pub fn z(&self, k: usize) -> &[f64] {
        &self.z[k * self.d..(k + 1) * self.d]
    }

    pub fn z_final(&self) -> &[f64] {
        self.z(self.steps())
    }

    /// Brownian increment over step `k` (`0 ≤ k < N`).
    pub fn dw(&self, k: usize) -> &[f64] {
        &self.dw[k * self.n..(k + 1) * self.n]
    }

    /// `∫ Z ds` over step `k`.
    pub fn z_integral(&self, k: usize) -> &[f64] {
        &self.z_integral[k * self.d..(k + 1) * self.d]
    }

    /// Same path on a grid `factor` times coarser: increments and integrals
    /// are summed, `Z` subsampled.
    pub fn coarsen(&self, factor: usize) -> Result<Self, SimError> {
        let steps = self.steps();
        if factor == 0 || steps % factor != 0 {
            return Err(SimError::Shape(alloc::format!("{steps} steps not divisible by {factor}")));
        }
        let m = steps / factor;
        let (d, n) = (self.d, self.n);
        let mut z = Vec::with_capacity((m + 1) * d);
        let mut dw = vec![0.0; m * n];
        let mut zi = vec![0.0; m * d];
        for c in 0..m {
            z.extend_from_slice(self.z(c * factor));
            for k in c * factor..(c + 1) * factor {
                for (acc, v) in dw[c * n..(c + 1) * n].iter_mut().zip(self.dw(k)) {
                    *acc += v;
                }
                for (acc, v) in zi[c * d..(c + 1) * d].iter_mut().zip(self.z_integral(k)) {
                    *acc += v;
                }
            }
        }
        z.extend_from_slice(self.z_final());
        let times = (0..=m).map(|c| self.times[c * factor]).collect();
        Ok(Self {
            times,
            dt: self.dt * factor as f64,
            measure: self.measure,
            seed: self.seed,
            path_index: self.path_index,
            d,
            n,
            z,
            dw,
            z_integral: zi,
        })
    }
}

// One-step Gaussian transition of (W, Z, ∫Z) with W and ∫Z restarted at 0.
#[derive(Debug, Clone)]
struct ExactStep {
    // E[I | z] = phi_iz z + mean_i
    phi_iz: DMatrix<f64>,
    mean_i: DVector<f64>,
    // Factor of the joint covariance of (ΔW, I).
    factor: DMatrix<f64>,
}

impl ExactStep {
    fn new(mat_a: &DMatrix<f64>, kappa: &DMatrix<f64>, drift: &DVector<f64>, dt: f64) -> Self {
        let d = mat_a.nrows();
        let n = kappa.ncols();
        let m = n + 2 * d;
        let (zs, is) = (n, n + d);

        let mut f = DMatrix::zeros(m, m);
        f.view_mut((zs, zs), (d, d)).copy_from(mat_a);
        f.view_mut((is, zs), (d, d)).fill_with_identity();
        let mut g = DMatrix::zeros(m, n);
        g.view_mut((0, 0), (n, n)).fill_with_identity();
        g.view_mut((zs, 0), (d, n)).copy_from(kappa);

        // Van Loan: exp([[-F, GGᵀ], [0, Fᵀ]] Δ) = [[·, E12], [0, E22]],
        // e^{FΔ} = E22ᵀ and the step covariance is E22ᵀ E12.
        let mut vl = DMatrix::zeros(2 * m, 2 * m);
        vl.view_mut((0, 0), (m, m)).copy_from(&(-&f * dt));
        vl.view_mut((0, m), (m, m)).copy_from(&(&g * g.transpose() * dt));
        vl.view_mut((m, m), (m, m)).copy_from(&(f.transpose() * dt));
        let e = linalg::expm(&vl);
        let phi = e.view((m, m), (m, m)).transpose();
        let cov = &phi * e.view((0, m), (m, m));
        let cov = (&cov + cov.transpose()) * 0.5;

        let mut aug = DMatrix::zeros(m + 1, m + 1);
        aug.view_mut((0, 0), (m, m)).copy_from(&(&f * dt));
        for i in 0..d {
            aug[(zs + i, m)] = drift[i] * dt;
        }
        let shift = linalg::expm(&aug).view((0, m), (m, 1)).clone_owned();

        let mut sub = DMatrix::zeros(n + d, n + d);
        let idx: Vec<usize> = (0..n).chain(is..is + d).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                sub[(a, b)] = cov[(ia, ib)];
            }
        }
        Self {
            phi_iz: phi.view((is, zs), (d, d)).clone_owned(),
            mean_i: DVector::from_iterator(d, (0..d).map(|i| shift[(is + i, 0)])),
            factor: linalg::psd_factor(&sub),
        }
    }
}

/// Reproducible generator of coordinate paths for one realization.
#[derive(Debug, Clone)]
pub struct PathSimulator<'a> {
    r: &'a Realization,
    z0: Vec<f64>,
    steps: usize,
    dt: f64,
    measure: Measure,
    seed: u64,
    exact: Option<ExactStep>,
    // b in Z' = z + bΔ + A I + κΔW for the exact scheme.
    drift_const: DVector<f64>,
}

impl<'a> PathSimulator<'a> {
    /// `N = round(T/Δt)` steps of size `T/N`. The exact Gaussian scheme is
    /// chosen whenever `κ` is constant.
    pub fn new(
        r: &'a Realization,
        z0: &[f64],
        horizon: f64,
        dt: f64,
        measure: Measure,
        seed: u64,
    ) -> Result<Self, SimError> {
        if !(dt > 0.0 && dt.is_finite() && horizon.is_finite() && dt <= horizon * (1.0 + 1e-12)) {
            return Err(SimError::Step { dt, horizon });
        }
        if z0.len() != r.dim() {
            return Err(SimError::Shape(alloc::format!("z0 has length {}, expected {}", z0.len(), r.dim())));
        }
        let steps = ((horizon / dt).round() as usize).max(1);
        let dt = horizon / steps as f64;
        let zero = vec![0.0; r.dim()];
        let drift_const = match measure {
            Measure::P => r.risk_premium(0.0, &zero),
            Measure::Q => DVector::zeros(r.dim()),
        };
        let exact = r
            .constant_kappa()
            .map(|k| ExactStep::new(r.mat_a(), k, &drift_const, dt));
        Ok(Self { r, z0: z0.to_vec(), steps, dt, measure, seed, exact, drift_const })
    }

    /// Forces Euler–Maruyama even when an exact transition exists.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        match scheme {
            Scheme::EulerMaruyama => self.exact = None,
            Scheme::ExactOu => {
                if self.exact.is_none() {
                    if let Some(k) = self.r.constant_kappa() {
                        self.exact = Some(ExactStep::new(self.r.mat_a(), k, &self.drift_const, self.dt));
                    }
                }
            }
        }
        self
    }

    pub fn scheme(&self) -> Scheme {
        if self.exact.is_some() {
            Scheme::ExactOu
        } else {
            Scheme::EulerMaruyama
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn realization(&self) -> &'a Realization {
        self.r
    }

    /// Path number `index`; identical whatever else is simulated.
    pub fn path(&self, index: u64) -> PathBundle {
        let (d, n, steps, dt) = (self.r.dim(), self.r.n(), self.steps, self.dt);
        let mut rng = path_rng(self.seed, index);
        let mut z = Vec::with_capacity((steps + 1) * d);
        let mut dw = Vec::with_capacity(steps * n);
        let mut zi = Vec::with_capacity(steps * d);
        z.extend_from_slice(&self.z0);
        let a = self.r.mat_a();
        let mut cur = DVector::from_column_slice(&self.z0);
        let mut kappa = DMatrix::zeros(d, n);
        let mut xi = DVector::zeros(match &self.exact {
            Some(_) => n + d,
            None => n,
        });
        let sqdt = dt.sqrt();
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();

        for k in 0..steps {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let (inc, integral) = match &self.exact {
                Some(ex) => {
                    let joint = &ex.factor * &xi;
                    let inc = joint.rows(0, n).clone_owned();
                    let integral = &ex.phi_iz * &cur + &ex.mean_i + joint.rows(n, d);
                    kappa.copy_from(self.r.constant_kappa().expect("exact scheme implies constant kappa"));
                    let next = &cur + &self.drift_const * dt + a * &integral + &kappa * &inc;
                    cur = next;
                    (inc, integral)
                }
                None => {
                    let t = times[k];
                    let zs = cur.as_slice().to_vec();
                    self.r.kappa_into(t, &zs, &mut kappa);
                    let beta = match self.measure {
                        Measure::P => &kappa * DVector::from_column_slice(self.r.psi()) + a * &cur,
                        Measure::Q => a * &cur,
                    };
                    let inc = &xi * sqdt;
                    let integral = &cur * dt;
                    cur = &cur + beta * dt + &kappa * &inc;
                    (inc, integral)
                }
            };
            dw.extend_from_slice(inc.as_slice());
            zi.extend_from_slice(integral.as_slice());
            z.extend_from_slice(cur.as_slice());
        }
        PathBundle {
            times,
            dt,
            measure: self.measure,
            seed: self.seed,
            path_index: index,
            d,
            n,
            z,
            dw,
            z_integral: zi,
        }
    }

    /// Paths with indices in `range`, in order.
    pub fn paths(&self, range: Range<u64>) -> Vec<PathBundle> {
        let start = range.start;
        let count = range.end.saturating_sub(start) as usize;
        par::map_range(count, |i| self.path(start + i as u64))
    }
}

/// `n_paths` paths of `Z` started at `z0`.
pub fn simulate_z(
    r: &Realization,
    z0: &[f64],
    horizon: f64,
    dt: f64,
    measure: Measure,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PathBundle>, SimError> {
    let sim = PathSimulator::new(r, z0, horizon, dt, measure, seed)?;
    Ok(sim.paths(0..n_paths as u64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, VolatilitySpec};
    use crate::qexp::QuasiExponential;

    fn gs() -> Realization {
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)],
            &[0.3, 0.5],
        )
        .unwrap();
        build_realization(&spec, &[0.2, 0.1], QuasiExponential::constant_fn(10.0), 0.5, 1.0).unwrap()
    }

    #[test]
    fn step_errors() {
        let r = gs();
        assert!(matches!(
            PathSimulator::new(&r, &[0.0, 0.0], 0.5, 1.0, Measure::P, 1),
            Err(SimError::Step { .. })
        ));
        assert!(PathSimulator::new(&r, &[0.0, 0.0], 1.0, 0.0, Measure::P, 1).is_err());
        assert!(PathSimulator::new(&r, &[0.0], 1.0, 0.1, Measure::P, 1).is_err());
    }

    #[test]
    fn exact_paths_satisfy_increment_identity() {
        let r = gs();
        let sim = PathSimulator::new(&r, &[0.1, -0.2], 1.0, 0.05, Measure::P, 3).unwrap();
        assert_eq!(sim.scheme(), Scheme::ExactOu);
        let p = sim.path(5);
        let k = r.constant_kappa().unwrap();
        let b = r.risk_premium(0.0, &[0.0, 0.0]);
        for s in 0..p.steps() {
            let dz = DVector::from_column_slice(p.z(s + 1)) - DVector::from_column_slice(p.z(s));
            let pred = &b * p.dt
                + r.mat_a() * DVector::from_column_slice(p.z_integral(s))
                + k * DVector::from_column_slice(p.dw(s));
            assert!((dz - pred).abs().max() < 1e-14);
        }
        assert_eq!(p, sim.path(5));
        assert_ne!(p, sim.path(6));
        assert_eq!(p.z(0), &[0.1, -0.2]);
    }

    #[test]
    fn coarsen_keeps_endpoints() {
        let r = gs();
        let sim = PathSimulator::new(&r, &[0.0, 0.0], 1.0, 0.1, Measure::Q, 9).unwrap();
        let p = sim.path(0);
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.steps(), 5);
        assert_eq!(c.z_final(), p.z_final());
        let total: f64 = (0..10).map(|k| p.dw(k)[1]).sum();
        let total_c: f64 = (0..5).map(|k| c.dw(k)[1]).sum();
        assert!((total - total_c).abs() < 1e-14);
        assert!(p.coarsen(3).is_err());
    }
}
