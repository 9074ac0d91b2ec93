use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use nalgebra::DMatrix;
use num_traits::Float;

use super::{Measure, PathBundle, SimError};
use crate::fdr::Realization;
use crate::par;

/// Feedback rule `γ(t, x, z)` for the `d` futures exposures.
pub trait Policy: Send + Sync {
    fn gamma(&self, t: f64, x: f64, z: &[f64], out: &mut [f64]);
}

/// `base(t, x, z) + offset`.
pub struct OffsetPolicy {
    pub base: Arc<dyn Policy>,
    pub offset: Vec<f64>,
}

impl Policy for OffsetPolicy {
    fn gamma(&self, t: f64, x: f64, z: &[f64], out: &mut [f64]) {
        self.base.gamma(t, x, z, out);
        for (g, o) in out.iter_mut().zip(self.offset.iter()) {
            *g += o;
        }
    }
}

/// Portfolio in coordinates `γ_i = ⟨Γ, v_i⟩`.
#[derive(Clone)]
pub enum Strategy {
    ConstantGamma(Vec<f64>),
    /// One contract at fixed time to maturity `y`: `γ_i = v_i(y)`.
    Rollover(f64),
    Feedback(Arc<dyn Policy>),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::ConstantGamma(g) => f.debug_tuple("ConstantGamma").field(g).finish(),
            Strategy::Rollover(y) => f.debug_tuple("Rollover").field(y).finish(),
            Strategy::Feedback(_) => f.write_str("Feedback(..)"),
        }
    }
}

enum Resolved<'a> {
    Fixed(Vec<f64>),
    Dynamic(&'a dyn Policy),
}

impl Strategy {
    fn resolve(&self, r: &Realization) -> Result<Resolved<'_>, SimError> {
        let d = r.dim();
        match self {
            Strategy::ConstantGamma(g) if g.len() == d => Ok(Resolved::Fixed(g.clone())),
            Strategy::ConstantGamma(g) => {
                Err(SimError::Shape(alloc::format!("gamma has length {}, expected {d}", g.len())))
            }
            Strategy::Rollover(y) => {
                let mut g = vec![0.0; d];
                r.basis().evaluate_into(*y, &mut g);
                Ok(Resolved::Fixed(g))
            }
            Strategy::Feedback(p) => Ok(Resolved::Dynamic(p.as_ref())),
        }
    }
}

/// Which side of the wealth reduction drives the increments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WealthForm {
    /// `γᵀ(dZ − A Z dt)`, using the stored `∫Z ds`.
    Reduced,
    /// `γᵀκ(t, Z)(dW + ψ dt)`.
    Diffusion,
}

/// `(e^{x} − 1)/x`, equal to 1 at 0.
fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

// Steps the wealth along a path and reports (k, γ_k, κ_k) to `visit`.
fn walk<F: FnMut(usize, &[f64], &DMatrix<f64>)>(
    r: &Realization,
    strategy: &Resolved<'_>,
    x0: f64,
    rate: f64,
    bundle: &PathBundle,
    form: WealthForm,
    mut visit: F,
) -> Vec<f64> {
    let (d, n, dt) = (r.dim(), r.n(), bundle.dt);
    let growth = (rate * dt).exp();
    let weight = phi1(rate * dt);
    let psi = r.psi();
    let a = r.mat_a();
    let mut kappa = DMatrix::zeros(d, n);
    let mut gamma = vec![0.0; d];
    let mut x = Vec::with_capacity(bundle.steps() + 1);
    x.push(x0);
    for k in 0..bundle.steps() {
        let t = bundle.times[k];
        let z = bundle.z(k);
        let xk = x[k];
        match strategy {
            Resolved::Fixed(g) => gamma.copy_from_slice(g),
            Resolved::Dynamic(p) => p.gamma(t, xk, z, &mut gamma),
        }
        r.kappa_into(t, z, &mut kappa);
        let gain = match form {
            WealthForm::Reduced => {
                let (z1, zi) = (bundle.z(k + 1), bundle.z_integral(k));
                (0..d)
                    .map(|i| {
                        let drift: f64 = (0..d).map(|j| a[(i, j)] * zi[j]).sum();
                        gamma[i] * ((z1[i] - z[i]) - drift)
                    })
                    .sum::<f64>()
            }
            WealthForm::Diffusion => {
                let dw = bundle.dw(k);
                (0..n)
                    .map(|j| {
                        let exposure: f64 = (0..d).map(|i| gamma[i] * kappa[(i, j)]).sum();
                        exposure * (dw[j] + psi[j] * dt)
                    })
                    .sum::<f64>()
            }
        };
        visit(k, &gamma, &kappa);
        x.push(growth * xk + weight * gain);
    }
    x
}

/// Wealth `X_0..X_N` along one market-measure path, integrating
/// `dX = r X dt + dG` with the exact factor `e^{rΔt}` on the cash account.
pub fn wealth_path(
    r: &Realization,
    strategy: &Strategy,
    x0: f64,
    rate: f64,
    bundle: &PathBundle,
    form: WealthForm,
) -> Result<Vec<f64>, SimError> {
    if bundle.measure != Measure::P {
        return Err(SimError::Measure);
    }
    let resolved = strategy.resolve(r)?;
    Ok(walk(r, &resolved, x0, rate, bundle, form, |_, _, _| {}))
}

/// [`wealth_path`] over many paths, in path order.
pub fn simulate_wealth(
    r: &Realization,
    strategy: &Strategy,
    x0: f64,
    rate: f64,
    paths: &[PathBundle],
    form: WealthForm,
) -> Result<Vec<Vec<f64>>, SimError> {
    if paths.iter().any(|p| p.measure != Measure::P) {
        return Err(SimError::Measure);
    }
    strategy.resolve(r)?;
    Ok(par::map_range(paths.len(), |i| {
        let resolved = strategy.resolve(r).expect("checked above");
        walk(r, &resolved, x0, rate, &paths[i], form, |_, _, _| {})
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingStep {
    pub paths: usize,
    pub premium_sq: f64,
    pub quadratic: f64,
}

/// Monte Carlo view of the square-integrability condition. Never a proof.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// Mean of `(∫ γᵀκψ dt)²` with its standard error.
    pub premium_sq: f64,
    pub premium_sq_se: f64,
    /// Mean of `∫ Σ_j (γᵀκ_{·j})² dt` with its standard error.
    pub quadratic: f64,
    pub quadratic_se: f64,
    /// Estimates on nested prefixes of 64, 128, … paths and the full set.
    pub doublings: Vec<DoublingStep>,
    /// Largest single-path share of the summed quadratic term.
    pub max_path_share: f64,
    pub finite: bool,
    /// No jump beyond four standard errors at the last doubling.
    pub stable: bool,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn admissibility_estimate(
    r: &Realization,
    strategy: &Strategy,
    x0: f64,
    rate: f64,
    paths: &[PathBundle],
) -> Result<AdmissibilityReport, SimError> {
    if paths.iter().any(|p| p.measure != Measure::P) {
        return Err(SimError::Measure);
    }
    strategy.resolve(r)?;
    let psi = r.psi();
    let per_path: Vec<(f64, f64)> = par::map_range(paths.len(), |i| {
        let resolved = strategy.resolve(r).expect("checked above");
        let dt = paths[i].dt;
        let (mut premium, mut quad) = (0.0, 0.0);
        walk(r, &resolved, x0, rate, &paths[i], WealthForm::Diffusion, |_, g, kappa| {
            for j in 0..kappa.ncols() {
                let e: f64 = (0..g.len()).map(|q| g[q] * kappa[(q, j)]).sum();
                premium += e * psi[j] * dt;
                quad += e * e * dt;
            }
        });
        (premium * premium, quad)
    });
    let a: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let b: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let (pm, pse) = mean_se(&a);
    let (qm, qse) = mean_se(&b);

    let mut sizes = Vec::new();
    let mut s = 64usize;
    while s < paths.len() {
        sizes.push(s);
        s *= 2;
    }
    sizes.push(paths.len());
    let doublings: Vec<DoublingStep> = sizes
        .iter()
        .map(|&s| DoublingStep { paths: s, premium_sq: mean_se(&a[..s]).0, quadratic: mean_se(&b[..s]).0 })
        .collect();

    let finite = a.iter().chain(b.iter()).all(|v| v.is_finite());
    let total_q: f64 = b.iter().sum();
    let max_path_share = if total_q > 0.0 { b.iter().fold(0.0f64, |m, v| m.max(*v)) / total_q } else { 0.0 };
    let stable = finite
        && match doublings.len() {
            0 | 1 => true,
            k => {
                let (prev, last) = (doublings[k - 2], doublings[k - 1]);
                (last.premium_sq - prev.premium_sq).abs() <= 4.0 * pse + 1e-12 * pm.abs()
                    && (last.quadratic - prev.quadratic).abs() <= 4.0 * qse + 1e-12 * qm.abs()
            }
        };
    Ok(AdmissibilityReport {
        premium_sq: pm,
        premium_sq_se: pse,
        quadratic: qm,
        quadratic_se: qse,
        doublings,
        max_path_share,
        finite,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, VolatilitySpec};
    use crate::qexp::QuasiExponential;
    use crate::sim::PathSimulator;

    fn gs() -> Realization {
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)],
            &[0.3, 0.5],
        )
        .unwrap();
        build_realization(&spec, &[0.2, 0.1], QuasiExponential::constant_fn(10.0), 0.5, 1.0).unwrap()
    }

    #[test]
    fn riskless_growth() {
        let r = gs();
        let sim = PathSimulator::new(&r, &[0.3, 0.1], 2.0, 0.01, Measure::P, 4).unwrap();
        let x = wealth_path(&r, &Strategy::ConstantGamma(vec![0.0, 0.0]), 1.5, 0.03, &sim.path(0), WealthForm::Reduced)
            .unwrap();
        for (k, xk) in x.iter().enumerate() {
            let exact = 1.5 * (0.03 * k as f64 * sim.dt()).exp();
            assert!((xk - exact).abs() < 1e-13 * exact);
        }
    }

    #[test]
    fn forms_agree_and_q_rejected() {
        let r = gs();
        let sim = PathSimulator::new(&r, &[0.3, 0.1], 1.0, 0.01, Measure::P, 4).unwrap();
        let p = sim.path(2);
        let s = Strategy::ConstantGamma(vec![1.2, -0.7]);
        let a = wealth_path(&r, &s, 0.0, 0.02, &p, WealthForm::Reduced).unwrap();
        let b = wealth_path(&r, &s, 0.0, 0.02, &p, WealthForm::Diffusion).unwrap();
        let gap = a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap < 1e-12, "gap {gap}");
        let q = PathSimulator::new(&r, &[0.0, 0.0], 1.0, 0.1, Measure::Q, 1).unwrap().path(0);
        assert_eq!(wealth_path(&r, &s, 0.0, 0.02, &q, WealthForm::Reduced), Err(SimError::Measure));
    }

    #[test]
    fn zero_strategy_is_admissible_trivially() {
        let r = gs();
        let paths = PathSimulator::new(&r, &[0.0, 0.0], 1.0, 0.1, Measure::P, 1).unwrap().paths(0..200);
        let rep = admissibility_estimate(&r, &Strategy::ConstantGamma(vec![0.0, 0.0]), 0.0, 0.02, &paths).unwrap();
        assert_eq!(rep.premium_sq, 0.0);
        assert_eq!(rep.quadratic, 0.0);
        assert!(rep.stable);
    }
}
