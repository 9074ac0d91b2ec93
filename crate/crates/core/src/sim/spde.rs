// Grid discretization of the curve SPDE, kept independent of the
// realization machinery except for σ: it never touches Z, A or κ.

use alloc::vec;
use alloc::vec::Vec;

use super::{CurveSnapshot, Measure, PathBundle, PathSimulator, SimError};
use crate::fdr::{Curve, Realization};

struct GridCurve<'a> {
    y0: f64,
    dy: f64,
    values: &'a [f64],
}

impl Curve for GridCurve<'_> {
    // Piecewise-linear, extended linearly past either end.
    fn value(&self, y: f64) -> f64 {
        let m = self.values.len();
        if m == 1 {
            return self.values[0];
        }
        let s = (y - self.y0) / self.dy;
        let i = (s.max(0.0) as usize).min(m - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

fn uniform_step(maturities: &[f64]) -> Result<f64, SimError> {
    if maturities.len() < 2 {
        return Err(SimError::Shape("maturity grid needs at least two nodes".into()));
    }
    let dy = maturities[1] - maturities[0];
    if !(dy > 0.0) || maturities[0] < 0.0 {
        return Err(SimError::Shape("maturity grid must be increasing and nonnegative".into()));
    }
    for w in maturities.windows(2) {
        if ((w[1] - w[0]) - dy).abs() > 1e-8 * dy {
            return Err(SimError::Shape("maturity grid must be uniform".into()));
        }
    }
    Ok(dy)
}

/// Explicit upwind scheme for `df = (∂_y f + σ(f)ψ) dt + σ(f) dW` on a
/// uniform maturity grid, driven by the increments stored in `bundle`
/// (the `ψ` drift only under `P`). The far boundary uses the linear ghost
/// node `2f_M − f_{M−1}`. Returns the curve after every step, starting
/// with `f_0 = θ(0) + Σ z_0^i v_i`.
pub fn simulate_spde_grid(
    r: &Realization,
    maturities: &[f64],
    bundle: &PathBundle,
) -> Result<Vec<CurveSnapshot>, SimError> {
    let dy = uniform_step(maturities)?;
    let dt = bundle.dt;
    if dt > dy {
        return Err(SimError::Cfl { dt, dy });
    }
    if bundle.noise_dim() != r.n() || bundle.dim() != r.dim() {
        return Err(SimError::Shape("path bundle does not match the realization".into()));
    }
    let (p, n, m) = (r.p(), r.n(), maturities.len());
    let spec = r.spec();
    let mut v_nodes = vec![0.0; p * m];
    for i in 0..p {
        for (k, &y) in maturities.iter().enumerate() {
            v_nodes[i * m + k] = spec.spanning[i].evaluate(y);
        }
    }
    let drift_psi = matches!(bundle.measure, Measure::P);
    let psi = r.psi();

    let mut f: Vec<f64> = maturities.iter().map(|&y| r.curve_value(0.0, bundle.z(0), y)).collect();
    let mut out = Vec::with_capacity(bundle.steps() + 1);
    out.push(CurveSnapshot { t: 0.0, maturities: maturities.to_vec(), values: f.clone() });
    let mut next = vec![0.0; m];
    let mut phi = vec![0.0; p * n];
    let mut load = vec![0.0; p];
    for k in 0..bundle.steps() {
        let grid = GridCurve { y0: maturities[0], dy, values: &f };
        for i in 0..p {
            for j in 0..n {
                phi[i * n + j] = spec.phi[i][j].apply(&grid);
            }
        }
        // Per spanning function: Σ_j Φ_ij (ψ_j dt + dW_j).
        let dw = bundle.dw(k);
        for i in 0..p {
            load[i] = (0..n)
                .map(|j| phi[i * n + j] * (dw[j] + if drift_psi { psi[j] * dt } else { 0.0 }))
                .sum();
        }
        for q in 0..m {
            let slope = if q + 1 < m { (f[q + 1] - f[q]) / dy } else { (f[q] - f[q - 1]) / dy };
            let noise: f64 = (0..p).map(|i| v_nodes[i * m + q] * load[i]).sum();
            next[q] = f[q] + slope * dt + noise;
        }
        core::mem::swap(&mut f, &mut next);
        out.push(CurveSnapshot { t: bundle.times[k + 1], maturities: maturities.to_vec(), values: f.clone() });
    }
    Ok(out)
}

/// Simulates path `0` of `(seed, z0, T, Δt, measure)` and runs the grid
/// scheme on its increments. The bundle is returned for pairing.
pub fn simulate_spde_grid_seeded(
    r: &Realization,
    maturities: &[f64],
    z0: &[f64],
    horizon: f64,
    dt: f64,
    measure: Measure,
    seed: u64,
) -> Result<(PathBundle, Vec<CurveSnapshot>), SimError> {
    let dy = uniform_step(maturities)?;
    if dt > dy {
        return Err(SimError::Cfl { dt, dy });
    }
    let bundle = PathSimulator::new(r, z0, horizon, dt, measure, seed)?.path(0);
    let snaps = simulate_spde_grid(r, maturities, &bundle)?;
    Ok((bundle, snaps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, Functional, VolatilitySpec};
    use crate::qexp::{ExpTerm, QuasiExponential};

    #[test]
    fn pure_advection_with_zero_vol() {
        let spec = VolatilitySpec::new(
            vec![QuasiExponential::exponential(1.0, 1.0)],
            vec![vec![Functional::Constant(0.0)]],
            0.0,
            1.0,
        )
        .unwrap();
        let h0 = QuasiExponential::new(3.0, vec![ExpTerm::new(0.8, vec![1.0])]);
        let r = build_realization(&spec, &[0.0], h0.clone(), 0.0, 1.0).unwrap();
        let ys: Vec<f64> = (0..=500).map(|i| i as f64 * 0.01).collect();
        let (_, snaps) = simulate_spde_grid_seeded(&r, &ys, &[0.0], 1.0, 0.005, Measure::P, 1).unwrap();
        let last = snaps.last().unwrap();
        let err = ys
            .iter()
            .zip(last.values.iter())
            .map(|(y, f)| (f - h0.evaluate(y + 1.0)).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.01, "err {err}");
        assert!(matches!(
            simulate_spde_grid_seeded(&r, &ys, &[0.0], 1.0, 0.02, Measure::P, 1),
            Err(SimError::Cfl { .. })
        ));
    }
}
