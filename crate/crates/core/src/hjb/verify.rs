use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;

use super::solver::{Ctx, SliceCoeffs};
use super::{HjbError, ValueFunction, MAX_DIM};
use crate::sim::{wealth_path, Measure, OffsetPolicy, PathSimulator, Policy, Strategy, WealthForm};
use crate::par;

/// Monte Carlo settings for the verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct McParams {
    pub x0: f64,
    pub z0: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub se: f64,
}

/// `E[u(X_T)]` under a perturbed strategy and its paired gap to the
/// candidate, `E[u(X_T^*) − u(X_T^γ)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub label: String,
    pub expected_utility: MonteCarloEstimate,
    pub gap: MonteCarloEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// Largest relative HJB residual over the stored levels.
    pub hjb_residual: f64,
    /// Largest relative `V_t + L^γ V` over sampled non-optimal `γ`. Positive
    /// values mean some exposure beats the candidate on the grid.
    pub inequality_residual: f64,
    /// `V(0, x0, z0)` interpolated from the grid.
    pub value_pde: f64,
    pub optimal: MonteCarloEstimate,
    pub perturbations: Vec<PerturbationResult>,
}

impl VerificationReport {
    /// `|MC − V| ≤ k·SE + rel·|V|`.
    pub fn value_consistent(&self, k: f64, rel: f64) -> bool {
        (self.optimal.mean - self.value_pde).abs() <= k * self.optimal.se + rel * self.value_pde.abs()
    }

    /// No perturbation beats the candidate by more than `k` standard errors.
    pub fn candidate_dominates(&self, k: f64) -> bool {
        self.perturbations.iter().all(|p| p.gap.mean >= -k * p.gap.se)
    }
}

fn estimate(samples: impl Iterator<Item = f64> + Clone) -> MonteCarloEstimate {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().sum::<f64>() / n;
    let var = if n > 1.0 { samples.map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    MonteCarloEstimate { mean, se: (var / n).sqrt() }
}

/// `γ* ± δ e_i` for every coordinate plus the zero strategy.
pub fn standard_perturbations(vf: &Arc<ValueFunction>, delta: f64) -> Vec<(String, Strategy)> {
    let d = vf.dim();
    let base: Arc<dyn Policy> = vf.clone();
    let mut out = Vec::with_capacity(2 * d + 1);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut offset = vec![0.0; d];
            offset[i] = sign * delta;
            let label = alloc::format!("gamma*{}{delta}e{}", if sign > 0.0 { "+" } else { "-" }, i + 1);
            out.push((label, Strategy::Feedback(Arc::new(OffsetPolicy { base: base.clone(), offset }))));
        }
    }
    out.push((String::from("zero"), Strategy::ConstantGamma(vec![0.0; d])));
    out
}

// Sampled exposures around `γ*` used for the inequality check.
fn probes(gstar: &[f64], d: usize) -> Vec<[f64; MAX_DIM]> {
    let mut base = [0.0; MAX_DIM];
    base[..d].copy_from_slice(&gstar[..d]);
    let mut out = vec![[0.0; MAX_DIM]];
    for i in 0..d {
        for step in [-1.0, -0.1, 0.1, 1.0] {
            let mut g = base;
            g[i] += step * (1.0 + base[i].abs());
            out.push(g);
        }
    }
    out
}

fn inequality_residual(vf: &ValueFunction) -> f64 {
    let r = vf.realization();
    let ctx = Ctx::new(r, vf.utility(), vf.grid(), vf.rate());
    let d = ctx.d;
    let mut worst = f64::NEG_INFINITY;
    for level in vf.levels() {
        if level.vt.iter().all(|v| *v == 0.0) && vf.levels().len() == 1 {
            continue;
        }
        let coeffs: Vec<SliceCoeffs> = par::map_range(ctx.slices(), |s| ctx.coeffs(level.t, s));
        let per_slice: Vec<(f64, f64)> = par::map_range(ctx.slices(), |s| {
            let zp = ctx.zpos(s);
            if !ctx.interior_slice(&zp) {
                return (f64::NEG_INFINITY, 0.0);
            }
            let (mut w, mut scale) = (f64::NEG_INFINITY, 0.0f64);
            for i in ctx.interior_x() {
                let idx = s * ctx.nx + i;
                let dv = ctx.derivs(&level.values, s, i, &zp);
                for g in probes(&level.policy[idx * d..(idx + 1) * d], d) {
                    w = w.max(level.vt[idx] + ctx.generator(&dv, &coeffs[s], ctx.xs[i], &g[..d]));
                }
                scale = scale.max(level.values[idx].abs());
            }
            (w, scale)
        });
        let scale = per_slice.iter().map(|p| p.1).fold(0.0, f64::max);
        let w = per_slice.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(if scale > 0.0 { w / scale } else { w });
    }
    if worst.is_finite() {
        worst
    } else {
        0.0
    }
}

/// Checks a solved candidate: grid residuals of the HJB equation and of the
/// inequality, then a market-measure Monte Carlo of `E[u(X_T)]` under `γ*`
/// (fed the simulated state) against `V(0, x0, z0)`, and paired
/// common-random-number gaps to each perturbation.
pub fn verify_candidate(
    vf: &Arc<ValueFunction>,
    perturbations: &[(String, Strategy)],
    mc: &McParams,
) -> Result<VerificationReport, HjbError> {
    let r = vf.realization();
    let horizon = vf.grid().horizon;
    let sim_err = |e: crate::sim::SimError| HjbError::Grid(alloc::format!("Monte Carlo setup: {e}"));
    if mc.n_paths < 2 {
        return Err(HjbError::Grid("Monte Carlo needs at least two paths".into()));
    }
    let sim = PathSimulator::new(r, &mc.z0, horizon, mc.dt, Measure::P, mc.seed).map_err(sim_err)?;
    let optimal = Strategy::Feedback(vf.clone());
    let utility = vf.utility();
    let rate = vf.rate();
    let samples: Vec<Result<Vec<f64>, crate::sim::SimError>> = par::map_range(mc.n_paths, |i| {
        let bundle = sim.path(i as u64);
        let mut out = Vec::with_capacity(perturbations.len() + 1);
        for s in core::iter::once(&optimal).chain(perturbations.iter().map(|p| &p.1)) {
            let x = wealth_path(r, s, mc.x0, rate, &bundle, WealthForm::Diffusion)?;
            out.push(utility.value(*x.last().expect("nonempty path")));
        }
        Ok(out)
    });
    let mut rows = Vec::with_capacity(mc.n_paths);
    for s in samples {
        rows.push(s.map_err(sim_err)?);
    }

    let opt = estimate(rows.iter().map(|row| row[0]));
    let results = perturbations
        .iter()
        .enumerate()
        .map(|(j, (label, _))| PerturbationResult {
            label: label.clone(),
            expected_utility: estimate(rows.iter().map(move |row| row[j + 1])),
            gap: estimate(rows.iter().map(move |row| row[0] - row[j + 1])),
        })
        .collect();

    Ok(VerificationReport {
        hjb_residual: vf.summary().max_residual,
        inequality_residual: inequality_residual(vf),
        value_pde: vf.value_at(0.0, mc.x0, &mc.z0),
        optimal: opt,
        perturbations: results,
    })
}
