use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use num_traits::Float;

use super::{stencil, HjbError, HjbGrid, Utility, MAX_DIM};
use crate::fdr::Realization;
use crate::sim::Policy;
use crate::{linalg, par};

/// `κ`-dependent quantities of one z-slice.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SliceCoeffs {
    pub k: [[f64; MAX_DIM]; MAX_DIM],
    pub pinv: [[f64; MAX_DIM]; MAX_DIM],
    pub kpsi: [f64; MAX_DIM],
    pub beta: [f64; MAX_DIM],
}

/// Discrete derivatives of `V` at one node.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Derivs {
    pub vx: f64,
    pub vxx: f64,
    pub vz: [f64; MAX_DIM],
    pub vzz: [[f64; MAX_DIM]; MAX_DIM],
    pub vxz: [f64; MAX_DIM],
}

pub(crate) struct Ctx<'a> {
    pub r: &'a Realization,
    pub utility: Utility,
    pub grid: &'a HjbGrid,
    pub rate: f64,
    pub d: usize,
    pub nx: usize,
    pub xs: Vec<f64>,
    pub dx: f64,
    pub nz: [usize; MAX_DIM],
    pub dz: [f64; MAX_DIM],
    pub stride: [usize; MAX_DIM],
}

impl<'a> Ctx<'a> {
    pub fn new(r: &'a Realization, utility: Utility, grid: &'a HjbGrid, rate: f64) -> Self {
        let d = r.dim();
        let nx = grid.x.n;
        let mut nz = [1; MAX_DIM];
        let mut dz = [1.0; MAX_DIM];
        let mut stride = [0; MAX_DIM];
        for j in 0..d {
            nz[j] = grid.z[j].n;
            dz[j] = grid.z[j].step();
        }
        for j in 0..d {
            stride[j] = nx * (j + 1..d).map(|l| nz[l]).product::<usize>();
        }
        Self { r, utility, grid, rate, d, nx, xs: grid.x.nodes(), dx: grid.x.step(), nz, dz, stride }
    }

    pub fn slices(&self) -> usize {
        self.grid.slices()
    }

    pub fn zpos(&self, s: usize) -> [usize; MAX_DIM] {
        let mut p = [0; MAX_DIM];
        let mut rest = s;
        for j in (0..self.d).rev() {
            p[j] = rest % self.nz[j];
            rest /= self.nz[j];
        }
        p
    }

    pub fn zcoords(&self, s: usize) -> Vec<f64> {
        let p = self.zpos(s);
        (0..self.d).map(|j| self.grid.z[j].node(p[j])).collect()
    }

    pub fn coeffs(&self, t: f64, s: usize) -> SliceCoeffs {
        let d = self.d;
        let z = self.zcoords(s);
        let kappa = self.r.kappa(t, &z);
        let k = &kappa * kappa.transpose();
        let beta = self.r.beta(t, &z);
        let kpsi = self.r.risk_premium(t, &z);
        let active: Vec<usize> = (0..d).filter(|&i| kappa.row(i).iter().any(|v| *v != 0.0)).collect();
        let mut c = SliceCoeffs::default();
        if !active.is_empty() {
            let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| k[(active[a], active[b])]);
            let p = linalg::pseudo_inverse(&sub, 1e-12);
            for (a, &i) in active.iter().enumerate() {
                for (b, &j) in active.iter().enumerate() {
                    c.pinv[i][j] = p[(a, b)];
                }
            }
        }
        for i in 0..d {
            c.kpsi[i] = kpsi[i];
            c.beta[i] = beta[i];
            for j in 0..d {
                c.k[i][j] = k[(i, j)];
            }
        }
        c
    }

    pub fn derivs(&self, v: &[f64], s: usize, i: usize, zp: &[usize; MAX_DIM]) -> Derivs {
        let idx = s * self.nx + i;
        let sx = stencil::first(i, self.nx, self.dx);
        let mut out = Derivs {
            vx: stencil::apply(v, idx, 1, &sx),
            vxx: stencil::apply(v, idx, 1, &stencil::second(i, self.nx, self.dx)),
            ..Derivs::default()
        };
        let mut sz = [[(0isize, 0.0f64); 3]; MAX_DIM];
        for j in 0..self.d {
            sz[j] = stencil::first(zp[j], self.nz[j], self.dz[j]);
            out.vz[j] = stencil::apply(v, idx, self.stride[j], &sz[j]);
            out.vzz[j][j] = stencil::apply(v, idx, self.stride[j], &stencil::second(zp[j], self.nz[j], self.dz[j]));
            out.vxz[j] = stencil::mixed(v, idx, self.stride[j], &sz[j], 1, &sx);
            for l in 0..j {
                let m = stencil::mixed(v, idx, self.stride[j], &sz[j], self.stride[l], &sz[l]);
                out.vzz[j][l] = m;
                out.vzz[l][j] = m;
            }
        }
        out
    }

    /// `γ*` at a node; `None` when `V_xx ≥ 0`.
    pub fn gamma(&self, dv: &Derivs, c: &SliceCoeffs, out: &mut [f64]) -> bool {
        if !(dv.vxx < 0.0) {
            return false;
        }
        let d = self.d;
        let mut rhs = [0.0; MAX_DIM];
        for i in 0..d {
            rhs[i] = dv.vx * c.kpsi[i] + (0..d).map(|j| c.k[i][j] * dv.vxz[j]).sum::<f64>();
        }
        for i in 0..d {
            out[i] = -(0..d).map(|j| c.pinv[i][j] * rhs[j]).sum::<f64>() / dv.vxx;
        }
        true
    }

    /// Controlled generator `V_x(rx + γᵀκψ) + ½V_xx γᵀKγ + γᵀK∇V_x + βᵀ∇V + ½tr(K∇²V)`.
    pub fn generator(&self, dv: &Derivs, c: &SliceCoeffs, x: f64, g: &[f64]) -> f64 {
        let d = self.d;
        let mut kg = [0.0; MAX_DIM];
        for i in 0..d {
            kg[i] = (0..d).map(|j| c.k[i][j] * g[j]).sum();
        }
        let gkg: f64 = (0..d).map(|i| g[i] * kg[i]).sum();
        let gkpsi: f64 = (0..d).map(|i| g[i] * c.kpsi[i]).sum();
        let mut out = dv.vx * (self.rate * x + gkpsi) + 0.5 * dv.vxx * gkg;
        for j in 0..d {
            out += kg[j] * dv.vxz[j] + c.beta[j] * dv.vz[j];
            for l in 0..d {
                out += 0.5 * c.k[j][l] * dv.vzz[j][l];
            }
        }
        out
    }

    pub fn interior_x(&self) -> core::ops::RangeInclusive<usize> {
        interior(self.nx)
    }

    pub fn interior_slice(&self, zp: &[usize; MAX_DIM]) -> bool {
        (0..self.d).all(|j| interior(self.nz[j]).contains(&zp[j]))
    }
}

/// Middle 80% of `0..n` (at least the non-edge nodes).
pub(crate) fn interior(n: usize) -> core::ops::RangeInclusive<usize> {
    let last = (n - 1) as f64;
    let lo = ((0.1 * last).ceil() as usize).max(1);
    let hi = ((0.9 * last).floor() as usize).min(n - 2);
    lo..=hi
}

/// One stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub t: f64,
    /// `V` on the grid, z-slices of `nx` values (last z axis fastest).
    pub values: Vec<f64>,
    /// `γ*` at every node, `d` values per node.
    pub policy: Vec<f64>,
    /// Backward difference `(V(t+Δt) − V(t))/Δt` (zeros when unavailable).
    pub vt: Vec<f64>,
    /// Max interior `|V_t + sup_γ L^γ V| / max |V|` at this level.
    pub residual: f64,
}

/// Solution of the HJB equation at the stored levels.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    grid: HjbGrid,
    utility: Utility,
    rate: f64,
    d: usize,
    levels: Vec<Level>,
    realization: Realization,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSummary {
    pub max_residual: f64,
    pub levels: usize,
    pub nodes: usize,
    pub time_steps: usize,
}

impl ValueFunction {
    /// Reassembles a solution from stored levels (for instance read back
    /// from disk). Levels must be sorted by time and sized to the grid.
    pub fn from_levels(
        r: &Realization,
        utility: Utility,
        grid: HjbGrid,
        rate: f64,
        levels: Vec<Level>,
    ) -> Result<Self, HjbError> {
        utility.validate()?;
        grid.validate(r.dim(), &utility)?;
        let (d, nodes) = (r.dim(), grid.nodes());
        if levels.is_empty() {
            return Err(HjbError::Grid("no levels".into()));
        }
        for (k, l) in levels.iter().enumerate() {
            if l.values.len() != nodes || l.vt.len() != nodes || l.policy.len() != nodes * d {
                return Err(HjbError::Grid(alloc::format!("level {k} at t = {} does not match the grid", l.t)));
            }
            if k > 0 && !(l.t > levels[k - 1].t) {
                return Err(HjbError::Grid("levels must be strictly increasing in time".into()));
            }
        }
        Ok(Self { grid, utility, rate, d, levels, realization: r.clone() })
    }

    pub fn grid(&self) -> &HjbGrid {
        &self.grid
    }

    pub fn utility(&self) -> Utility {
        self.utility
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    /// Stored levels in increasing time.
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// The stored level closest to `t`.
    pub fn level_at(&self, t: f64) -> &Level {
        self.levels
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap_or(core::cmp::Ordering::Equal))
            .expect("at least one level")
    }

    pub fn summary(&self) -> ValueSummary {
        ValueSummary {
            max_residual: self.levels.iter().map(|l| l.residual).fold(0.0, f64::max),
            levels: self.levels.len(),
            nodes: self.grid.nodes(),
            time_steps: self.grid.time_steps,
        }
    }

    // Multilinear interpolation of component `comp` of a field with `width`
    // values per node.
    fn interp(&self, field: &[f64], width: usize, comp: usize, x: f64, z: &[f64]) -> f64 {
        let nx = self.grid.x.n;
        let (ix, wx) = self.grid.x.locate(x);
        let mut cells = [(0usize, 0.0f64); MAX_DIM];
        for j in 0..self.d {
            cells[j] = self.grid.z[j].locate(z[j]);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.d) {
            let mut s = 0usize;
            let mut w = 1.0;
            for j in 0..self.d {
                let up = (corner >> j) & 1;
                s = s * self.grid.z[j].n + cells[j].0 + up;
                w *= if up == 1 { cells[j].1 } else { 1.0 - cells[j].1 };
            }
            if w == 0.0 {
                continue;
            }
            let base = s * nx + ix;
            let lo = field[base * width + comp];
            let hi = field[(base + 1) * width + comp];
            acc += w * (lo * (1.0 - wx) + hi * wx);
        }
        acc
    }

    fn bracket(&self, t: f64) -> (usize, usize, f64) {
        let n = self.levels.len();
        if n == 1 || t <= self.levels[0].t {
            return (0, 0, 0.0);
        }
        if t >= self.levels[n - 1].t {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.levels.iter().position(|l| l.t >= t).unwrap_or(n - 1);
        let lo = hi - 1;
        let w = (t - self.levels[lo].t) / (self.levels[hi].t - self.levels[lo].t);
        (lo, hi, w)
    }

    /// `V(t, x, z)` by multilinear interpolation (clamped to the grid box),
    /// linear in time between stored levels.
    pub fn value_at(&self, t: f64, x: f64, z: &[f64]) -> f64 {
        let (lo, hi, w) = self.bracket(t);
        let a = self.interp(&self.levels[lo].values, 1, 0, x, z);
        if w == 0.0 {
            return a;
        }
        let b = self.interp(&self.levels[hi].values, 1, 0, x, z);
        a * (1.0 - w) + b * w
    }

    pub fn policy_at(&self, t: f64, x: f64, z: &[f64], out: &mut [f64]) {
        let (lo, hi, w) = self.bracket(t);
        for c in 0..self.d {
            let a = self.interp(&self.levels[lo].policy, self.d, c, x, z);
            out[c] = if w == 0.0 { a } else { a * (1.0 - w) + self.interp(&self.levels[hi].policy, self.d, c, x, z) * w };
        }
    }
}

impl Policy for ValueFunction {
    fn gamma(&self, t: f64, x: f64, z: &[f64], out: &mut [f64]) {
        self.policy_at(t, x, z, out);
    }
}

fn thomas(lower: &[f64], diag: &mut [f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    for i in 1..n {
        let m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
    }
}

fn policy_field(ctx: &Ctx<'_>, v: &[f64], coeffs: &[SliceCoeffs], t: f64) -> Result<Vec<f64>, HjbError> {
    let (d, nx) = (ctx.d, ctx.nx);
    let slices: Vec<Result<Vec<f64>, HjbError>> = par::map_range(ctx.slices(), |s| {
        let zp = ctx.zpos(s);
        let mut out = vec![0.0; nx * d];
        for i in 0..nx {
            let dv = ctx.derivs(v, s, i, &zp);
            if !ctx.gamma(&dv, &coeffs[s], &mut out[i * d..(i + 1) * d]) {
                return Err(HjbError::Concavity { t, x: ctx.xs[i], vxx: dv.vxx });
            }
        }
        Ok(out)
    });
    let mut field = Vec::with_capacity(ctx.grid.nodes() * d);
    for s in slices {
        field.extend(s?);
    }
    Ok(field)
}

fn level_residual(ctx: &Ctx<'_>, v: &[f64], vt: &[f64], coeffs: &[SliceCoeffs], policy: &[f64]) -> f64 {
    let d = ctx.d;
    let per_slice: Vec<(f64, f64)> = par::map_range(ctx.slices(), |s| {
        let zp = ctx.zpos(s);
        if !ctx.interior_slice(&zp) {
            return (0.0, 0.0);
        }
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for i in ctx.interior_x() {
            let idx = s * ctx.nx + i;
            let dv = ctx.derivs(v, s, i, &zp);
            let g = &policy[idx * d..(idx + 1) * d];
            let res = vt[idx] + ctx.generator(&dv, &coeffs[s], ctx.xs[i], g);
            worst = worst.max(res.abs());
            scale = scale.max(v[idx].abs());
        }
        (worst, scale)
    });
    let worst = per_slice.iter().map(|p| p.0).fold(0.0, f64::max);
    let scale = per_slice.iter().map(|p| p.1).fold(0.0, f64::max);
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

fn all_coeffs(ctx: &Ctx<'_>, t: f64) -> Vec<SliceCoeffs> {
    par::map_range(ctx.slices(), |s| ctx.coeffs(t, s))
}

fn check_explicit_stability(ctx: &Ctx<'_>, coeffs: &[SliceCoeffs], dt: f64) -> Result<(), HjbError> {
    for c in coeffs {
        let load: f64 = (0..ctx.d)
            .map(|j| c.k[j][j] / (ctx.dz[j] * ctx.dz[j]) + c.beta[j].abs() / ctx.dz[j])
            .sum();
        if dt * load > 1.0 {
            return Err(HjbError::Grid(alloc::format!(
                "explicit z-terms unstable: dt * sum(K_jj/dz^2 + |beta_j|/dz) = {:.3} > 1; use more time steps or a coarser z grid",
                dt * load
            )));
        }
    }
    Ok(())
}

// Advances one step backward: `prev` holds V(t + Δt), returns V(t).
fn step(
    ctx: &Ctx<'_>,
    prev: &[f64],
    coeffs: &[SliceCoeffs],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>, HjbError> {
    let (d, nx, dx) = (ctx.d, ctx.nx, ctx.dx);
    let tau = ctx.grid.horizon - t;
    let growth = (ctx.rate * tau).exp();
    let lo_edge = ctx.utility.edge_map(ctx.xs[0], ctx.xs[1], growth);
    let hi_edge = ctx.utility.edge_map(ctx.xs[nx - 1], ctx.xs[nx - 2], growth);

    let slices: Vec<Result<Vec<f64>, HjbError>> = par::map_range(ctx.slices(), |s| {
        let c = &coeffs[s];
        let zp = ctx.zpos(s);
        let mut lower = vec![0.0; nx];
        let mut diag = vec![1.0; nx];
        let mut upper = vec![0.0; nx];
        let mut rhs = vec![0.0; nx];
        let mut g = [0.0; MAX_DIM];
        upper[0] = -lo_edge.0;
        rhs[0] = lo_edge.1;
        lower[nx - 1] = -hi_edge.0;
        rhs[nx - 1] = hi_edge.1;
        for i in 1..nx - 1 {
            let idx = s * nx + i;
            let mut dv = ctx.derivs(prev, s, i, &zp);
            if !ctx.gamma(&dv, c, &mut g) {
                return Err(HjbError::Concavity { t, x: ctx.xs[i], vxx: dv.vxx });
            }
            for j in 0..d {
                if c.beta[j].abs() * ctx.dz[j] > c.k[j][j] {
                    let st = stencil::upwind(zp[j], ctx.nz[j], ctx.dz[j], c.beta[j]);
                    dv.vz[j] = stencil::apply(prev, idx, ctx.stride[j], &st);
                }
            }
            let mut kg = [0.0; MAX_DIM];
            for a in 0..d {
                kg[a] = (0..d).map(|b| c.k[a][b] * g[b]).sum();
            }
            let drift = ctx.rate * ctx.xs[i] + (0..d).map(|a| g[a] * c.kpsi[a]).sum::<f64>();
            let diff = 0.5 * (0..d).map(|a| g[a] * kg[a]).sum::<f64>();

            let mut explicit = 0.0;
            for j in 0..d {
                explicit += c.beta[j] * dv.vz[j] + kg[j] * dv.vxz[j];
                for l in 0..d {
                    explicit += 0.5 * c.k[j][l] * dv.vzz[j][l];
                }
            }

            let (mut am, mut a0, mut ap) = (diff / (dx * dx), -2.0 * diff / (dx * dx), diff / (dx * dx));
            if diff > 0.0 && drift.abs() * dx <= 2.0 * diff {
                am -= drift / (2.0 * dx);
                ap += drift / (2.0 * dx);
            } else if drift >= 0.0 {
                a0 -= drift / dx;
                ap += drift / dx;
            } else {
                a0 += drift / dx;
                am -= drift / dx;
            }
            lower[i] = -dt * am;
            diag[i] = 1.0 - dt * a0;
            upper[i] = -dt * ap;
            rhs[i] = prev[idx] + dt * explicit;
        }
        thomas(&lower, &mut diag, &upper, &mut rhs);
        Ok(rhs)
    });
    let mut out = Vec::with_capacity(prev.len());
    for s in slices {
        out.extend(s?);
    }
    Ok(out)
}

fn check_values(v: &[f64], reference: f64, t: f64) -> Result<(), HjbError> {
    let mut worst = 0.0f64;
    for &x in v {
        if !x.is_finite() {
            return Err(HjbError::Divergence { t, reason: "non-finite value".into() });
        }
        worst = worst.max(x.abs());
    }
    if worst > 1e12 * reference.max(1.0) {
        return Err(HjbError::Divergence {
            t,
            reason: alloc::format!("|V| reached {worst:.3e} against terminal scale {reference:.3e}"),
        });
    }
    Ok(())
}

/// Backward solve on `[t_from, t_to]` of the grid's time axis, starting
/// from `terminal` (defaults to `u(x)`) at `t_to`.
pub fn solve_window(
    r: &Realization,
    utility: Utility,
    grid: &HjbGrid,
    rate: f64,
    t_from: f64,
    t_to: f64,
    terminal: Option<&[f64]>,
) -> Result<ValueFunction, HjbError> {
    utility.validate()?;
    grid.validate(r.dim(), &utility)?;
    let ctx = Ctx::new(r, utility, grid, rate);
    let nodes = grid.nodes();
    let dt = grid.dt();
    let (k_from, k_to) = if dt > 0.0 {
        ((t_from / dt).round() as usize, (t_to / dt).round() as usize)
    } else {
        (0, 0)
    };
    if !(t_from <= t_to) || k_to > grid.time_steps {
        return Err(HjbError::Grid(alloc::format!(
            "window [{t_from}, {t_to}] outside [0, {}]",
            grid.horizon
        )));
    }
    let time = |k: usize| if k == grid.time_steps { grid.horizon } else { k as f64 * dt };

    let mut cur: Vec<f64> = match terminal {
        Some(v) if v.len() == nodes => v.to_vec(),
        Some(v) => {
            return Err(HjbError::Grid(alloc::format!("terminal data has {} values, grid has {nodes}", v.len())))
        }
        None => (0..nodes).map(|q| utility.value(ctx.xs[q % ctx.nx])).collect(),
    };
    let reference = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check_values(&cur, reference, time(k_to))?;

    let time_dependent = !r.is_gaussian();
    let mut coeffs = all_coeffs(&ctx, time(k_to));
    if k_to > k_from {
        check_explicit_stability(&ctx, &coeffs, dt)?;
    }
    let snapshot = |k: usize| k == k_from || k == k_to || k % grid.snapshot_stride == 0;

    let mut levels: Vec<Level> = Vec::new();
    let mut pending_top = Some(cur.clone());
    if k_to == k_from {
        let policy = policy_field(&ctx, &cur, &coeffs, time(k_to))?;
        levels.push(Level { t: time(k_to), vt: vec![0.0; nodes], residual: 0.0, values: cur.clone(), policy });
        pending_top = None;
    }

    for k in (k_from..k_to).rev() {
        let t = time(k);
        let step_coeffs = if time_dependent {
            let c = all_coeffs(&ctx, t);
            check_explicit_stability(&ctx, &c, dt)?;
            c
        } else {
            coeffs.clone()
        };
        let next = step(&ctx, &cur, &step_coeffs, t, dt)?;
        check_values(&next, reference, t)?;
        let vt: Vec<f64> = cur.iter().zip(next.iter()).map(|(a, b)| (a - b) / dt).collect();
        if let Some(top) = pending_top.take() {
            let top_coeffs = if time_dependent { all_coeffs(&ctx, time(k + 1)) } else { coeffs.clone() };
            let policy = policy_field(&ctx, &top, &top_coeffs, time(k + 1))?;
            let residual = level_residual(&ctx, &top, &vt, &top_coeffs, &policy);
            levels.push(Level { t: time(k + 1), values: top, policy, vt: vt.clone(), residual });
        }
        if snapshot(k) {
            let policy = policy_field(&ctx, &next, &step_coeffs, t)?;
            let residual = level_residual(&ctx, &next, &vt, &step_coeffs, &policy);
            levels.push(Level { t, values: next.clone(), policy, vt, residual });
        }
        coeffs = step_coeffs;
        cur = next;
    }
    levels.reverse();
    Ok(ValueFunction { grid: grid.clone(), utility, rate, d: r.dim(), levels, realization: r.clone() })
}

/// Solves on `[0, T]` from `V(T, x, z) = u(x)`.
pub fn solve_hjb(r: &Realization, utility: Utility, grid: &HjbGrid, rate: f64) -> Result<ValueFunction, HjbError> {
    solve_window(r, utility, grid, rate, 0.0, grid.horizon, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, VolatilitySpec};
    use crate::hjb::Axis;
    use crate::qexp::QuasiExponential;

    fn gs(psi: [f64; 2]) -> Realization {
        let spec = VolatilitySpec::diagonal(
            vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)],
            &[0.3, 0.5],
        )
        .unwrap();
        build_realization(&spec, &psi, QuasiExponential::constant_fn(10.0), 0.5, 1.0).unwrap()
    }

    fn small_grid(horizon: f64, steps: usize) -> HjbGrid {
        HjbGrid {
            x: Axis::new(-2.0, 4.0, 41),
            z: vec![Axis::new(-1.5, 1.5, 9), Axis::new(-1.5, 1.5, 9)],
            horizon,
            time_steps: steps,
            snapshot_stride: 5,
        }
    }

    #[test]
    fn zero_horizon_is_terminal() {
        let r = gs([0.2, 0.1]);
        let u = Utility::Exponential { rho: 1.0 };
        let vf = solve_hjb(&r, u, &small_grid(0.0, 0), 0.02).unwrap();
        assert_eq!(vf.levels().len(), 1);
        for (q, v) in vf.levels()[0].values.iter().enumerate() {
            assert_eq!(*v, u.value(vf.grid().x.node(q % 41)));
        }
    }

    #[test]
    fn no_premium_means_riskless_value() {
        let r = gs([0.0, 0.0]);
        let (rho, rate, horizon) = (1.0, 0.03, 1.0);
        let u = Utility::Exponential { rho };
        let vf = solve_hjb(&r, u, &small_grid(horizon, 50), rate).unwrap();
        let l0 = &vf.levels()[0];
        let growth = (rate * horizon).exp();
        for i in interior(41) {
            let x = vf.grid().x.node(i);
            let exact = u.value(x * growth);
            let got = l0.values[40 * 41 + i];
            // No diffusion, so the x-drift is upwinded: first-order error
            // about T·|rx|·Δx/2·ρ².
            let tol = 1.5 * horizon * (rate * x).abs() * 0.15 / 2.0 + 1e-6;
            assert!(((got - exact) / exact).abs() < tol, "x {x}: {got} vs {exact}");
        }
        assert!(l0.policy.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn grid_errors() {
        let r = gs([0.2, 0.1]);
        let mut g = small_grid(1.0, 10);
        g.z[0].n = 3;
        assert!(matches!(solve_hjb(&r, Utility::Log, &small_grid(1.0, 10), 0.0), Err(HjbError::Grid(_))));
        assert!(matches!(
            solve_hjb(&r, Utility::Exponential { rho: 1.0 }, &g, 0.0),
            Err(HjbError::Grid(_))
        ));
        let mut fine = small_grid(1.0, 2);
        fine.z = vec![Axis::new(-1.5, 1.5, 81), Axis::new(-1.5, 1.5, 81)];
        assert!(matches!(
            solve_hjb(&r, Utility::Exponential { rho: 1.0 }, &fine, 0.0),
            Err(HjbError::Grid(_))
        ));
    }
}
