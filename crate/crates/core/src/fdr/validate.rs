// Probing validator for volatility specs. Bounds and Lipschitz constants are
// falsified, never proven: the probes only find violations.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FdrError, Functional, VolatilitySpec};
use crate::qexp::{closure, ExpTerm, QexpError, QuasiExponential};

const PROBE_SEED: u64 = 0x6864_7266_7072_6f62;
const RANDOM_PROBES: usize = 200;
const SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed value of `observed / declared` (≤ 1 means pass for
    /// bound and Lipschitz checks; rank ratio for independence).
    pub worst_ratio: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// `lim_{y→∞} v_i(y)` for every spanning function (`None` if it diverges).
    pub limits_at_infinity: Vec<Option<f64>>,
    /// Advisory only: every spanning function vanishes at infinity.
    pub decays_at_infinity: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }
}

fn random_qexp(rng: &mut ChaCha8Rng, alpha: f64, scale: f64) -> QuasiExponential {
    let nterms = rng.random_range(0..=2usize);
    let terms = (0..nterms)
        .map(|_| {
            let rate = alpha / 2.0 + rng.random_range(0.05..3.0);
            let deg = rng.random_range(0..=2usize);
            let coeffs = (0..=deg).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
            ExpTerm::new(rate, coeffs)
        })
        .collect();
    QuasiExponential::new(scale * rng.random_range(-1.0..1.0), terms)
}

fn bound_probes(alpha: f64, rng: &mut ChaCha8Rng) -> Vec<QuasiExponential> {
    let mut out = Vec::new();
    for k in -2..=6 {
        let c = 10f64.powi(k);
        out.push(QuasiExponential::constant_fn(c));
        out.push(QuasiExponential::constant_fn(-c));
    }
    for i in 0..RANDOM_PROBES {
        let scale = 10f64.powi((i % 7) as i32 - 1);
        out.push(random_qexp(rng, alpha, scale));
    }
    out
}

fn lipschitz_pairs(spec: &VolatilitySpec, alpha: f64, rng: &mut ChaCha8Rng) -> Vec<(QuasiExponential, QuasiExponential)> {
    let mut out = Vec::new();
    let mut centers: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.5).collect();
    for f in spec.phi.iter().flatten() {
        if let Functional::BoundedOfPoint { shape, .. } = f {
            centers.extend(shape.knots());
        }
    }
    for &c in &centers {
        for &delta in &[1e-3, 0.1] {
            out.push((
                QuasiExponential::constant_fn(c - delta),
                QuasiExponential::constant_fn(c + delta),
            ));
        }
    }
    for i in 0..RANDOM_PROBES {
        let h1 = random_qexp(rng, alpha, 10f64.powi((i % 4) as i32 - 1));
        let step = if i % 2 == 0 { 1e-3 } else { 1.0 };
        let h2 = h1.add(&random_qexp(rng, alpha, step));
        out.push((h1, h2));
    }
    out
}

fn membership_check(spec: &VolatilitySpec, alpha: f64) -> CheckResult {
    let mut worst = 0.0f64;
    let mut detail = String::from("all rates above alpha/2");
    let mut passed = true;
    for (i, v) in spec.spanning.iter().enumerate() {
        for t in v.terms() {
            worst = worst.max((alpha / 2.0) / t.rate);
        }
        if let Err(e) = v.check_membership(alpha) {
            if passed {
                detail = alloc::format!("spanning function {}: {}", i + 1, e);
            }
            passed = false;
        }
    }
    CheckResult { name: "membership", passed, worst_ratio: worst, detail }
}

fn independence_check(spec: &VolatilitySpec, alpha: f64) -> CheckResult {
    let p = spec.p();
    match closure(&spec.spanning, alpha) {
        Ok(_) => CheckResult {
            name: "independence",
            passed: true,
            worst_ratio: 1.0,
            detail: alloc::format!("rank {p} of {p}"),
        },
        Err(QexpError::Dependence { rank, expected }) => CheckResult {
            name: "independence",
            passed: false,
            worst_ratio: rank as f64 / expected as f64,
            detail: alloc::format!("numerical rank {rank} < {expected}"),
        },
        Err(e) => CheckResult {
            name: "independence",
            passed: false,
            worst_ratio: 0.0,
            detail: alloc::format!("{e}"),
        },
    }
}

fn declared(f: &Functional, global: f64, local: impl Fn(&Functional) -> Option<f64>) -> f64 {
    match local(f) {
        Some(l) => l.min(global),
        None => global,
    }
}

fn ratio(observed: f64, limit: f64) -> f64 {
    if observed == 0.0 {
        0.0
    } else if limit <= 0.0 {
        f64::INFINITY
    } else {
        observed / limit
    }
}

fn bound_check(spec: &VolatilitySpec, probes: &[QuasiExponential]) -> CheckResult {
    let mut worst = 0.0f64;
    let mut detail = String::from("no probe exceeded the declared bound");
    for (i, row) in spec.phi.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            let m = declared(f, spec.bound, |f| match f {
                Functional::BoundedOfPoint { bound, .. } => Some(*bound),
                Functional::Constant(_) => None,
            });
            for h in probes {
                let r = ratio(f.apply(h).abs(), m);
                if r > worst {
                    worst = r;
                    if r > 1.0 + SLACK {
                        detail = alloc::format!(
                            "phi[{}][{}] reached {:.6e} against declared M = {m:.6e}",
                            i + 1,
                            j + 1,
                            f.apply(h)
                        );
                    }
                }
            }
        }
    }
    CheckResult { name: "bound", passed: worst <= 1.0 + SLACK, worst_ratio: worst, detail }
}

fn lipschitz_check(
    spec: &VolatilitySpec,
    alpha: f64,
    pairs: &[(QuasiExponential, QuasiExponential)],
) -> CheckResult {
    let norms: Vec<f64> = pairs
        .iter()
        .map(|(a, b)| a.add(&b.scale(-1.0)).h_alpha_norm(alpha).unwrap_or(f64::NAN))
        .collect();
    let mut worst = 0.0f64;
    let mut detail = String::from("no probe pair exceeded the declared Lipschitz constant");
    for (i, row) in spec.phi.iter().enumerate() {
        for (j, f) in row.iter().enumerate() {
            let l = declared(f, spec.lipschitz, |f| match f {
                Functional::BoundedOfPoint { lipschitz, .. } => Some(*lipschitz),
                Functional::Constant(_) => None,
            });
            for ((h1, h2), &norm) in pairs.iter().zip(norms.iter()) {
                if !(norm > 0.0) {
                    continue;
                }
                let diff = (f.apply(h1) - f.apply(h2)).abs();
                let r = ratio(diff / norm, l);
                if r > worst {
                    worst = r;
                    if r > 1.0 + SLACK {
                        detail = alloc::format!(
                            "phi[{}][{}] slope {:.6e} against declared L = {l:.6e}",
                            i + 1,
                            j + 1,
                            diff / norm
                        );
                    }
                }
            }
        }
    }
    CheckResult { name: "lipschitz", passed: worst <= 1.0 + SLACK, worst_ratio: worst, detail }
}

/// Checks H_α membership, linear independence, the declared bound `M` and
/// Lipschitz constant `L` (by deterministic random probing), and reports
/// whether the spanning functions vanish at infinity.
pub fn validate_spec(spec: &VolatilitySpec, alpha: f64) -> Result<ValidationReport, FdrError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(FdrError::Qexp(QexpError::InvalidAlpha(alpha)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let membership = membership_check(spec, alpha);
    let independence = if membership.passed {
        independence_check(spec, alpha)
    } else {
        CheckResult {
            name: "independence",
            passed: false,
            worst_ratio: f64::NAN,
            detail: "skipped: membership failed".into(),
        }
    };
    let probes = bound_probes(alpha, &mut rng);
    let pairs = lipschitz_pairs(spec, alpha, &mut rng);
    let checks = vec![
        membership,
        independence,
        bound_check(spec, &probes),
        lipschitz_check(spec, alpha, &pairs),
    ];

    let limits_at_infinity: Vec<Option<f64>> =
        spec.spanning.iter().map(|v| v.limit_at_infinity()).collect();
    let decays_at_infinity = limits_at_infinity.iter().all(|l| *l == Some(0.0));
    let report = ValidationReport { checks, limits_at_infinity, decays_at_infinity };
    match report.first_failure() {
        Some(c) => Err(FdrError::Spec { assumption: c.name, report: report.clone() }),
        None => Ok(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::PointShape;

    fn gs_spanning() -> Vec<QuasiExponential> {
        vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)]
    }

    #[test]
    fn gs_spec_passes_with_advisory_decay() {
        let spec = VolatilitySpec::diagonal(gs_spanning(), &[0.3, 0.5]).unwrap();
        let report = validate_spec(&spec, 1.0).unwrap();
        assert!(report.passed());
        assert!(!report.decays_at_infinity);
        assert_eq!(report.limits_at_infinity, vec![Some(1.0), Some(0.0)]);
    }

    #[test]
    fn membership_failure_named() {
        let spec =
            VolatilitySpec::diagonal(vec![QuasiExponential::exponential(0.5, 1.0)], &[0.3]).unwrap();
        match validate_spec(&spec, 1.0) {
            Err(FdrError::Spec { assumption, .. }) => assert_eq!(assumption, "membership"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unbounded_identity_detected() {
        let f = Functional::BoundedOfPoint {
            maturity: 1.0,
            shape: PointShape::IdentityClipped { cap: None },
            bound: 10.0,
            lipschitz: 5.0,
        };
        let spec = VolatilitySpec::new(
            vec![QuasiExponential::exponential(1.0, 1.0)],
            vec![vec![f]],
            5.0,
            10.0,
        )
        .unwrap();
        match validate_spec(&spec, 1.0) {
            Err(FdrError::Spec { assumption, report }) => {
                assert_eq!(assumption, "bound");
                assert!(report.checks[2].worst_ratio > 1.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn understated_lipschitz_detected() {
        let f = Functional::BoundedOfPoint {
            maturity: 0.0,
            shape: PointShape::Logistic { scale: 1.0, steepness: 8.0, center: 2.0 },
            bound: 1.0,
            lipschitz: 1.0,
        };
        let spec = VolatilitySpec::new(vec![QuasiExponential::exponential(1.0, 1.0)], vec![vec![f]], 1.0, 1.0)
            .unwrap();
        match validate_spec(&spec, 1.0) {
            Err(FdrError::Spec { assumption, .. }) => assert_eq!(assumption, "lipschitz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dependence_reported() {
        let v = QuasiExponential::exponential(1.0, 1.0);
        let spec = VolatilitySpec::diagonal(vec![v.clone(), v.scale(3.0)], &[0.1, 0.2]).unwrap();
        match validate_spec(&spec, 1.0) {
            Err(FdrError::Spec { assumption, .. }) => assert_eq!(assumption, "independence"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
