//! Finite-dimensional realizations of futures-price-curve dynamics.
//!
//! The futures curve `f_t(y)` (Musiela parametrization, `y` = time to
//! maturity) evolves in an exponentially weighted Sobolev space `H_α`.
//! When the volatility is spanned by quasi-exponential functions the
//! curve stays on an affine leaf
//!
//! ```text
//! f_t = h0(· + t0 + t) + Σ_i Z^i_t v_i
//! ```
//!
//! driven by a `d`-dimensional diffusion `Z`. This crate builds that
//! realization, simulates `Z`, curves and futures wealth, and solves the
//! induced finite-dimensional utility-maximization problem with a
//! finite-difference HJB solver plus a Monte Carlo verification check.
//!
//! Module map:
//!
//! * [`qexp`]: exact quasi-exponential algebra and derivative closure.
//! * [`fdr`]: volatility specifications, realizations, invariance checks.
//! * [`sim`]: coordinate paths, curve reconstruction, SPDE grid oracle,
//!   benchmark-state extraction, wealth and admissibility diagnostics.
//! * [`hjb`]: utilities, pointwise maximizer, HJB solver, verification.
//!
//! The crate is `no_std` (with `alloc`). Enable the `parallel` feature to
//! spread path simulation and HJB steps over a rayon pool; results do not
//! depend on the number of workers.

#![no_std]
#![forbid(unsafe_code)]
// NaN-rejecting `!(x > 0.0)` guards and index loops over small matrices are intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
// `num_traits::Float` supplies float math without std; whenever std is in the
// build graph the inherent methods shadow it and the imports look unused.
#![allow(unused_imports)]

extern crate alloc;
#[cfg(any(test, feature = "parallel"))]
extern crate std;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod fdr;
pub mod hjb;
pub mod linalg;
mod par;
pub mod qexp;
pub mod sim;

pub use fdr::{
    build_realization, check_invariance, check_invariance_with, validate_spec, CoefficientField,
    CovSpectrum, FdrError, Functional, InvarianceGrid, InvarianceReport, PointShape, Realization,
    ValidationReport, VolatilitySpec,
};
pub use hjb::{
    gaussian_z_axes, pointwise_maximizer, solve_hjb, solve_window, standard_perturbations, verify_candidate, Axis, HjbError,
    HjbGrid, Level, McParams, MonteCarloEstimate, PerturbationResult, Utility, ValueFunction, ValueSummary,
    VerificationReport,
};
pub use qexp::{closure, ClosureBasis, ExpTerm, QexpError, QuasiExponential};
pub use sim::{
    admissibility_estimate, extract_state, implied_spot, path_rng, reconstruct_curve, simulate_spde_grid,
    simulate_spde_grid_seeded, simulate_wealth, simulate_z, wealth_path, AdmissibilityReport, CurveSnapshot,
    Measure, OffsetPolicy, PathBundle, PathSimulator, Policy, Scheme, Seasonality, SimError, Strategy,
    WealthForm,
};
