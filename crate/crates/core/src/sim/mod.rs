//! Simulation of the coordinate process, curves and futures wealth.
//!
//! Paths are generated per index from a ChaCha20 stream selected by
//! `(seed, path_index)`, so any subset of paths can be reproduced alone and
//! the output never depends on the number of worker threads.

mod curve;
mod paths;
mod spde;
mod spot;
mod state;
mod wealth;

pub use curve::{reconstruct_curve, CurveSnapshot};
pub use paths::{path_rng, simulate_z, Measure, PathBundle, PathSimulator, Scheme};
pub use spde::{simulate_spde_grid, simulate_spde_grid_seeded};
pub use spot::{implied_spot, Seasonality};
pub use state::{extract_state, MAX_CONDITION};
pub use wealth::{
    admissibility_estimate, simulate_wealth, wealth_path, AdmissibilityReport, DoublingStep,
    OffsetPolicy, Policy, Strategy, WealthForm,
};

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step {dt} must be positive and no larger than the horizon {horizon}")]
    Step { dt: f64, horizon: f64 },
    #[error("CFL violated: dt = {dt} exceeds dy = {dy}")]
    Cfl { dt: f64, dy: f64 },
    #[error("benchmark matrix is singular or ill-conditioned (condition number {condition:e})")]
    Singular { condition: f64 },
    #[error("wealth dynamics need market-measure (P) paths")]
    Measure,
    #[error("shape mismatch: {0}")]
    Shape(String),
}
