//! Model files: a JSON document that determines one realization.
//!
//! ```json
//! {
//!   "alpha": 1.0,
//!   "h0": { "constant": 40.0, "terms": [{ "rate": 1.0, "coeffs": [-5.0] }] },
//!   "t0": 0.0,
//!   "psi": [0.2, 0.1],
//!   "volatility": {
//!     "spanning": [{ "constant": 1.0 }, { "terms": [{ "rate": 1.0, "coeffs": [1.0] }] }],
//!     "phi": [[{ "type": "constant", "value": 0.3 }, { "type": "constant", "value": 0.0 }],
//!             [{ "type": "constant", "value": 0.0 }, { "type": "constant", "value": 0.5 }]],
//!     "L": 0.0,
//!     "M": 0.5
//!   },
//!   "rate": 0.02,
//!   "seasonal": { "mean": 0.0, "amplitude": 2.0, "frequency": 1.0, "phase": 0.0 }
//! }
//! ```

use fdrcurve_core::sim::Seasonality;
use fdrcurve_core::{
    build_realization, ExpTerm, Functional, PointShape, QuasiExponential, Realization, VolatilitySpec,
};
use serde::{Deserialize, Serialize};

use crate::MarketError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub rate: f64,
    pub coeffs: Vec<f64>,
}

/// `constant + Σ p(y) e^{-rate·y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QexpSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<TermSpec>,
}

impl QexpSpec {
    pub fn to_core(&self) -> QuasiExponential {
        QuasiExponential::new(
            self.constant,
            self.terms.iter().map(|t| ExpTerm::new(t.rate, t.coeffs.clone())).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    IdentityClipped {
        #[serde(default)]
        cap: Option<f64>,
    },
    Logistic { scale: f64, steepness: f64, center: f64 },
    AffineClipped { slope: f64, intercept: f64, cap: f64 },
}

impl ShapeSpec {
    fn to_core(&self) -> PointShape {
        match *self {
            ShapeSpec::IdentityClipped { cap } => PointShape::IdentityClipped { cap },
            ShapeSpec::Logistic { scale, steepness, center } => PointShape::Logistic { scale, steepness, center },
            ShapeSpec::AffineClipped { slope, intercept, cap } => PointShape::AffineClipped { slope, intercept, cap },
        }
    }
}

/// Catalog entry for one `Φ_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    Constant { value: f64 },
    /// `shape(h(maturity))`.
    Point { maturity: f64, shape: ShapeSpec, bound: f64, lipschitz: f64 },
}

impl FunctionalSpec {
    fn to_core(&self) -> Functional {
        match self {
            FunctionalSpec::Constant { value } => Functional::Constant(*value),
            FunctionalSpec::Point { maturity, shape, bound, lipschitz } => Functional::BoundedOfPoint {
                maturity: *maturity,
                shape: shape.to_core(),
                bound: *bound,
                lipschitz: *lipschitz,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolatilityFile {
    pub spanning: Vec<QexpSpec>,
    pub phi: Vec<Vec<FunctionalSpec>>,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(rename = "M")]
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeasonalSpec {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpecFile {
    pub alpha: f64,
    pub h0: QexpSpec,
    #[serde(default)]
    pub t0: f64,
    pub psi: Vec<f64>,
    pub volatility: VolatilityFile,
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seasonal: Option<SeasonalSpec>,
}

impl ModelSpecFile {
    pub fn volatility_spec(&self) -> Result<VolatilitySpec, MarketError> {
        let v = &self.volatility;
        Ok(VolatilitySpec::new(
            v.spanning.iter().map(QexpSpec::to_core).collect(),
            v.phi.iter().map(|row| row.iter().map(FunctionalSpec::to_core).collect()).collect(),
            v.lipschitz,
            v.bound,
        )?)
    }

    /// Validates the volatility and builds the realization.
    pub fn realization(&self) -> Result<Realization, MarketError> {
        let spec = self.volatility_spec()?;
        Ok(build_realization(&spec, &self.psi, self.h0.to_core(), self.t0, self.alpha)?)
    }

    pub fn seasonality(&self) -> Seasonality {
        self.seasonal
            .map(|s| Seasonality { mean: s.mean, amplitude: s.amplitude, frequency: s.frequency, phase: s.phase })
            .unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }
}

/// Parses a model file and checks that it builds a realization.
pub fn parse_model(text: &str) -> Result<ModelSpecFile, MarketError> {
    if text.trim().is_empty() {
        return Err(MarketError::Parse { context: "model".into(), message: "empty model file".into() });
    }
    let spec: ModelSpecFile = serde_json::from_str(text).map_err(|e| MarketError::Parse {
        context: format!("model, line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if !spec.rate.is_finite() {
        return Err(MarketError::Parse { context: "model, field rate".into(), message: "rate must be finite".into() });
    }
    spec.realization()?;
    Ok(spec)
}

/// Parses without building the realization (for inspection of invalid files).
pub fn parse_model_unchecked(text: &str) -> Result<ModelSpecFile, MarketError> {
    serde_json::from_str(text).map_err(|e| MarketError::Parse {
        context: format!("model, line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })
}

pub const GS_TWO_FACTOR: &str = include_str!("../fixtures/gs_two_factor.json");
pub const BJORK_GOMBANI: &str = include_str!("../fixtures/bjork_gombani.json");

/// Bundled fixture text by name.
pub fn fixture(name: &str) -> Option<&'static str> {
    match name {
        "gs_two_factor" => Some(GS_TWO_FACTOR),
        "bjork_gombani" => Some(BJORK_GOMBANI),
        _ => None,
    }
}
