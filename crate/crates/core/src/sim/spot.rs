use core::f64::consts::PI;
use num_traits::Float;

use super::SimError;
use crate::fdr::Realization;

/// Deterministic seasonal level `Λ(t) = mean + amplitude·sin(2π·frequency·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Seasonality {
    pub mean: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Seasonality {
    pub fn value(&self, t: f64) -> f64 {
        self.mean + self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
    }
}

/// Spot price `Λ(t) + z_1 + z_2` of the two-factor model.
pub fn implied_spot(r: &Realization, z: &[f64], season: &Seasonality, t: f64) -> Result<f64, SimError> {
    if r.dim() != 2 || z.len() != 2 {
        return Err(SimError::Shape(alloc::format!(
            "implied spot needs a two-factor model, got d = {} and {} coordinates",
            r.dim(),
            z.len()
        )));
    }
    Ok(season.value(t) + z[0] + z[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdr::{build_realization, VolatilitySpec};
    use crate::qexp::QuasiExponential;
    use alloc::vec;

    fn model(spanning: alloc::vec::Vec<QuasiExponential>) -> Realization {
        let sig = vec![0.3; spanning.len()];
        let spec = VolatilitySpec::diagonal(spanning, &sig).unwrap();
        let psi = vec![0.0; spec.n()];
        build_realization(&spec, &psi, QuasiExponential::constant_fn(10.0), 0.5, 1.0).unwrap()
    }

    #[test]
    fn spot_examples() {
        let r = model(vec![QuasiExponential::constant_fn(1.0), QuasiExponential::exponential(1.0, 1.0)]);
        assert_eq!(implied_spot(&r, &[0.0, 0.0], &Seasonality::default(), 0.3).unwrap(), 0.0);
        let s = Seasonality { mean: 0.0, amplitude: 2.0, frequency: 1.0, phase: 0.0 };
        let t = 0.1;
        assert_eq!(implied_spot(&r, &[1.0, 2.0], &s, t).unwrap(), s.value(t) + 3.0);
        let three = model(vec![QuasiExponential::poly_exp(1.0, vec![0.0, 0.0, 1.0])]);
        assert!(matches!(implied_spot(&three, &[0.0; 3], &s, t), Err(SimError::Shape(_))));
    }
}
