use serde::{Deserialize, Serialize};

use crate::data::{DataError, TargetWindow};

/// Central moments of the raw Doppler values, normalized by `N - 1`.
///
/// The mean itself is deliberately not a feature: it depends on the aspect
/// angle between sensor and walking direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentFeatures {
    pub mu2: f64,
    pub mu3: f64,
    pub mu4: f64,
    /// First central absolute moment.
    pub abs_mu1: f64,
}

impl MomentFeatures {
    pub const NAMES: [&'static str; 4] = ["mu2", "mu3", "mu4", "abs_mu1"];

    pub fn from_values(values: &[f64]) -> Result<Self, DataError> {
        let n = values.len();
        if n < 2 {
            return Err(DataError::TooFewTargets { needed: 2, got: n });
        }
        let mean = crate::numeric::mean(values);
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            s1 += d.abs();
            s2 += d2;
            s3 += d2 * d;
            s4 += d2 * d2;
        }
        let norm = (n - 1) as f64;
        Ok(MomentFeatures { mu2: s2 / norm, mu3: s3 / norm, mu4: s4 / norm, abs_mu1: s1 / norm })
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.mu2, self.mu3, self.mu4, self.abs_mu1]
    }
}

pub fn moment_features(window: &TargetWindow) -> Result<MomentFeatures, DataError> {
    let values: Vec<f64> = window.dopplers().collect();
    MomentFeatures::from_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values_have_zero_moments() {
        let m = MomentFeatures::from_values(&[1.3; 50]).unwrap();
        assert_eq!(m.to_array(), [0.0; 4]);
    }

    #[test]
    fn two_point_example() {
        let m = MomentFeatures::from_values(&[-1.0, 1.0]).unwrap();
        assert_eq!(m.to_array(), [2.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn needs_two_values() {
        assert!(MomentFeatures::from_values(&[1.0]).is_err());
    }

    #[test]
    fn shift_invariant() {
        let v: Vec<f64> = (0..40).map(|i| ((i * 37 % 17) as f64 * 0.21).sin()).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + 3.5).collect();
        let a = MomentFeatures::from_values(&v).unwrap().to_array();
        let b = MomentFeatures::from_values(&shifted).unwrap().to_array();
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
