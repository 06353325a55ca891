//! Body height from walking speed and stride length.
//!
//! The closed-form baseline follows the empirical walking relation between
//! thigh height `h_t = 0.53 h`, relative stride `l_s / h_t = 1.346 sqrt(v / h_t)`,
//! which resolves to `h = l_s^2 / (1.346^2 * 0.53 * v)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STRIDE_COEFF: f64 = 1.346;
pub const THIGH_RATIO: f64 = 0.53;
/// Below this speed stride periodicity is unresolvable in a 3 s window.
pub const MIN_WALK_SPEED: f64 = 0.2;
/// Accepted output range (exclusive), meters.
pub const HEIGHT_GATE: (f64, f64) = (0.5, 2.5);

pub const FEATURE_COUNT: usize = 8;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["v", "l", "v*l", "v^2*l", "v*l^2", "l/v", "l/v^2", "l^2/v"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeightError {
    #[error("speed {0:.3} m/s is outside the walking regime")]
    OutOfRegime(f64),
    #[error("stride length must be positive and finite, got {0}")]
    InvalidStride(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightSource {
    Model,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightEstimate {
    pub h: f64,
    pub source: HeightSource,
}

impl HeightEstimate {
    pub fn new(h: f64, source: HeightSource) -> Self {
        HeightEstimate { h, source }
    }

    /// Outside the physical gate; reported rather than clamped.
    pub fn is_flagged(&self) -> bool {
        !(self.h > HEIGHT_GATE.0 && self.h < HEIGHT_GATE.1)
    }
}

fn check_inputs(v: f64, l: f64) -> Result<(), HeightError> {
    if !(v > MIN_WALK_SPEED && v.is_finite()) {
        return Err(HeightError::OutOfRegime(v));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(HeightError::InvalidStride(l));
    }
    Ok(())
}

/// Ground-truth stride length of an average walker of height `h` at speed `v`.
pub fn model_stride_length(h: f64, v: f64) -> f64 {
    let thigh = THIGH_RATIO * h;
    STRIDE_COEFF * (v / thigh).sqrt() * thigh
}

pub fn boulic_height(v: f64, l: f64) -> Result<HeightEstimate, HeightError> {
    check_inputs(v, l)?;
    let h = l * l / (STRIDE_COEFF * STRIDE_COEFF * THIGH_RATIO * v);
    Ok(HeightEstimate::new(h, HeightSource::Model))
}

/// Regression features in frozen order `[v, l, vl, v²l, vl², l/v, l/v², l²/v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightFeatures(pub [f64; FEATURE_COUNT]);

pub fn height_features(v: f64, l: f64) -> Result<HeightFeatures, HeightError> {
    check_inputs(v, l)?;
    let f = [
        v,
        l,
        v * l,
        v * v * l,
        v * l * l,
        l / v,
        l / (v * v),
        l * l / v,
    ];
    if f.iter().any(|x| !x.is_finite()) {
        return Err(HeightError::OutOfRegime(v));
    }
    Ok(HeightFeatures(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_stride_law() {
        let l = model_stride_length(1.8, 1.0);
        assert!((l - 1.314677).abs() < 1e-6, "l = {l}");
        let h = boulic_height(1.0, l).unwrap().h;
        assert!((h - 1.8).abs() < 1e-9 * 1.8);
        assert!((boulic_height(1.0, 1.31487).unwrap().h - 1.800).abs() < 1e-3);
    }

    #[test]
    fn unit_height_construction() {
        let l = (STRIDE_COEFF * STRIDE_COEFF * THIGH_RATIO * 1.0f64).sqrt();
        let est = boulic_height(1.0, l).unwrap();
        assert!((est.h - 1.0).abs() < 1e-12);
        assert_eq!(est.source, HeightSource::Model);
    }

    #[test]
    fn doubling_stride_quadruples_height() {
        let a = boulic_height(1.3, 0.7).unwrap().h;
        let b = boulic_height(1.3, 1.4).unwrap().h;
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn slow_walkers_are_out_of_regime() {
        assert_eq!(boulic_height(0.2, 1.0), Err(HeightError::OutOfRegime(0.2)));
        assert!(boulic_height(1.0, 0.0).is_err());
        assert!(height_features(0.1, 1.0).is_err());
    }

    #[test]
    fn implausible_heights_are_flagged_not_clamped() {
        let est = boulic_height(0.3, 2.0).unwrap();
        assert!(est.h > 2.5 && est.is_flagged());
        assert!(!boulic_height(1.0, 1.3).unwrap().is_flagged());
    }

    #[test]
    fn feature_examples() {
        assert_eq!(height_features(1.0, 1.0).unwrap().0, [1.0; 8]);
        assert_eq!(
            height_features(2.0, 1.0).unwrap().0,
            [2.0, 1.0, 2.0, 4.0, 2.0, 0.5, 0.25, 0.5]
        );
    }

    #[test]
    fn last_feature_is_the_model_factor() {
        for (v, l) in [(0.9, 1.2), (1.4, 1.5), (1.7, 1.1)] {
            let f = height_features(v, l).unwrap().0;
            let h = boulic_height(v, l).unwrap().h;
            assert!((f[7] - h * STRIDE_COEFF * STRIDE_COEFF * THIGH_RATIO).abs() < 1e-12);
            assert!((h * STRIDE_COEFF * STRIDE_COEFF * THIGH_RATIO * v - l * l).abs() < 1e-12);
        }
    }
}
