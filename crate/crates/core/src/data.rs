//! Radar target records, motion classes and fixed-duration target windows.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sanity bound on the ego-compensated Doppler of a pedestrian-class object.
pub const MAX_ABS_DOPPLER: f64 = 15.0;

/// Minimum number of targets a window needs to be processed.
pub const MIN_TARGETS: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("non-finite field `{0}` in radar target")]
    NonFinite(&'static str),
    #[error("doppler {0} m/s exceeds the {MAX_ABS_DOPPLER} m/s pedestrian bound")]
    DopplerOutOfRange(f64),
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} targets, got {got}")]
    TooFewTargets { needed: usize, got: usize },
    #[error("unknown motion class `{0}`")]
    UnknownClass(String),
}

/// Opaque track identifier; all targets of one pedestrian track share it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub String);

impl TrackId {
    pub fn new(id: impl Into<String>) -> Self {
        TrackId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One radar reflection point in the earth-fixed frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarTarget {
    /// Timestamp in seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Ego-motion compensated radial Doppler velocity over ground, m/s.
    pub v: f64,
    pub track: TrackId,
}

impl RadarTarget {
    pub fn new(t: f64, x: f64, y: f64, v: f64, track: TrackId) -> Result<Self, DataError> {
        let target = RadarTarget { t, x, y, v, track };
        target.validate()?;
        Ok(target)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        for (name, value) in [("t", self.t), ("x", self.x), ("y", self.y), ("v", self.v)] {
            if !value.is_finite() {
                return Err(DataError::NonFinite(name));
            }
        }
        if self.v.abs() > MAX_ABS_DOPPLER {
            return Err(DataError::DopplerOutOfRange(self.v));
        }
        Ok(())
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Total order: time first, then (x, y, v) lexicographically.
    pub fn order(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.x.total_cmp(&other.x))
            .then(self.y.total_cmp(&other.y))
            .then(self.v.total_cmp(&other.v))
    }
}

/// Pedestrian motion type. Integer codes are stable and used in every
/// serialized artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionClass {
    Walk = 0,
    Run = 1,
    Jump = 2,
    Crutches = 3,
    Skateboard = 4,
    Wheelchair = 5,
}

impl MotionClass {
    pub const COUNT: usize = 6;
    pub const ALL: [MotionClass; 6] = [
        MotionClass::Walk,
        MotionClass::Run,
        MotionClass::Jump,
        MotionClass::Crutches,
        MotionClass::Skateboard,
        MotionClass::Wheelchair,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MotionClass::Walk => "walk",
            MotionClass::Run => "run",
            MotionClass::Jump => "jump",
            MotionClass::Crutches => "crutches",
            MotionClass::Skateboard => "skateboard",
            MotionClass::Wheelchair => "wheelchair",
        }
    }
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionClass {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| DataError::UnknownClass(s.to_string()))
    }
}

/// Ground truth carried by a track and inherited by its windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Label {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<MotionClass>,
}

/// All targets of one track inside `[start, start + duration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetWindow {
    pub track: TrackId,
    /// Position of the window on the track's hop grid.
    pub index: usize,
    pub start: f64,
    pub duration: f64,
    /// Strictly ordered by [`RadarTarget::order`].
    pub targets: Vec<RadarTarget>,
    pub label: Option<Label>,
}

impl TargetWindow {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn dopplers(&self) -> impl Iterator<Item = f64> + '_ {
        self.targets.iter().map(|t| t.v)
    }

    /// Stable identifier used in prediction output and RNG derivation.
    pub fn key(&self) -> String {
        format!("{}#{}", self.track, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub duration: f64,
    pub hop: f64,
    pub min_targets: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            duration: 3.0,
            hop: 1.0,
            min_targets: MIN_TARGETS,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(DataError::InvalidConfig(format!(
                "window duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.hop.is_finite() && self.hop > 0.0 && self.hop <= self.duration) {
            return Err(DataError::InvalidConfig(format!(
                "hop must lie in (0, duration], got {}",
                self.hop
            )));
        }
        Ok(())
    }
}

/// Result of [`assemble_windows`] with the diagnostics of what was left out.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowAssembly {
    pub windows: Vec<TargetWindow>,
    /// Windows dropped because they held fewer than `min_targets` targets.
    pub dropped_sparse: usize,
    /// Records failing [`RadarTarget::validate`].
    pub rejected: usize,
    /// Exact duplicate records removed while ordering.
    pub duplicates: usize,
}

/// Cuts every track into overlapping windows on a hop grid anchored at the
/// track's first timestamp.
///
/// Grid positions run until a window reaches the track's last timestamp, so
/// the final window may be only partly covered. Tracks are emitted in order
/// of first appearance, windows in grid order.
pub fn assemble_windows(
    targets: &[RadarTarget],
    cfg: &WindowConfig,
) -> Result<WindowAssembly, DataError> {
    cfg.validate()?;
    let mut out = WindowAssembly::default();

    let mut order: Vec<TrackId> = Vec::new();
    let mut tracks: HashMap<TrackId, Vec<RadarTarget>> = HashMap::new();
    for target in targets {
        if target.validate().is_err() {
            out.rejected += 1;
            continue;
        }
        tracks
            .entry(target.track.clone())
            .or_insert_with(|| {
                order.push(target.track.clone());
                Vec::new()
            })
            .push(target.clone());
    }

    for id in order {
        let mut track = tracks.remove(&id).unwrap_or_default();
        track.sort_by(|a, b| a.order(b));
        let before = track.len();
        track.dedup_by(|a, b| a.order(b) == Ordering::Equal);
        out.duplicates += before - track.len();

        let t0 = track[0].t;
        let span = track[track.len() - 1].t - t0;
        let count = if span < cfg.duration {
            1
        } else {
            ((span - cfg.duration) / cfg.hop - 1e-9).ceil() as usize + 1
        };

        let mut lo = 0;
        for k in 0..count {
            let start = t0 + k as f64 * cfg.hop;
            let end = start + cfg.duration;
            while lo < track.len() && track[lo].t < start {
                lo += 1;
            }
            let hi = lo + track[lo..].partition_point(|t| t.t < end);
            if hi - lo < cfg.min_targets {
                out.dropped_sparse += 1;
                continue;
            }
            out.windows.push(TargetWindow {
                track: id.clone(),
                index: k,
                start,
                duration: cfg.duration,
                targets: track[lo..hi].to_vec(),
                label: None,
            });
        }
    }
    Ok(out)
}

/// Mean and maximum spacing between consecutive target timestamps.
pub fn sample_time_stats(window: &TargetWindow) -> Result<(f64, f64), DataError> {
    let n = window.len();
    if n < 2 {
        return Err(DataError::TooFewTargets { needed: 2, got: n });
    }
    let first = window.targets[0].t;
    let last = window.targets[n - 1].t;
    let mean = (last - first) / (n - 1) as f64;
    let max = window
        .targets
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .fold(0.0, f64::max);
    Ok((mean, max))
}
