//! Synthetic radar-target generator with known height and motion class.
//!
//! A subject is a handful of point reflectors (torso, two feet, two arms or
//! crutch tips) moving along a straight path. Each class has a simple
//! periodic limb model; targets are sampled from random parts every radar
//! frame and reported with their radial Doppler velocity as seen from the
//! sensor.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Label, MotionClass, RadarTarget, TrackId, MAX_ABS_DOPPLER};
use crate::height::model_stride_length;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid subject: {0}")]
    InvalidSubject(String),
}

pub const HEIGHT_RANGE: (f64, f64) = (1.4, 2.1);

/// Speed bounds in m/s per class.
pub fn speed_bounds(class: MotionClass) -> (f64, f64) {
    match class {
        MotionClass::Walk => (0.7, 2.0),
        MotionClass::Run => (2.0, 5.0),
        MotionClass::Jump => (0.3, 1.5),
        MotionClass::Crutches => (0.4, 1.2),
        MotionClass::Skateboard => (1.5, 5.0),
        MotionClass::Wheelchair => (0.5, 2.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub height: f64,
    pub motion: MotionClass,
    pub speed: f64,
    /// Heading of travel, radians from +x.
    pub heading: f64,
    pub start: [f64; 2],
    pub seed: u64,
}

impl SubjectSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = HEIGHT_RANGE;
        if !(self.height >= lo && self.height <= hi) {
            return Err(SimError::InvalidSubject(format!("height {} outside [{lo}, {hi}]", self.height)));
        }
        let (lo, hi) = speed_bounds(self.motion);
        if !(self.speed >= lo && self.speed <= hi) {
            return Err(SimError::InvalidSubject(format!(
                "{} speed {} outside [{lo}, {hi}]",
                self.motion, self.speed
            )));
        }
        if !(self.heading.is_finite() && self.start.iter().all(|v| v.is_finite())) {
            return Err(SimError::InvalidSubject("non-finite pose".into()));
        }
        Ok(())
    }

    pub fn label(&self) -> Label {
        Label { height: Some(self.height), motion: Some(self.motion) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetsPerFrame {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
}

impl Default for TargetsPerFrame {
    fn default() -> Self {
        TargetsPerFrame { min: 1, max: 5, mean: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub duration: f64,
    /// Mean spacing between consecutive radar frames (timestamps).
    pub mean_dt: f64,
    /// Fraction of the frame period that is exponentially distributed.
    pub dt_jitter: f64,
    pub targets_per_frame: TargetsPerFrame,
    /// Radial (2D RMS) position error; each axis gets `sigma / sqrt(2)`.
    pub position_noise_sigma: f64,
    pub doppler_noise_sigma: f64,
    pub sensor: [f64; 2],
    /// Relative chance of each part producing a given detection. Most
    /// detections land on the trunk, which dominates the cross-section.
    pub part_weights: PartWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartWeights {
    pub torso: f64,
    pub foot: f64,
    pub arm: f64,
}

impl Default for PartWeights {
    fn default() -> Self {
        PartWeights { torso: 0.94, foot: 0.025, arm: 0.005 }
    }
}

impl PartWeights {
    fn of(&self, part: BodyPart) -> f64 {
        match part {
            BodyPart::Torso => self.torso,
            BodyPart::LeftFoot | BodyPart::RightFoot => self.foot,
            BodyPart::LeftArm | BodyPart::RightArm => self.arm,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 12.0,
            mean_dt: 0.018,
            dt_jitter: 0.3,
            targets_per_frame: TargetsPerFrame::default(),
            position_noise_sigma: 0.2,
            doppler_noise_sigma: 0.1 / 3.6,
            sensor: [0.0, 0.0],
            part_weights: PartWeights::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.duration >= 3.0 && self.duration.is_finite()) {
            return bad("duration must be at least 3 s");
        }
        if !(self.mean_dt > 0.0 && self.mean_dt.is_finite()) {
            return bad("mean_dt must be positive");
        }
        if !(0.0..1.0).contains(&self.dt_jitter) {
            return bad("dt_jitter must be in [0, 1)");
        }
        let tpf = &self.targets_per_frame;
        if tpf.min == 0 || tpf.max < tpf.min || tpf.max > BodyPart::ALL.len() {
            return bad("targets_per_frame bounds must satisfy 1 <= min <= max <= 5");
        }
        if !(tpf.mean >= tpf.min as f64 && tpf.mean <= tpf.max as f64) {
            return bad("targets_per_frame mean must lie within its bounds");
        }
        if !(self.position_noise_sigma >= 0.0 && self.doppler_noise_sigma >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        if !self.sensor.iter().all(|v| v.is_finite()) {
            return bad("sensor position must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyPart {
    Torso,
    LeftFoot,
    RightFoot,
    LeftArm,
    RightArm,
}

impl BodyPart {
    pub const ALL: [BodyPart; 5] =
        [BodyPart::Torso, BodyPart::LeftFoot, BodyPart::RightFoot, BodyPart::LeftArm, BodyPart::RightArm];

    fn side(self) -> f64 {
        match self {
            BodyPart::LeftFoot | BodyPart::LeftArm => 1.0,
            BodyPart::RightFoot | BodyPart::RightArm => -1.0,
            BodyPart::Torso => 0.0,
        }
    }
}

/// Cumulative cycle progress of a limb that rests for the first `stance`
/// fraction of every cycle and then swings forward one cycle length.
/// `sharpness` in [0, 1] shapes the swing (1 starts and ends at rest).
fn stance_swing(tau: f64, stance: f64, sharpness: f64) -> f64 {
    let k = tau.floor();
    let phi = tau - k;
    if phi < stance {
        return k;
    }
    let u = (phi - stance) / (1.0 - stance);
    k + u - sharpness * (2.0 * PI * u).sin() / (2.0 * PI)
}

/// Class-specific kinematics of one subject, in path coordinates
/// (along-track, lateral).
#[derive(Debug, Clone, Copy)]
struct Gait {
    class: MotionClass,
    speed: f64,
    /// Distance covered per gait cycle.
    cycle_length: f64,
    period: f64,
    phase: f64,
}

impl Gait {
    fn new(spec: &SubjectSpec, phase: f64) -> Self {
        let v = spec.speed;
        let cycle_length = match spec.motion {
            MotionClass::Walk | MotionClass::Run => model_stride_length(spec.height, v),
            MotionClass::Jump => 0.7 * v,
            MotionClass::Crutches => 1.1 * v,
            MotionClass::Skateboard => 2.5 * v,
            MotionClass::Wheelchair => 1.2 * v,
        };
        Gait { class: spec.motion, speed: v, cycle_length, period: cycle_length / v, phase }
    }

    fn tau(&self, t: f64) -> f64 {
        t / self.period + self.phase
    }

    /// Torso with a speed ripple of relative size `ripple` at `harmonic`
    /// times the cycle rate. The torso reflector stands for trunk and thighs
    /// together, so its ripple is far larger than the centre of mass's; for
    /// walking it is slowest near mid-stance.
    fn torso(&self, t: f64, ripple: f64, harmonic: f64) -> f64 {
        let w = 2.0 * PI * harmonic / self.period;
        self.speed * t + ripple * self.speed / w * (w * t + 2.0 * PI * harmonic * self.phase).sin()
    }

    /// Torso that partly pauses once per cycle: a fraction `depth` of its
    /// motion follows a rest-then-surge profile, the rest moves uniformly.
    /// `harmonic` surges happen per cycle.
    fn surging(&self, t: f64, harmonic: f64, rest: f64, sharpness: f64, depth: f64) -> f64 {
        let l = self.cycle_length / harmonic;
        let tau = harmonic * self.tau(t);
        let surge = l * (stance_swing(tau, rest, sharpness) - harmonic * self.phase + 0.5 * rest);
        (1.0 - depth) * self.speed * t + depth * surge
    }

    /// Limb resting on the ground during stance, centred on the torso at
    /// mid-stance.
    fn planted(&self, t: f64, stance: f64, sharpness: f64, offset: f64) -> f64 {
        let l = self.cycle_length;
        l * (stance_swing(self.tau(t) + offset, stance, sharpness) + 0.5 * stance - offset - self.phase)
    }

    fn position(&self, part: BodyPart, t: f64) -> [f64; 2] {
        let tau = self.tau(t);
        let side = part.side();
        let swing = |amp: f64, offset: f64| amp * (2.0 * PI * (tau + offset)).sin();
        match self.class {
            MotionClass::Walk | MotionClass::Run => {
                // Walking sways smoothly at the step rate; running brakes
                // briefly at every foot strike.
                let (stance, sharp, arm, torso) = if self.class == MotionClass::Walk {
                    (0.6, 0.0, 0.1, self.torso(t, 0.4, 2.0))
                } else {
                    (0.35, 0.5, 0.15, self.surging(t, 2.0, 0.3, 0.5, 0.5))
                };
                match part {
                    BodyPart::Torso => [torso, 0.0],
                    BodyPart::LeftFoot => [self.planted(t, stance, sharp, 0.0), 0.1],
                    BodyPart::RightFoot => [self.planted(t, stance, sharp, 0.5), -0.1],
                    // Arms swing against the foot on the same side.
                    BodyPart::LeftArm => [torso + swing(arm, 0.5), 0.25],
                    BodyPart::RightArm => [torso + swing(arm, 0.0), -0.25],
                }
            }
            // Two-footed hops: everything stops briefly at each landing,
            // then flies forward at constant speed.
            MotionClass::Jump => {
                let body = self.surging(t, 1.0, 0.2, 0.0, 1.0);
                match part {
                    BodyPart::Torso => [body, 0.0],
                    BodyPart::LeftFoot | BodyPart::RightFoot => [body, 0.12 * side],
                    BodyPart::LeftArm | BodyPart::RightArm => [body + swing(0.05, 0.0), 0.25 * side],
                }
            }
            // The body slows while the crutches move ahead, then swings through.
            MotionClass::Crutches => match part {
                BodyPart::Torso => [self.surging(t, 1.0, 0.5, 0.5, 0.8), 0.0],
                // Both legs swing through between the planted crutch tips.
                BodyPart::LeftFoot | BodyPart::RightFoot => [self.planted(t, 0.5, 0.5, 0.5), 0.1 * side],
                BodyPart::LeftArm | BodyPart::RightArm => [self.planted(t, 0.5, 1.0, 0.0), 0.35 * side],
            },
            MotionClass::Skateboard => {
                let torso = self.torso(t, 0.05, 1.0);
                match part {
                    BodyPart::Torso => [torso, 0.0],
                    BodyPart::LeftFoot => [torso + self.push_offset(tau), 0.15],
                    BodyPart::RightFoot => [torso + 0.1, -0.05],
                    BodyPart::LeftArm | BodyPart::RightArm => [torso + swing(0.05, 0.0), 0.25 * side],
                }
            }
            MotionClass::Wheelchair => {
                let torso = self.torso(t, 0.05, 1.0);
                match part {
                    BodyPart::Torso => [torso, 0.0],
                    BodyPart::LeftFoot | BodyPart::RightFoot => [torso + 0.4, 0.1 * side],
                    BodyPart::LeftArm | BodyPart::RightArm => [torso + swing(0.1, 0.0), 0.3 * side],
                }
            }
        }
    }

    /// Skateboard push foot relative to the board: it stays on the ground
    /// for a short contact phase, catches up and rides the rest of the cycle.
    fn push_offset(&self, tau: f64) -> f64 {
        const CONTACT: f64 = 0.12;
        const RETURN: f64 = 0.25;
        let phi = tau - tau.floor();
        let cycle = self.speed * self.period;
        if phi < CONTACT {
            -cycle * phi
        } else if phi < CONTACT + RETURN {
            let u = (phi - CONTACT) / RETURN;
            let g = u - (2.0 * PI * u).sin() / (2.0 * PI);
            -cycle * CONTACT * (1.0 - g)
        } else {
            0.0
        }
    }
}

/// Stride length the walk and run models are built on, nominal cycle
/// length otherwise.
pub fn ground_truth_stride(spec: &SubjectSpec) -> f64 {
    Gait::new(spec, 0.0).cycle_length
}

/// Generates the target stream of one recording. Deterministic in
/// `(spec, cfg)`; all targets carry `track`.
pub fn simulate(spec: &SubjectSpec, cfg: &SimConfig, track: &TrackId) -> Result<Vec<RadarTarget>, SimError> {
    spec.validate()?;
    cfg.validate()?;
    let mut rng = rng::rng_from(spec.seed);
    let gait = Gait::new(spec, rng.random::<f64>());
    let (sin_h, cos_h) = spec.heading.sin_cos();
    let along = [cos_h, sin_h];
    let lateral = [-sin_h, cos_h];
    let world = |p: [f64; 2]| {
        [
            spec.start[0] + p[0] * along[0] + p[1] * lateral[0],
            spec.start[1] + p[0] * along[1] + p[1] * lateral[1],
        ]
    };

    let tpf = cfg.targets_per_frame;
    let extra = Binomial::new((tpf.max - tpf.min) as u64, (tpf.mean - tpf.min as f64) / (tpf.max - tpf.min).max(1) as f64)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let frame = cfg.mean_dt;
    let jitter = Exp::new(1.0 / (frame * cfg.dt_jitter).max(f64::MIN_POSITIVE))
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let pos_noise = Normal::new(0.0, cfg.position_noise_sigma / 2f64.sqrt())
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let dop_noise =
        Normal::new(0.0, cfg.doppler_noise_sigma).map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let parts = WeightedIndex::new(BodyPart::ALL.iter().map(|&p| cfg.part_weights.of(p)))
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = frame * cfg.dt_jitter * rng.random::<f64>();
    while t < cfg.duration {
        let count = tpf.min + extra.sample(&mut rng) as usize;
        let mut chosen: Vec<usize> = (0..count).map(|_| parts.sample(&mut rng)).collect();
        chosen.sort_unstable();
        for i in chosen {
            let part = BodyPart::ALL[i];
            let p = world(gait.position(part, t));
            let radial = radial_velocity(&gait, part, t, &world, cfg.sensor);
            let x = p[0] + pos_noise.sample(&mut rng);
            let y = p[1] + pos_noise.sample(&mut rng);
            let v = (radial + dop_noise.sample(&mut rng)).clamp(-MAX_ABS_DOPPLER, MAX_ABS_DOPPLER);
            out.push(RadarTarget { t, x, y, v, track: track.clone() });
        }
        t += frame * (1.0 - cfg.dt_jitter) + jitter.sample(&mut rng);
    }
    Ok(out)
}

/// Radial velocity of a body part toward `sensor`, by central differences of
/// its analytic position.
fn radial_velocity(
    gait: &Gait,
    part: BodyPart,
    t: f64,
    world: &impl Fn([f64; 2]) -> [f64; 2],
    sensor: [f64; 2],
) -> f64 {
    const H: f64 = 1e-4;
    let p = world(gait.position(part, t));
    let a = world(gait.position(part, t - H));
    let b = world(gait.position(part, t + H));
    let vel = [(b[0] - a[0]) / (2.0 * H), (b[1] - a[1]) / (2.0 * H)];
    let r = [p[0] - sensor[0], p[1] - sensor[1]];
    let norm = r[0].hypot(r[1]);
    if norm == 0.0 {
        return 0.0;
    }
    (vel[0] * r[0] + vel[1] * r[1]) / norm
}

/// One continuous recording of a subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingPlan {
    pub subject_id: String,
    pub recording_id: String,
    pub spec: SubjectSpec,
    pub duration: f64,
}

impl RecordingPlan {
    pub fn track(&self) -> TrackId {
        TrackId::new(format!("{}/{}", self.subject_id, self.recording_id))
    }
}

/// A set of recordings simulated with shared sensor settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SimConfig,
    pub recordings: Vec<RecordingPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRecording {
    pub plan: RecordingPlan,
    pub targets: Vec<RadarTarget>,
}

impl Scenario {
    pub fn run(&self) -> Result<Vec<SimRecording>, SimError> {
        use rayon::prelude::*;
        self.recordings
            .par_iter()
            .map(|plan| {
                let cfg = SimConfig { duration: plan.duration, ..self.config };
                let targets = simulate(&plan.spec, &cfg, &plan.track())?;
                Ok(SimRecording { plan: plan.clone(), targets })
            })
            .collect()
    }
}

/// Duration giving exactly `windows` windows of `duration` seconds at `hop`.
pub fn duration_for_windows(windows: usize, duration: f64, hop: f64) -> f64 {
    duration + (windows.max(1) - 1) as f64 * hop
}

fn random_pose(rng: &mut rng::Rng) -> ([f64; 2], f64) {
    // Moving away from a sensor at the origin, close to its boresight.
    let start = [rng.random_range(2.0..4.0), rng.random_range(-0.5..0.5)];
    let heading = rng.random_range(-0.05..0.05);
    (start, heading)
}

/// How subject heights are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightPopulation {
    Uniform { min: f64, max: f64 },
    /// Piecewise uniform: `(lo, hi, weight)` strata.
    Strata(Vec<(f64, f64, f64)>),
}

impl HeightPopulation {
    /// 1.53 to 2.00 m with 41 of 56 subjects between 1.70 and 1.90 m, two
    /// below 1.60 m and five above 1.90 m, like a typical recruited adult
    /// test group.
    pub fn adult_test_group() -> Self {
        HeightPopulation::Strata(vec![
            (1.53, 1.60, 2.0),
            (1.60, 1.70, 8.0),
            (1.70, 1.90, 41.0),
            (1.90, 2.00, 5.0),
        ])
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> f64 {
        match self {
            HeightPopulation::Uniform { min, max } => rng.random_range(*min..=*max),
            HeightPopulation::Strata(strata) => {
                let total: f64 = strata.iter().map(|s| s.2).sum();
                let mut u = rng.random_range(0.0..total);
                for &(lo, hi, w) in strata {
                    if u < w {
                        return lo + (hi - lo) * u / w;
                    }
                    u -= w;
                }
                let &(_, hi, _) = strata.last().expect("non-empty strata");
                hi
            }
        }
    }
}

/// Walking subjects drawn from `heights`, with one speed per recording
/// drawn from `speeds`.
pub fn height_study(
    subjects: usize,
    recordings_per_subject: usize,
    windows_per_recording: usize,
    heights: &HeightPopulation,
    speeds: (f64, f64),
    seed: u64,
) -> Scenario {
    let mut rng = rng::rng_from(rng::derive_str(seed, "height-study"));
    let duration = duration_for_windows(windows_per_recording, 3.0, 1.0);
    let mut recordings = Vec::new();
    for s in 0..subjects {
        let height = heights.sample(&mut rng);
        for r in 0..recordings_per_subject {
            let (start, heading) = random_pose(&mut rng);
            let spec = SubjectSpec {
                height,
                motion: MotionClass::Walk,
                speed: rng.random_range(speeds.0..=speeds.1),
                heading,
                start,
                seed: rng.random(),
            };
            recordings.push(RecordingPlan {
                subject_id: format!("s{s:03}"),
                recording_id: format!("r{r}"),
                spec,
                duration,
            });
        }
    }
    Scenario { config: SimConfig::default(), recordings }
}

/// Declarative form of the two study generators, as read from a scenario
/// file. The sensor settings default to [`SimConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum StudySpec {
    Height {
        subjects: usize,
        #[serde(default = "one")]
        recordings_per_subject: usize,
        windows_per_recording: usize,
        heights: HeightPopulation,
        speeds: (f64, f64),
        #[serde(default)]
        config: SimConfig,
    },
    Motion {
        subjects: usize,
        #[serde(default = "one")]
        recordings_per_class: usize,
        windows_per_recording: usize,
        #[serde(default)]
        config: SimConfig,
    },
}

fn one() -> usize {
    1
}

impl StudySpec {
    pub fn build(&self, seed: u64) -> Scenario {
        match self {
            StudySpec::Height { subjects, recordings_per_subject, windows_per_recording, heights, speeds, config } => {
                let mut sc = height_study(*subjects, *recordings_per_subject, *windows_per_recording, heights, *speeds, seed);
                sc.config = *config;
                sc
            }
            StudySpec::Motion { subjects, recordings_per_class, windows_per_recording, config } => {
                let mut sc = motion_study(*subjects, *recordings_per_class, *windows_per_recording, seed);
                sc.config = *config;
                sc
            }
        }
    }
}

/// Every subject performs every motion class.
pub fn motion_study(
    subjects: usize,
    recordings_per_class: usize,
    windows_per_recording: usize,
    seed: u64,
) -> Scenario {
    let mut rng = rng::rng_from(rng::derive_str(seed, "motion-study"));
    let duration = duration_for_windows(windows_per_recording, 3.0, 1.0);
    let mut recordings = Vec::new();
    for s in 0..subjects {
        let height = rng.random_range(HEIGHT_RANGE.0..=HEIGHT_RANGE.1);
        for class in MotionClass::ALL {
            let (lo, hi) = speed_bounds(class);
            for r in 0..recordings_per_class {
                let (start, heading) = random_pose(&mut rng);
                let spec = SubjectSpec {
                    height,
                    motion: class,
                    speed: rng.random_range(lo..=hi),
                    heading,
                    start,
                    seed: rng.random(),
                };
                recordings.push(RecordingPlan {
                    subject_id: format!("s{s:03}"),
                    recording_id: format!("{}-r{r}", class.name()),
                    spec,
                    duration,
                });
            }
        }
    }
    Scenario { config: SimConfig::default(), recordings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(motion: MotionClass, speed: f64) -> SubjectSpec {
        SubjectSpec { height: 1.8, motion, speed, heading: 0.0, start: [2.0, 0.0], seed: 11 }
    }

    fn variance(v: &[f64]) -> f64 {
        let m = crate::numeric::mean(v);
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    }

    #[test]
    fn adult_group_is_concentrated() {
        let pop = HeightPopulation::adult_test_group();
        let mut rng = rng::rng_from(3);
        let h: Vec<f64> = (0..20_000).map(|_| pop.sample(&mut rng)).collect();
        assert!(h.iter().all(|&x| (1.53..=2.0).contains(&x)));
        let mid = h.iter().filter(|&&x| (1.7..1.9).contains(&x)).count() as f64 / h.len() as f64;
        assert!((mid - 41.0 / 56.0).abs() < 0.01, "{mid}");
    }

    #[test]
    fn same_seed_same_stream() {
        let id = TrackId::new("a");
        let cfg = SimConfig { duration: 4.0, ..Default::default() };
        let a = simulate(&spec(MotionClass::Run, 3.0), &cfg, &id).unwrap();
        let b = simulate(&spec(MotionClass::Run, 3.0), &cfg, &id).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|t| t.validate().is_ok()));
    }

    #[test]
    fn frame_spacing_and_size_match_config() {
        let cfg = SimConfig { duration: 60.0, ..Default::default() };
        let s = simulate(&spec(MotionClass::Walk, 1.0), &cfg, &TrackId::new("a")).unwrap();
        let mut stamps: Vec<f64> = s.iter().map(|t| t.t).collect();
        stamps.dedup();
        let dt = (stamps.last().unwrap() - stamps[0]) / (stamps.len() - 1) as f64;
        assert!((dt - 0.018).abs() < 0.0005, "{dt}");
        let per_frame = s.len() as f64 / stamps.len() as f64;
        assert!((per_frame - 3.0).abs() < 0.05, "{per_frame}");
    }

    #[test]
    fn wheelchair_doppler_is_quiet() {
        let cfg = SimConfig { duration: 3.0, ..Default::default() };
        let walk: Vec<f64> =
            simulate(&spec(MotionClass::Walk, 1.0), &cfg, &TrackId::new("w")).unwrap().iter().map(|t| t.v).collect();
        let chair: Vec<f64> = simulate(&spec(MotionClass::Wheelchair, 1.0), &cfg, &TrackId::new("c"))
            .unwrap()
            .iter()
            .map(|t| t.v)
            .collect();
        assert!(variance(&chair) < 0.2 * variance(&walk));
    }

    #[test]
    fn feet_rest_during_stance() {
        let g = Gait::new(&spec(MotionClass::Walk, 1.2), 0.0);
        let a = g.position(BodyPart::LeftFoot, 0.1 * g.period)[0];
        let b = g.position(BodyPart::LeftFoot, 0.5 * g.period)[0];
        assert_eq!(a, b);
        // One full cycle advances the foot one stride.
        let c = g.position(BodyPart::LeftFoot, 1.1 * g.period)[0];
        assert!((c - a - g.cycle_length).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(spec(MotionClass::Run, 1.0).validate().is_err());
        let mut s = spec(MotionClass::Walk, 1.0);
        s.height = 2.3;
        assert!(s.validate().is_err());
        assert!(SimConfig { duration: 2.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn study_shapes() {
        let h = height_study(4, 3, 10, &HeightPopulation::Uniform { min: 1.5, max: 2.0 }, (0.8, 1.8), 1);
        assert_eq!(h.recordings.len(), 12);
        assert_eq!(h.recordings[0].duration, 12.0);
        let m = motion_study(2, 2, 20, 1);
        assert_eq!(m.recordings.len(), 2 * 6 * 2);
    }
}
