//! Constant-velocity trajectory estimation and Frenet projection.
//!
//! A window's pedestrian motion is approximated by a straight line
//! `p(t) = origin + velocity * (t - t_ref)`. The line is found with RANSAC over
//! `(t, x, y)` only; the Doppler channel plays no part in the fit. Targets are
//! then projected onto the path to get tangential distance `d` and signed
//! orthogonal offset `n`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{RadarTarget, TargetWindow, MIN_TARGETS};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("window has {got} targets, trajectory fit needs {needed}")]
    TooFewTargets { needed: usize, got: usize },
    #[error("window spans {span:.3} s, trajectory fit needs at least {needed} s")]
    ShortSpan { span: f64, needed: f64 },
    #[error("degenerate trajectory: {inliers} inliers, {needed} required")]
    TooFewInliers { inliers: usize, needed: usize },
    #[error("degenerate trajectory: speed {speed:.3} m/s below {min_speed} m/s")]
    TooSlow { speed: f64, min_speed: f64 },
    #[error("trajectory has no travel direction")]
    UndefinedDirection,
    #[error("reference path needs at least two distinct vertices")]
    InvalidPath,
}

impl TrajectoryError {
    /// True for the errors that mean "skip this window".
    pub fn is_degenerate(&self) -> bool {
        !matches!(self, TrajectoryError::InvalidPath)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Maximum spatial residual of an inlier, meters.
    pub inlier_band: f64,
    /// Absolute floor of the inlier count.
    pub min_inliers: usize,
    /// Inlier count floor as a fraction of the window size.
    pub min_inlier_fraction: f64,
    pub min_speed: f64,
    /// Minimum time span of the window, seconds.
    pub min_span: f64,
    pub min_targets: usize,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iterations: 200,
            inlier_band: 0.3,
            min_inliers: 10,
            min_inlier_fraction: 0.5,
            min_speed: 0.1,
            min_span: 0.5,
            min_targets: MIN_TARGETS,
        }
    }
}

impl RansacConfig {
    pub fn required_inliers(&self, n: usize) -> usize {
        let frac = (self.min_inlier_fraction * n as f64).ceil() as usize;
        self.min_inliers.max(frac)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearTrajectory {
    /// Position at `t_ref`.
    pub origin: [f64; 2],
    pub velocity: [f64; 2],
    pub t_ref: f64,
    pub inlier_count: usize,
    /// Pedestrian speed, the norm of `velocity`.
    pub speed: f64,
}

impl LinearTrajectory {
    pub fn position_at(&self, t: f64) -> [f64; 2] {
        let dt = t - self.t_ref;
        [
            self.origin[0] + self.velocity[0] * dt,
            self.origin[1] + self.velocity[1] * dt,
        ]
    }

    /// Unit travel direction.
    pub fn direction(&self) -> Option<[f64; 2]> {
        if self.speed > 0.0 && self.speed.is_finite() {
            Some([self.velocity[0] / self.speed, self.velocity[1] / self.speed])
        } else {
            None
        }
    }

    /// Straight reference path through `origin` along the travel direction.
    pub fn reference_path(&self) -> Result<Polyline, TrajectoryError> {
        let u = self.direction().ok_or(TrajectoryError::UndefinedDirection)?;
        Polyline::new(vec![self.origin, [self.origin[0] + u[0], self.origin[1] + u[1]]])
    }

    /// Sum of squared spatial residuals over `targets`.
    pub fn residual(&self, targets: &[RadarTarget]) -> f64 {
        targets
            .iter()
            .map(|tg| {
                let p = self.position_at(tg.t);
                (tg.x - p[0]).powi(2) + (tg.y - p[1]).powi(2)
            })
            .sum()
    }
}

/// A target in path coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetTarget {
    /// Arc-length distance along the path, meters.
    pub d: f64,
    /// Signed orthogonal offset, positive to the left of travel.
    pub n: f64,
    pub v: f64,
    pub t: f64,
}

struct Hypothesis {
    anchor: [f64; 2],
    t_anchor: f64,
    velocity: [f64; 2],
}

impl Hypothesis {
    fn from_pair(a: &RadarTarget, b: &RadarTarget) -> Self {
        let dt = b.t - a.t;
        Hypothesis {
            anchor: [a.x, a.y],
            t_anchor: a.t,
            velocity: [(b.x - a.x) / dt, (b.y - a.y) / dt],
        }
    }

    fn is_inlier(&self, tg: &RadarTarget, band_sq: f64) -> bool {
        let dt = tg.t - self.t_anchor;
        let ex = tg.x - (self.anchor[0] + self.velocity[0] * dt);
        let ey = tg.y - (self.anchor[1] + self.velocity[1] * dt);
        ex * ex + ey * ey <= band_sq
    }
}

/// Ordinary least squares of `x(t)` and `y(t)` over the given targets.
fn least_squares(targets: &[&RadarTarget]) -> LinearTrajectory {
    let n = targets.len() as f64;
    let t_mean = targets.iter().map(|t| t.t).sum::<f64>() / n;
    let x_mean = targets.iter().map(|t| t.x).sum::<f64>() / n;
    let y_mean = targets.iter().map(|t| t.y).sum::<f64>() / n;
    let (mut stt, mut stx, mut sty) = (0.0, 0.0, 0.0);
    for tg in targets {
        let dt = tg.t - t_mean;
        stt += dt * dt;
        stx += dt * (tg.x - x_mean);
        sty += dt * (tg.y - y_mean);
    }
    let velocity = if stt > 0.0 { [stx / stt, sty / stt] } else { [0.0, 0.0] };
    LinearTrajectory {
        origin: [x_mean, y_mean],
        velocity,
        t_ref: t_mean,
        inlier_count: targets.len(),
        speed: velocity[0].hypot(velocity[1]),
    }
}

/// RANSAC fit of a constant-velocity line, refined by least squares on the
/// largest inlier set. Deterministic for a given seed.
pub fn fit_trajectory(
    window: &TargetWindow,
    cfg: &RansacConfig,
    seed: u64,
) -> Result<LinearTrajectory, TrajectoryError> {
    let targets = &window.targets;
    let n = targets.len();
    if n < cfg.min_targets.max(2) {
        return Err(TrajectoryError::TooFewTargets { needed: cfg.min_targets.max(2), got: n });
    }
    let t_min = targets.iter().map(|t| t.t).fold(f64::INFINITY, f64::min);
    let t_max = targets.iter().map(|t| t.t).fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if span < cfg.min_span || span <= 0.0 {
        return Err(TrajectoryError::ShortSpan { span, needed: cfg.min_span });
    }

    let mut rng = rng::rng_from(seed);
    let band_sq = cfg.inlier_band * cfg.inlier_band;
    let mut best: Option<(usize, Hypothesis)> = None;
    for _ in 0..cfg.iterations {
        // Pairs with equal timestamps carry no velocity information; redraw.
        let (a, b) = loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b && targets[a].t != targets[b].t {
                break (a, b);
            }
        };
        let hyp = Hypothesis::from_pair(&targets[a], &targets[b]);
        let count = targets.iter().filter(|tg| hyp.is_inlier(tg, band_sq)).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, hyp));
        }
    }

    let (_, hyp) = best.expect("at least one iteration");
    let inliers: Vec<&RadarTarget> = targets.iter().filter(|tg| hyp.is_inlier(tg, band_sq)).collect();
    let needed = cfg.required_inliers(n);
    if inliers.len() < needed || inliers.len() < 2 {
        return Err(TrajectoryError::TooFewInliers { inliers: inliers.len(), needed });
    }
    let traj = least_squares(&inliers);
    if !(traj.speed >= cfg.min_speed) {
        return Err(TrajectoryError::TooSlow { speed: traj.speed, min_speed: cfg.min_speed });
    }
    Ok(traj)
}

/// Piecewise-linear reference path. The first and last segments extend
/// indefinitely, so `d` is negative before the first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self, TrajectoryError> {
        if vertices.len() < 2 {
            return Err(TrajectoryError::InvalidPath);
        }
        let mut cumulative = vec![0.0];
        for w in vertices.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if !(len > 0.0 && len.is_finite()) {
                return Err(TrajectoryError::InvalidPath);
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Ok(Polyline { vertices, cumulative })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// `(d, n)` of a point: arc length of its orthogonal foot on the closest
    /// segment and its signed distance to that segment.
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let last = self.vertices.len() - 2;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for (i, w) in self.vertices.windows(2).enumerate() {
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let u = [(w[1][0] - w[0][0]) / len, (w[1][1] - w[0][1]) / len];
            let r = [p[0] - w[0][0], p[1] - w[0][1]];
            let mut s = r[0] * u[0] + r[1] * u[1];
            if i > 0 {
                s = s.max(0.0);
            }
            if i < last {
                s = s.min(len);
            }
            let n = u[0] * r[1] - u[1] * r[0];
            let dist_sq = (r[0] - s * u[0]).powi(2) + (r[1] - s * u[1]).powi(2);
            if dist_sq < best.0 {
                best = (dist_sq, self.cumulative[i] + s, n);
            }
        }
        (best.1, best.2)
    }

    /// Inverse of [`Polyline::project`] on the first segment's line.
    pub fn point_at_straight(&self, d: f64, n: f64) -> [f64; 2] {
        let a = self.vertices[0];
        let b = self.vertices[1];
        let len = self.cumulative[1];
        let u = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        [a[0] + d * u[0] - n * u[1], a[1] + d * u[1] + n * u[0]]
    }
}

/// Projects targets onto an arbitrary reference path, preserving order.
pub fn project_targets(targets: &[RadarTarget], path: &Polyline) -> Vec<FrenetTarget> {
    targets
        .iter()
        .map(|tg| {
            let (d, n) = path.project(tg.position());
            FrenetTarget { d, n, v: tg.v, t: tg.t }
        })
        .collect()
}

/// Frenet coordinates of a window's targets relative to its fitted trajectory.
pub fn frenet_transform(
    window: &TargetWindow,
    traj: &LinearTrajectory,
) -> Result<Vec<FrenetTarget>, TrajectoryError> {
    let path = traj.reference_path()?;
    Ok(project_targets(&window.targets, &path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrackId;

    fn window(points: impl IntoIterator<Item = (f64, f64, f64)>) -> TargetWindow {
        let id = TrackId::new("w");
        TargetWindow {
            track: id.clone(),
            index: 0,
            start: 0.0,
            duration: 3.0,
            targets: points
                .into_iter()
                .map(|(t, x, y)| RadarTarget::new(t, x, y, 1.0, id.clone()).unwrap())
                .collect(),
            label: None,
        }
    }

    fn traj(origin: [f64; 2], velocity: [f64; 2]) -> LinearTrajectory {
        LinearTrajectory {
            origin,
            velocity,
            t_ref: 0.0,
            inlier_count: 0,
            speed: velocity[0].hypot(velocity[1]),
        }
    }

    #[test]
    fn noiseless_line_is_recovered_exactly() {
        let w = window((0..100).map(|i| {
            let t = i as f64 * 0.03;
            (t, 1.2 * t, 0.0)
        }));
        let tr = fit_trajectory(&w, &RansacConfig::default(), 1).unwrap();
        assert!((tr.velocity[0] - 1.2).abs() < 1e-12);
        assert!(tr.velocity[1].abs() < 1e-12);
        assert!((tr.speed - 1.2).abs() < 1e-12);
        assert_eq!(tr.inlier_count, 100);
    }

    #[test]
    fn standing_pedestrian_is_degenerate() {
        let w = window((0..100).map(|i| (i as f64 * 0.03, 4.0, 2.0)));
        let err = fit_trajectory(&w, &RansacConfig::default(), 3).unwrap_err();
        assert!(matches!(err, TrajectoryError::TooSlow { .. }));
        assert!(err.is_degenerate());
    }

    #[test]
    fn short_or_sparse_windows_are_rejected() {
        let w = window((0..100).map(|i| (i as f64 * 0.001, 0.0, 0.0)));
        assert!(matches!(
            fit_trajectory(&w, &RansacConfig::default(), 0),
            Err(TrajectoryError::ShortSpan { .. })
        ));
        let w = window((0..10).map(|i| (i as f64, i as f64, 0.0)));
        assert!(matches!(
            fit_trajectory(&w, &RansacConfig::default(), 0),
            Err(TrajectoryError::TooFewTargets { .. })
        ));
    }

    #[test]
    fn identical_timestamps_are_resampled() {
        // Pairs of targets share a timestamp; the fit must still succeed.
        let w = window((0..80).map(|i| {
            let t = (i / 2) as f64 * 0.05;
            (t, t + (i % 2) as f64 * 0.01, 0.0)
        }));
        let tr = fit_trajectory(&w, &RansacConfig::default(), 11).unwrap();
        assert!((tr.speed - 1.0).abs() < 0.05);
    }

    #[test]
    fn frenet_examples() {
        let tr = traj([0.0, 0.0], [1.0, 0.0]);
        let w = window([(0.0, 0.0, 0.0), (1.0, 2.0, 0.5), (2.0, 1.0, -0.25)]);
        let ft = frenet_transform(&w, &tr).unwrap();
        assert_eq!((ft[0].d, ft[0].n), (0.0, 0.0));
        assert_eq!((ft[1].d, ft[1].n), (2.0, 0.5));
        assert_eq!((ft[2].d, ft[2].n), (1.0, -0.25));
    }

    #[test]
    fn zero_speed_has_no_frenet_frame() {
        let tr = traj([0.0, 0.0], [0.0, 0.0]);
        let w = window([(0.0, 1.0, 1.0)]);
        assert_eq!(frenet_transform(&w, &tr), Err(TrajectoryError::UndefinedDirection));
    }

    #[test]
    fn polyline_projects_onto_curved_path() {
        let path = Polyline::new(vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]]).unwrap();
        let (d, n) = path.project([1.0, 0.5]);
        assert!((d - 1.0).abs() < 1e-12 && (n - 0.5).abs() < 1e-12);
        // Right of the second segment (travelling +y).
        let (d, n) = path.project([2.5, 1.0]);
        assert!((d - 3.0).abs() < 1e-12 && (n + 0.5).abs() < 1e-12);
        // Behind the first vertex extrapolates to negative d.
        let (d, _) = path.project([-1.0, 0.0]);
        assert!((d + 1.0).abs() < 1e-12);
        assert!(Polyline::new(vec![[0.0, 0.0]]).is_err());
        assert!(Polyline::new(vec![[1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn refit_never_worse_than_best_pair() {
        let w = window((0..60).map(|i| {
            let t = i as f64 * 0.05;
            (t, 0.9 * t + 0.05 * ((i * 7 % 11) as f64 / 11.0 - 0.5), 0.1 * ((i * 3 % 5) as f64 / 5.0))
        }));
        let cfg = RansacConfig::default();
        let tr = fit_trajectory(&w, &cfg, 5).unwrap();
        let band_sq = cfg.inlier_band.powi(2);
        let inliers: Vec<RadarTarget> = w
            .targets
            .iter()
            .filter(|tg| {
                let p = tr.position_at(tg.t);
                (tg.x - p[0]).powi(2) + (tg.y - p[1]).powi(2) <= band_sq
            })
            .cloned()
            .collect();
        let ls = tr.residual(&inliers);
        for a in 0..inliers.len() {
            for b in a + 1..inliers.len() {
                let h = Hypothesis::from_pair(&inliers[a], &inliers[b]);
                let pair = LinearTrajectory {
                    origin: h.anchor,
                    velocity: h.velocity,
                    t_ref: h.t_anchor,
                    inlier_count: 0,
                    speed: 0.0,
                };
                assert!(ls <= pair.residual(&inliers) + 1e-12);
            }
        }
    }
}
