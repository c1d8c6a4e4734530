//! Trajectory generators mimicking the measurement protocols.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point, ScenarioMeta};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    /// Straight legs between uniformly drawn waypoints, pausing `dwell` at each.
    RandomWaypoint,
    /// Serpentine sweep of the area, as a manually driven robot would cover it.
    ManualPath,
    /// Rotation on a fixed spot for `dwell`, a random walk, then rotation again.
    RotationThenWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub kind: MotionKind,
    /// m/s.
    pub speed: f64,
    /// Seconds.
    pub dwell: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub timestamp: f64,
    pub position: Point,
    pub orientation: Option<[f64; 4]>,
}

/// Yaw-only unit quaternion (w, x, y, z).
pub fn yaw_quaternion(yaw: f64) -> [f64; 4] {
    [(0.5 * yaw).cos(), 0.0, 0.0, (0.5 * yaw).sin()]
}

/// Rotation rate of the turntable, rad/s.
const TURNTABLE_RATE: f64 = std::f64::consts::TAU / 20.0;

/// Continuous-time piecewise-linear path.
struct Legs {
    /// (start time, start point, end time, end point)
    legs: Vec<(f64, Point, f64, Point)>,
}

impl Legs {
    fn at(&self, t: f64) -> (Point, f64) {
        let idx = self.legs.partition_point(|l| l.2 < t).min(self.legs.len() - 1);
        let (t0, p0, t1, p1) = self.legs[idx];
        let a = if t1 > t0 { ((t - t0) / (t1 - t0)).clamp(0.0, 1.0) } else { 1.0 };
        let p = [
            p0[0] + a * (p1[0] - p0[0]),
            p0[1] + a * (p1[1] - p0[1]),
            p0[2] + a * (p1[2] - p0[2]),
        ];
        (p, (p1[1] - p0[1]).atan2(p1[0] - p0[0]))
    }
}

fn random_point(meta: &ScenarioMeta, r: &mut impl Rng) -> Point {
    let mut p = meta.area_min;
    for (i, v) in p.iter_mut().enumerate().take(meta.dims()) {
        *v = r.random_range(meta.area_min[i]..meta.area_max[i]);
    }
    p
}

fn leg_duration(a: &Point, b: &Point, speed: f64) -> f64 {
    crate::model::dist(a, b) / speed
}

fn waypoint_legs(meta: &ScenarioMeta, start: Point, speed: f64, dwell: f64, until: f64, r: &mut impl Rng) -> Legs {
    let mut legs = Vec::new();
    let mut t = 0.0;
    let mut p = start;
    while t <= until {
        let q = random_point(meta, r);
        let dt = leg_duration(&p, &q, speed);
        legs.push((t, p, t + dt, q));
        t += dt;
        if dwell > 0.0 {
            legs.push((t, q, t + dwell, q));
            t += dwell;
        }
        p = q;
    }
    Legs { legs }
}

fn serpentine_legs(meta: &ScenarioMeta, speed: f64, duration: f64, r: &mut impl Rng) -> Legs {
    let w = meta.area_max[0] - meta.area_min[0];
    let h = meta.area_max[1] - meta.area_min[1];
    let inset = 0.05;
    let (x0, x1) = (meta.area_min[0] + inset * w, meta.area_max[0] - inset * w);
    let (y0, y1) = (meta.area_min[1] + inset * h, meta.area_max[1] - inset * h);
    // Lanes are driven out and back, so one sweep takes about half the path.
    let path = speed * duration;
    let rows = ((path / (2.0 * (x1 - x0))).floor() as usize).clamp(2, 200);
    let spacing = (y1 - y0) / (rows - 1) as f64;
    let flip_x = r.random_bool(0.5);
    let flip_y = r.random_bool(0.5);
    let map = |x: f64, y: f64| -> Point {
        let x = if flip_x { x0 + x1 - x } else { x };
        let y = if flip_y { y0 + y1 - y } else { y };
        [x, y, meta.area_min[2]]
    };
    let mut corners = Vec::new();
    for i in 0..rows {
        let y = y0 + i as f64 * spacing;
        let (a, b) = if i % 2 == 0 { (x0, x1) } else { (x1, x0) };
        corners.push(map(a, y));
        corners.push(map(b, y));
    }
    let mut legs = Vec::new();
    let mut t = 0.0;
    let mut forward = true;
    while t <= duration {
        let seq: Vec<Point> = if forward {
            corners.clone()
        } else {
            corners.iter().rev().copied().collect()
        };
        for pair in seq.windows(2) {
            let dt = leg_duration(&pair[0], &pair[1], speed);
            legs.push((t, pair[0], t + dt, pair[1]));
            t += dt;
        }
        forward = !forward;
    }
    Legs { legs }
}

/// One position per sample period over `[0, duration)`; timestamps are `k·period`.
pub fn gen_trajectory(
    meta: &ScenarioMeta,
    motion: &MotionConfig,
    duration: f64,
) -> Result<Vec<TrajectoryPoint>> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!("duration {duration} must be positive")));
    }
    if !(motion.speed > 0.0 && motion.speed.is_finite()) {
        return Err(Error::invalid(format!("speed {} must be positive", motion.speed)));
    }
    if motion.dwell < 0.0 {
        return Err(Error::invalid("dwell must be non-negative"));
    }
    let n = (duration / meta.sample_period).round() as usize;
    let mut r = rng::seeded(motion.seed);
    let time = |k: usize| k as f64 * meta.sample_period;

    let points = match motion.kind {
        MotionKind::RandomWaypoint => {
            let start = random_point(meta, &mut r);
            let legs = waypoint_legs(meta, start, motion.speed, motion.dwell, duration, &mut r);
            (0..n)
                .map(|k| TrajectoryPoint {
                    timestamp: time(k),
                    position: legs.at(time(k)).0,
                    orientation: None,
                })
                .collect()
        }
        MotionKind::ManualPath => {
            let legs = serpentine_legs(meta, motion.speed, duration, &mut r);
            (0..n)
                .map(|k| TrajectoryPoint {
                    timestamp: time(k),
                    position: legs.at(time(k)).0,
                    orientation: None,
                })
                .collect()
        }
        MotionKind::RotationThenWalk => {
            let mut spot = meta.area_min;
            for (i, v) in spot.iter_mut().enumerate().take(meta.dims()) {
                *v = 0.5 * (meta.area_min[i] + meta.area_max[i]);
            }
            let rotation = motion.dwell.min(0.5 * duration);
            let walk_end = duration - rotation;
            let legs = waypoint_legs(meta, spot, motion.speed, 0.0, walk_end - rotation, &mut r);
            let yaw0 = r.random_range(0.0..std::f64::consts::TAU);
            (0..n)
                .map(|k| {
                    let t = time(k);
                    if t < rotation || t >= walk_end {
                        TrajectoryPoint {
                            timestamp: t,
                            position: spot,
                            orientation: Some(yaw_quaternion(yaw0 + TURNTABLE_RATE * t)),
                        }
                    } else {
                        let (p, heading) = legs.at(t - rotation);
                        TrajectoryPoint {
                            timestamp: t,
                            position: p,
                            orientation: Some(yaw_quaternion(heading)),
                        }
                    }
                })
                .collect()
        }
    };
    Ok(points)
}
