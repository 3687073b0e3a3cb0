//! Optimal reciprocal collision avoidance for pedestrians.
//!
//! The linear programs follow the incremental 2-D construction used by
//! RVO2: a randomized-free sequential LP over half-planes inside the speed
//! disc, with a fallback that minimizes the largest violation when the
//! half-planes have no common point.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-9;

/// Shift applied to the preferred velocity, along its counter-clockwise
/// normal, so exactly symmetric encounters resolve the same way every time.
pub const TIE_BREAK: f64 = 1e-6;
pub const PEDESTRIAN_RADIUS: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaAgent {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub preferred_speed: f64,
    pub goal: Vec2,
    pub max_speed: f64,
    pub time_horizon: f64,
    pub neighbor_dist: f64,
}

impl OrcaAgent {
    /// Pedestrian with the default parameters.
    pub fn pedestrian(position: Vec2, goal: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            radius: PEDESTRIAN_RADIUS,
            preferred_speed: 1.0,
            goal,
            max_speed: 1.0,
            time_horizon: 5.0,
            neighbor_dist: 10.0,
        }
    }

    /// Velocity toward the goal at preferred speed, slowing so the agent
    /// stops on the goal at the end of the period.
    pub fn preferred_velocity(&self, tau: f64) -> Vec2 {
        let to_goal = self.goal - self.position;
        let dist = to_goal.norm();
        if dist < 1e-12 {
            return Vec2::ZERO;
        }
        let speed = self.preferred_speed.min(dist / tau);
        to_goal * (speed / dist)
    }
}

/// A neighbor that does not react (robots, from the pedestrians' view).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Allowed side `{v : (v - point) . normal >= 0}` in velocity space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub point: Vec2,
    /// Unit normal pointing into the allowed side.
    pub normal: Vec2,
}

impl HalfPlane {
    /// Boundary direction with the allowed side on its left.
    fn direction(&self) -> Vec2 {
        Vec2::new(self.normal.y, -self.normal.x)
    }

    fn from_direction(point: Vec2, direction: Vec2) -> Self {
        Self {
            point,
            normal: direction.perp(),
        }
    }

    /// Signed violation of `v`; positive outside.
    pub fn violation(&self, v: Vec2) -> f64 {
        -(v - self.point).dot(self.normal)
    }
}

/// Constraint induced by one neighbor. `share` is the fraction of the
/// avoidance this agent takes on: 0.5 between pedestrians, 1 against robots.
fn orca_half_plane(
    agent: &OrcaAgent,
    pos: Vec2,
    vel: Vec2,
    radius: f64,
    share: f64,
    tau: f64,
) -> HalfPlane {
    let rel_pos = pos - agent.position;
    let rel_vel = agent.velocity - vel;
    let dist_sq = rel_pos.norm_sq();
    let r = agent.radius + radius;
    let r_sq = r * r;
    let inv_th = 1.0 / agent.time_horizon;

    let (direction, u) = if dist_sq > r_sq {
        let w = rel_vel - rel_pos * inv_th;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > r_sq * w_len_sq {
            // closest to the cut-off circle
            let w_len = w_len_sq.sqrt();
            let unit_w = w / w_len;
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (r * inv_th - w_len),
            )
        } else {
            // closest to one of the legs
            let leg = (dist_sq - r_sq).sqrt();
            let direction = if rel_pos.cross(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * r,
                    rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * r,
                    -rel_pos.x * r + rel_pos.y * leg,
                ) / dist_sq
            };
            let dot2 = rel_vel.dot(direction);
            (direction, direction * dot2 - rel_vel)
        }
    } else {
        // already overlapping: resolve within one period
        let inv_step = 1.0 / tau;
        let w = rel_vel - rel_pos * inv_step;
        let w_len = w.norm();
        let unit_w = if w_len > 0.0 {
            w / w_len
        } else {
            Vec2::new(1.0, 0.0)
        };
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (r * inv_step - w_len),
        )
    };
    HalfPlane::from_direction(agent.velocity + u * share, direction)
}

fn lp1(
    lines: &[HalfPlane],
    no: usize,
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
) -> Option<Vec2> {
    let line = &lines[no];
    let dir = line.direction();
    let dot = line.point.dot(dir);
    let disc = dot * dot + radius * radius - line.point.norm_sq();
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let mut t_left = -dot - sq;
    let mut t_right = -dot + sq;
    for other in &lines[..no] {
        let odir = other.direction();
        let denom = dir.cross(odir);
        let numer = odir.cross(line.point - other.point);
        if denom.abs() <= EPS {
            if numer < 0.0 {
                return None;
            }
            continue;
        }
        let t = numer / denom;
        if denom >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return None;
        }
    }
    let t = if direction_opt {
        if opt.dot(dir) > 0.0 {
            t_right
        } else {
            t_left
        }
    } else {
        dir.dot(opt - line.point).clamp(t_left, t_right)
    };
    Some(line.point + dir * t)
}

/// Returns the index of the first line that could not be satisfied
/// (`lines.len()` on success) and the best velocity found.
fn lp2(lines: &[HalfPlane], radius: f64, opt: Vec2, direction_opt: bool) -> (usize, Vec2) {
    let mut result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for (i, line) in lines.iter().enumerate() {
        if line.direction().cross(line.point - result) > 0.0 {
            match lp1(lines, i, radius, opt, direction_opt) {
                Some(r) => result = r,
                None => return (i, result),
            }
        }
    }
    (lines.len(), result)
}

/// Minimizes the largest violation from `begin` on.
fn lp3(lines: &[HalfPlane], begin: usize, radius: f64, mut result: Vec2) -> Vec2 {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let li = &lines[i];
        let di = li.direction();
        if di.cross(li.point - result) > distance {
            let mut proj: Vec<HalfPlane> = Vec::with_capacity(i);
            for lj in &lines[..i] {
                let dj = lj.direction();
                let det = di.cross(dj);
                let point = if det.abs() <= EPS {
                    if di.dot(dj) > 0.0 {
                        continue;
                    }
                    (li.point + lj.point) * 0.5
                } else {
                    li.point + di * (dj.cross(li.point - lj.point) / det)
                };
                proj.push(HalfPlane::from_direction(point, (dj - di).normalized()));
            }
            let temp = result;
            let (fail, r) = lp2(&proj, radius, Vec2::new(-di.y, di.x), true);
            result = if fail < proj.len() { temp } else { r };
            distance = di.cross(li.point - result);
        }
    }
    result
}

/// Velocity closest to `preferred` inside the speed disc and all half-planes,
/// or the least-violating one when they conflict.
pub fn solve_velocity(lines: &[HalfPlane], max_speed: f64, preferred: Vec2) -> Vec2 {
    let (fail, result) = lp2(lines, max_speed, preferred, false);
    if fail < lines.len() {
        lp3(lines, fail, max_speed, result)
    } else {
        result
    }
}

/// Half-planes for agent `idx`, nearest neighbor first.
pub fn half_planes(
    agents: &[OrcaAgent],
    idx: usize,
    obstacles: &[Obstacle],
    tau: f64,
) -> Vec<HalfPlane> {
    let a = &agents[idx];
    let range_sq = a.neighbor_dist * a.neighbor_dist;
    // (distance^2, kind, index) sorted for a reproducible constraint order
    let mut near: Vec<(f64, usize, usize)> = Vec::new();
    for (j, b) in agents.iter().enumerate() {
        if j != idx {
            let d = (b.position - a.position).norm_sq();
            if d < range_sq {
                near.push((d, 0, j));
            }
        }
    }
    for (j, o) in obstacles.iter().enumerate() {
        let d = (o.position - a.position).norm_sq();
        if d < range_sq {
            near.push((d, 1, j));
        }
    }
    near.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    near.into_iter()
        .map(|(_, kind, j)| {
            if kind == 0 {
                let b = &agents[j];
                orca_half_plane(a, b.position, b.velocity, b.radius, 0.5, tau)
            } else {
                let o = &obstacles[j];
                orca_half_plane(a, o.position, o.velocity, o.radius, 1.0, tau)
            }
        })
        .collect()
}

/// New velocities for all pedestrians. Robots appear as non-reactive
/// obstacles; pedestrians take full responsibility for avoiding them.
pub fn orca_step(agents: &[OrcaAgent], obstacles: &[Obstacle], tau: f64) -> Vec<Vec2> {
    assert!(tau > 0.0, "tau must be positive");
    (0..agents.len())
        .map(|i| {
            let a = &agents[i];
            let mut pref = a.preferred_velocity(tau);
            let n = pref.norm();
            if n > 0.0 {
                pref += pref.perp() * (TIE_BREAK / n);
            }
            let lines = half_planes(agents, i, obstacles, tau);
            solve_velocity(&lines, a.max_speed, pref)
        })
        .collect()
}
