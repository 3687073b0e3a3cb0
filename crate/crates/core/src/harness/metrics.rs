//! Episode metrics. All are pure functions of the recorded trajectory.

use crate::crowd_sim::SimRecord;
use crate::geom::Vec2;

pub const GOAL_RADIUS: f64 = 0.3;
pub const PERSONAL_SPACE: f64 = 0.8;
pub const DISCOMFORT_FACTOR: f64 = 1.2;

/// First row at which each robot is inside its goal disc.
pub fn arrival_steps(rec: &SimRecord, goal_radius: f64) -> Vec<Option<usize>> {
    (0..rec.header.num_robots)
        .map(|i| {
            let goal = rec.header.robot_goals[i];
            rec.steps
                .iter()
                .find(|s| s.robots[i].position.distance(goal) <= goal_radius)
                .map(|s| s.step)
        })
        .collect()
}

/// Time at which the last robot arrived, if all did.
pub fn metric_travel_time(rec: &SimRecord) -> Option<f64> {
    let arrivals = arrival_steps(rec, GOAL_RADIUS);
    let last = arrivals
        .into_iter()
        .try_fold(0usize, |acc, a| a.map(|s| acc.max(s)))?;
    Some(last as f64 * rec.header.tau)
}

/// All robots reached their goal discs within `t_max`.
pub fn metric_success(rec: &SimRecord, t_max: f64) -> bool {
    metric_travel_time(rec).is_some_and(|t| t <= t_max + 1e-9)
}

pub fn metric_collision(rec: &SimRecord) -> bool {
    rec.steps.iter().any(|s| {
        s.robots.iter().any(|r| {
            s.humans
                .iter()
                .any(|h| r.position.distance(h.position) < PERSONAL_SPACE)
        })
    })
}

/// Some robot's projected segment `[s, s + factor v]` touches some human's.
pub fn metric_discomfort(rec: &SimRecord, factor: f64) -> bool {
    rec.steps.iter().any(|s| {
        s.robots.iter().any(|r| {
            s.humans.iter().any(|h| {
                segments_intersect(
                    r.position,
                    r.position + r.velocity * factor,
                    h.position,
                    h.position + h.velocity * factor,
                )
            })
        })
    })
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection, endpoints included. Degenerate segments are
/// points.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Smallest robot-human distance per row (`None` without humans).
pub fn min_distances(rec: &SimRecord) -> Vec<Option<f64>> {
    rec.steps
        .iter()
        .map(|s| s.min_robot_human_distance)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd_sim::{AgentSnapshot, EpisodeHeader, StepRecord};
    use crate::scenario::Layout;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn snap(p: Vec2, vel: Vec2) -> AgentSnapshot {
        AgentSnapshot {
            position: p,
            velocity: vel,
        }
    }

    fn record(goals: Vec<Vec2>, rows: Vec<(Vec<AgentSnapshot>, Vec<AgentSnapshot>)>) -> SimRecord {
        let num_humans = rows.first().map_or(0, |r| r.1.len());
        SimRecord {
            header: EpisodeHeader {
                tau: 0.4,
                num_robots: goals.len(),
                num_humans,
                robot_goals: goals,
                human_goals: vec![Vec2::ZERO; num_humans],
                human_radii: vec![0.3; num_humans],
                layout: Layout::Custom,
                seed: 0,
                method: String::new(),
            },
            steps: rows
                .into_iter()
                .enumerate()
                .map(|(k, (robots, humans))| StepRecord {
                    step: k,
                    time: k as f64 * 0.4,
                    robots,
                    humans,
                    min_robot_human_distance: None,
                    ibr_iterations: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn spawned_at_goal() {
        let rec = record(
            vec![v(1.0, 1.0)],
            vec![(vec![snap(v(1.0, 1.0), Vec2::ZERO)], vec![])],
        );
        assert!(metric_success(&rec, 25.0));
        assert_eq!(metric_travel_time(&rec), Some(0.0));
        assert!(!metric_collision(&rec));
    }

    #[test]
    fn missing_robot_fails() {
        let rec = record(
            vec![v(1.0, 1.0), v(5.0, 5.0)],
            vec![(
                vec![snap(v(1.0, 1.0), Vec2::ZERO), snap(v(0.0, 0.0), Vec2::ZERO)],
                vec![],
            )],
        );
        assert!(!metric_success(&rec, 25.0));
        assert_eq!(metric_travel_time(&rec), None);
    }

    #[test]
    fn travel_time_is_last_arrival() {
        let rows = (0..6)
            .map(|k| {
                let k = k as f64;
                (
                    vec![
                        snap(v(k, 0.0), Vec2::ZERO),
                        snap(v(0.0, 2.0 * k), Vec2::ZERO),
                    ],
                    vec![],
                )
            })
            .collect();
        let rec = record(vec![v(2.0, 0.0), v(0.0, 8.0)], rows);
        assert_eq!(arrival_steps(&rec, 0.3), vec![Some(2), Some(4)]);
        assert!((metric_travel_time(&rec).unwrap() - 1.6).abs() < 1e-12);
    }

    #[test]
    fn collision_threshold() {
        let near = |d: f64| {
            record(
                vec![v(9.0, 9.0)],
                vec![(
                    vec![snap(v(0.0, 0.0), Vec2::ZERO)],
                    vec![snap(v(d, 0.0), Vec2::ZERO)],
                )],
            )
        };
        assert!(!metric_collision(&near(0.81)));
        assert!(metric_collision(&near(0.79)));
        let empty = record(
            vec![v(9.0, 9.0)],
            vec![(vec![snap(v(0.0, 0.0), Vec2::ZERO)], vec![])],
        );
        assert!(!metric_collision(&empty));
    }

    #[test]
    fn discomfort_examples() {
        let crossing = record(
            vec![v(9.0, 9.0)],
            vec![(
                vec![snap(v(0.0, 0.0), v(1.0, 0.0))],
                vec![snap(v(0.6, -0.6), v(0.0, 1.0))],
            )],
        );
        assert!(metric_discomfort(&crossing, 1.2));
        let parallel = record(
            vec![v(9.0, 9.0)],
            vec![(
                vec![snap(v(0.0, 0.0), v(1.0, 0.0))],
                vec![snap(v(0.0, 1.0), v(1.0, 0.0))],
            )],
        );
        assert!(!metric_discomfort(&parallel, 1.2));
        let still = record(
            vec![v(9.0, 9.0)],
            vec![(
                vec![snap(v(0.0, 0.0), Vec2::ZERO)],
                vec![snap(v(1.0, 0.0), Vec2::ZERO)],
            )],
        );
        assert!(!metric_discomfort(&still, 1.2));
        let same = record(
            vec![v(9.0, 9.0)],
            vec![(
                vec![snap(v(1.0, 0.0), Vec2::ZERO)],
                vec![snap(v(1.0, 0.0), Vec2::ZERO)],
            )],
        );
        assert!(metric_discomfort(&same, 1.2));
    }

    #[test]
    fn touching_endpoints_count() {
        assert!(segments_intersect(
            v(0.0, 0.0),
            v(1.0, 0.0),
            v(1.0, 0.0),
            v(1.0, 1.0)
        ));
        assert!(segments_intersect(
            v(0.0, 0.0),
            v(2.0, 0.0),
            v(1.0, 0.0),
            v(3.0, 0.0)
        ));
        assert!(!segments_intersect(
            v(0.0, 0.0),
            v(1.0, 0.0),
            v(1.5, 0.0),
            v(3.0, 0.0)
        ));
    }
}
