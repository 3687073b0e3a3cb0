//! Randomized start/goal layouts.

use crate::crowd_sim::PEDESTRIAN_RADIUS;
use crate::error::Error;
use crate::geom::Vec2;
use crate::params::CostParams;
use crate::scenario::{HumanSpec, Layout, RobotSpec, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub const DEFAULT_CIRCLE_RADIUS: f64 = 4.0;
const JITTER: f64 = 0.5;
const MAX_ATTEMPTS: usize = 10_000;

fn jitter(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-JITTER..=JITTER)
}

#[cfg(test)]
fn spaced(points: &[Vec2], d_min: f64) -> bool {
    points
        .iter()
        .enumerate()
        .all(|(i, a)| points[i + 1..].iter().all(|b| a.distance(*b) >= d_min))
}

fn flock_spacing(params: &CostParams, m: usize) -> f64 {
    if m >= 2 {
        params.d_flock.get(0, 1)
    } else {
        1.2
    }
}

fn build(
    params: &CostParams,
    layout: Layout,
    seed: u64,
    robots: Vec<(Vec2, Vec2)>,
    humans: Vec<(Vec2, Vec2)>,
) -> Scenario {
    Scenario {
        params: params.clone(),
        robots: robots
            .into_iter()
            .map(|(position, goal)| RobotSpec {
                position,
                velocity: Vec2::ZERO,
                goal,
            })
            .collect(),
        humans: humans
            .into_iter()
            .map(|(position, goal)| HumanSpec {
                position,
                goal,
                radius: PEDESTRIAN_RADIUS,
                preferred_speed: 1.0,
            })
            .collect(),
        layout,
        seed,
    }
}

/// Appends `candidate` if its start keeps `d_min` to every start so far
/// and its goal keeps `d_min` to every goal of the same group.
fn try_place(
    placed: &mut Vec<(Vec2, Vec2)>,
    others: &[(Vec2, Vec2)],
    candidate: (Vec2, Vec2),
    d_min: f64,
) -> bool {
    let start_ok = placed
        .iter()
        .chain(others)
        .all(|a| a.0.distance(candidate.0) >= d_min);
    let goal_ok = placed.iter().all(|a| a.1.distance(candidate.1) >= d_min);
    if start_ok && goal_ok {
        placed.push(candidate);
    }
    start_ok && goal_ok
}

/// Draws pedestrians one at a time, redrawing each until it fits.
fn place_humans(
    rng: &mut ChaCha8Rng,
    robots: &[(Vec2, Vec2)],
    num_humans: usize,
    d_min: f64,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (Vec2, Vec2),
) -> Option<Vec<(Vec2, Vec2)>> {
    let mut humans = Vec::with_capacity(num_humans);
    for _ in 0..num_humans {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            if try_place(&mut humans, robots, draw(rng), d_min) {
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(humans)
}

/// Circle crossing. Pedestrians start anywhere on the circle and head for
/// the antipode of their start. The robots start abreast along the tangent,
/// `d_flock` apart, around a jittered point on the circle, and the whole
/// group crosses to the antipode of that point, keeping its formation.
pub fn gen_circular(
    params: &CostParams,
    seed: u64,
    num_robots: usize,
    num_humans: usize,
    radius: f64,
) -> Result<Scenario, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = flock_spacing(params, num_robots);
    let offset = (num_robots as f64 - 1.0) / 2.0;
    let on_circle = |theta: f64, rng: &mut ChaCha8Rng| {
        let radial = Vec2::new(theta.cos(), theta.sin());
        radial * (radius + jitter(rng)) + radial.perp() * jitter(rng)
    };
    for _ in 0..MAX_ATTEMPTS {
        let base = rng.gen_range(0.0..2.0 * PI);
        let center = on_circle(base, &mut rng);
        let tangent = Vec2::new(base.cos(), base.sin()).perp();
        let mut robots = Vec::with_capacity(num_robots);
        let ok = (0..num_robots).all(|k| {
            let start = center + tangent * ((k as f64 - offset) * spacing);
            try_place(
                &mut robots,
                &[],
                (start, start - center * 2.0),
                params.d_min,
            )
        });
        if !ok {
            continue;
        }
        let humans = place_humans(&mut rng, &robots, num_humans, params.d_min, |rng| {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let start = on_circle(theta, rng);
            (start, -start)
        });
        if let Some(humans) = humans {
            return Ok(build(params, Layout::Circular, seed, robots, humans));
        }
    }
    Err(Error::Invalid(format!(
        "no circular layout with {num_robots} robots and {num_humans} humans after {MAX_ATTEMPTS} draws"
    )))
}

/// Perpendicular crossing: the robots start abreast on the left and drive
/// to the right; pedestrians cross the corridor vertically.
pub fn gen_perpendicular(
    params: &CostParams,
    seed: u64,
    num_robots: usize,
    num_humans: usize,
) -> Result<Scenario, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = flock_spacing(params, num_robots);
    let half = DEFAULT_CIRCLE_RADIUS;
    let offset = (num_robots as f64 - 1.0) / 2.0;
    let robots: Vec<(Vec2, Vec2)> = (0..num_robots)
        .map(|k| {
            let y = (k as f64 - offset) * spacing;
            (Vec2::new(-half, y), Vec2::new(half, y))
        })
        .collect();
    let humans = place_humans(&mut rng, &robots, num_humans, params.d_min, |rng| {
        let x = rng.gen_range(-half * 0.6..=half * 0.6);
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let start = Vec2::new(x + jitter(rng), side * half + jitter(rng));
        let goal = Vec2::new(x + jitter(rng), -side * half + jitter(rng));
        (start, goal)
    });
    match humans {
        Some(humans) => Ok(build(params, Layout::Perpendicular, seed, robots, humans)),
        None => Err(Error::Invalid(format!(
            "no perpendicular layout with {num_robots} robots and {num_humans} humans"
        ))),
    }
}

/// Generates the given layout; `Custom` is rejected.
pub fn generate(
    params: &CostParams,
    layout: Layout,
    seed: u64,
    num_robots: usize,
    num_humans: usize,
    radius: f64,
) -> Result<Scenario, Error> {
    match layout {
        Layout::Circular => gen_circular(params, seed, num_robots, num_humans, radius),
        Layout::Perpendicular => gen_perpendicular(params, seed, num_robots, num_humans),
        Layout::Custom => Err(Error::Invalid("custom layouts are not generated".into())),
    }
}
