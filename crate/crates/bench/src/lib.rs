//! Shared fixtures for the benchmarks.

use crowdgame::crowd_sim::{OrcaAgent, World};
use crowdgame::harness::{run_episode_steps, CmpcPlanner, ExperimentConfig};
use crowdgame::objectives::{robot_contexts, RobotContext};
use crowdgame::predictor::ConstantVelocity;
use crowdgame::{CostParams, Layout, PositionHistory, Vec2};

/// Planner inputs of one MPC step in the middle of a crowded episode.
pub struct StepFixture {
    pub params: CostParams,
    pub contexts: Vec<RobotContext>,
    pub history: PositionHistory,
}

/// Plays `warmup` CMPC steps of a circular crossing with `num_humans`
/// pedestrians and returns the planner inputs of the next step.
pub fn mid_episode(num_humans: usize, seed: u64, warmup: usize) -> StepFixture {
    let cfg = ExperimentConfig {
        num_humans,
        ..Default::default()
    };
    let sc = cfg.scenario(seed, Layout::Circular).expect("scenario");
    let mut world = World::from_scenario(&sc).expect("world");
    run_episode_steps(
        &mut world,
        &mut CmpcPlanner::default(),
        &ConstantVelocity,
        warmup,
    )
    .expect("warmup");
    StepFixture {
        contexts: robot_contexts(&world.robots, &world.goals, &world.u_prev, &world.params),
        params: world.params.clone(),
        history: world.history.clone(),
    }
}

/// `n` pedestrians evenly spaced on a circle of radius `r`, heading for the
/// antipode.
pub fn pedestrian_circle(n: usize, r: f64) -> Vec<OrcaAgent> {
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let p = Vec2::new(r * a.cos(), r * a.sin());
            OrcaAgent::pedestrian(p, -p)
        })
        .collect()
}
