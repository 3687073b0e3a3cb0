//! Closed-loop simulation: robots apply their first planned control, ORCA
//! pedestrians react, and the observation window advances.
//!
//! Trajectory logs are JSON lines. The first line is the header
//! `{"type": "episode", "tau", "num_robots", "num_humans", "robot_goals",
//! "human_goals", "human_radii", "layout", "seed", "method"}`; every
//! following line is
//! `{"type": "step", "step", "time", "robots": [{"position", "velocity"}],
//! "humans": [{"position", "velocity"}], "min_robot_human_distance",
//! "ibr_iterations"}` with vectors as `[x, y]`. The distance is `null`
//! without humans; `ibr_iterations` is the IBR round count of the MPC step
//! that produced the row (0 for the initial row).

pub mod orca;

pub use orca::{orca_step, HalfPlane, Obstacle, OrcaAgent, PEDESTRIAN_RADIUS};

use crate::dynamics::step;
use crate::error::Error;
use crate::geom::Vec2;
use crate::history::PositionHistory;
use crate::params::CostParams;
use crate::scenario::{Layout, Scenario};
use crate::types::{Control, RobotState};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub robots: Vec<AgentSnapshot>,
    pub humans: Vec<AgentSnapshot>,
    pub min_robot_human_distance: Option<f64>,
    #[serde(default)]
    pub ibr_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub tau: f64,
    pub num_robots: usize,
    pub num_humans: usize,
    pub robot_goals: Vec<Vec2>,
    pub human_goals: Vec<Vec2>,
    pub human_radii: Vec<f64>,
    pub layout: Layout,
    pub seed: u64,
    #[serde(default)]
    pub method: String,
}

/// Everything recorded about one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub header: EpisodeHeader,
    /// Row 0 is the initial state.
    pub steps: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Episode(EpisodeHeader),
    Step(StepRecord),
}

impl SimRecord {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), Error> {
        serde_json::to_writer(&mut w, &LogLine::Episode(self.header.clone()))?;
        w.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, &LogLine::Step(s.clone()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, Error> {
        let mut header = None;
        let mut steps = Vec::new();
        for (no, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| Error::Invalid(format!("log line {}: {e}", no + 1)))?;
            match parsed {
                LogLine::Episode(h) if header.is_none() => header = Some(h),
                LogLine::Episode(_) => {
                    return Err(Error::Invalid(format!("second header at line {}", no + 1)))
                }
                LogLine::Step(s) => steps.push(s),
            }
        }
        let header = header.ok_or_else(|| Error::Invalid("log has no episode header".into()))?;
        Ok(Self { header, steps })
    }
}

/// Mutable simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub params: CostParams,
    pub robots: Vec<RobotState>,
    pub goals: Vec<Vec2>,
    pub humans: Vec<OrcaAgent>,
    pub history: PositionHistory,
    /// Controls applied in the last period.
    pub u_prev: Vec<Control>,
    pub step: usize,
    /// Radius robots present to pedestrians.
    pub robot_radius: f64,
}

impl World {
    pub fn from_scenario(sc: &Scenario) -> Result<Self, Error> {
        sc.validate()?;
        let humans: Vec<OrcaAgent> = sc
            .humans
            .iter()
            .map(|h| {
                let mut a = OrcaAgent::pedestrian(h.position, h.goal);
                a.radius = h.radius;
                a.preferred_speed = h.preferred_speed;
                a.max_speed = h.preferred_speed;
                a
            })
            .collect();
        Ok(Self {
            params: sc.params.clone(),
            robots: sc
                .robots
                .iter()
                .map(|r| RobotState::new(r.position, r.velocity))
                .collect(),
            goals: sc.robots.iter().map(|r| r.goal).collect(),
            humans,
            history: PositionHistory::filled(
                sc.params.history_len,
                sc.num_robots(),
                sc.initial_positions(),
            ),
            u_prev: vec![Vec2::ZERO; sc.num_robots()],
            step: 0,
            robot_radius: sc.params.d_min / 2.0,
        })
    }

    pub fn header(&self, sc: &Scenario, method: &str) -> EpisodeHeader {
        EpisodeHeader {
            tau: self.params.tau,
            num_robots: self.robots.len(),
            num_humans: self.humans.len(),
            robot_goals: self.goals.clone(),
            human_goals: self.humans.iter().map(|h| h.goal).collect(),
            human_radii: self.humans.iter().map(|h| h.radius).collect(),
            layout: sc.layout,
            seed: sc.seed,
            method: method.to_string(),
        }
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.params.tau
    }

    pub fn min_robot_human_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for r in &self.robots {
            for h in &self.humans {
                let d = r.position.distance(h.position);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    pub fn snapshot(&self) -> StepRecord {
        StepRecord {
            step: self.step,
            time: self.time(),
            robots: self
                .robots
                .iter()
                .map(|r| AgentSnapshot {
                    position: r.position,
                    velocity: r.velocity,
                })
                .collect(),
            humans: self
                .humans
                .iter()
                .map(|h| AgentSnapshot {
                    position: h.position,
                    velocity: h.velocity,
                })
                .collect(),
            min_robot_human_distance: self.min_robot_human_distance(),
            ibr_iterations: 0,
        }
    }

    /// Advances one period with the given robot controls.
    pub fn step_episode(&mut self, controls: &[Control]) -> Result<StepRecord, Error> {
        if controls.len() != self.robots.len() {
            return Err(Error::Arity {
                what: "robot controls",
                expected: self.robots.len(),
                got: controls.len(),
            });
        }
        let tau = self.params.tau;
        let obstacles: Vec<Obstacle> = self
            .robots
            .iter()
            .map(|r| Obstacle {
                position: r.position,
                velocity: r.velocity,
                radius: self.robot_radius,
            })
            .collect();
        let velocities = orca_step(&self.humans, &obstacles, tau);
        let robots = self
            .robots
            .iter()
            .zip(controls)
            .map(|(x, u)| step(x, *u, tau))
            .collect::<Result<Vec<_>, _>>()?;
        self.robots = robots;
        for (h, v) in self.humans.iter_mut().zip(velocities) {
            h.velocity = v;
            h.position += v * tau;
        }
        let mut slice: Vec<Vec2> = self.robots.iter().map(|r| r.position).collect();
        slice.extend(self.humans.iter().map(|h| h.position));
        self.history.push(slice)?;
        self.u_prev = controls.to_vec();
        self.step += 1;
        Ok(self.snapshot())
    }
}
