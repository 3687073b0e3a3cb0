//! Episode description: parameters, robots, pedestrians and layout.

use crate::error::Error;
use crate::geom::Vec2;
use crate::params::{validate_pair_dims, validate_params, CostParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    #[serde(alias = "circular_crossing")]
    Circular,
    #[serde(alias = "perpendicular_crossing")]
    Perpendicular,
    Custom,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Circular => "circular",
            Layout::Perpendicular => "perpendicular",
            Layout::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
    pub goal: Vec2,
}

fn default_radius() -> f64 {
    0.3
}

fn default_speed() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    pub position: Vec2,
    pub goal: Vec2,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_speed")]
    pub preferred_speed: f64,
}

/// A complete episode configuration; this is also the JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub params: CostParams,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub humans: Vec<HumanSpec>,
    #[serde(default = "default_layout")]
    pub layout: Layout,
    #[serde(default)]
    pub seed: u64,
}

fn default_layout() -> Layout {
    Layout::Custom
}

impl Scenario {
    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn num_humans(&self) -> usize {
        self.humans.len()
    }

    /// Initial positions, robots first.
    pub fn initial_positions(&self) -> Vec<Vec2> {
        self.robots
            .iter()
            .map(|r| r.position)
            .chain(self.humans.iter().map(|h| h.position))
            .collect()
    }

    /// Checks parameters, dimensions and initial spacing.
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems: Vec<String> = validate_params(&self.params)
            .into_iter()
            .chain(validate_pair_dims(&self.params, self.robots.len()))
            .map(|v| v.to_string())
            .collect();
        let all = self.initial_positions();
        let finite = all.iter().all(|p| p.is_finite())
            && self
                .robots
                .iter()
                .all(|r| r.goal.is_finite() && r.velocity.is_finite())
            && self.humans.iter().all(|h| h.goal.is_finite());
        if !finite {
            problems.push("positions, velocities and goals must be finite".into());
        }
        for h in &self.humans {
            if !(h.radius > 0.0) || !(h.preferred_speed >= 0.0) {
                problems.push("human radius must be > 0 and preferred speed >= 0".into());
                break;
            }
        }
        'outer: for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].distance(all[j]) < self.params.d_min {
                    problems.push(format!(
                        "agents {i} and {j} start {:.3} m apart (< d_min)",
                        all[i].distance(all[j])
                    ));
                    break 'outer;
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(problems.join("; ")))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, Error> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "params": {"tau": 0.4},
        "robots": [{"position": [0, 0], "goal": [4, 0]}],
        "humans": [{"position": [2, 3], "goal": [2, -3]}],
        "layout": "custom",
        "seed": 7
    }"#;

    #[test]
    fn parses_minimal_config() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        assert_eq!(s.num_robots(), 1);
        assert_eq!(s.humans[0].radius, 0.3);
        assert_eq!(s.humans[0].preferred_speed, 1.0);
        assert_eq!(s.robots[0].velocity, Vec2::ZERO);
        assert_eq!(s.seed, 7);
        s.validate().unwrap();
    }

    #[test]
    fn crowded_start_is_rejected() {
        let mut s = Scenario::from_json_str(MINIMAL).unwrap();
        s.humans[0].position = Vec2::new(0.5, 0.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::from_json_str(MINIMAL).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json_str(&text).unwrap(), s);
    }
}
