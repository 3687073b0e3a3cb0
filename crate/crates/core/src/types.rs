//! Agent identifiers, robot states and control strategies.

use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentKind {
    Robot,
    Human,
}

/// Index of an agent in the joint ordering: robots occupy `0..M`, humans `M..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentId {
    pub index: usize,
    pub kind: AgentKind,
}

impl AgentId {
    /// Classifies `index` given the robot count `num_robots`.
    pub fn from_index(index: usize, num_robots: usize) -> Self {
        let kind = if index < num_robots {
            AgentKind::Robot
        } else {
            AgentKind::Human
        };
        Self { index, kind }
    }
}

/// Double-integrator state `x = [s; v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl RobotState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite()
    }
}

/// Acceleration command, applied with zero-order hold over one period.
pub type Control = Vec2;

/// One robot's control sequence over the horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Strategy(pub Vec<Control>);

impl Strategy {
    pub fn zeros(horizon: usize) -> Self {
        Strategy(vec![Vec2::ZERO; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.0.len()
    }

    pub fn controls(&self) -> &[Control] {
        &self.0
    }

    /// Stacked `[ax_0, ay_0, ax_1, ay_1, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.0.len());
        self.write_flat(&mut out);
        out
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for u in &self.0 {
            out.push(u.x);
            out.push(u.y);
        }
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        debug_assert!(flat.len().is_multiple_of(2));
        Strategy(
            flat.chunks_exact(2)
                .map(|c| Vec2::new(c[0], c[1]))
                .collect(),
        )
    }

    /// Clamps every component to `[-a_max, a_max]`.
    pub fn clamped(&self, a_max: f64) -> Self {
        Strategy(
            self.0
                .iter()
                .map(|u| Vec2::new(u.x.clamp(-a_max, a_max), u.y.clamp(-a_max, a_max)))
                .collect(),
        )
    }

    /// Receding-horizon warm start: drop the first control, repeat the last.
    pub fn shifted(&self) -> Self {
        let mut v: Vec<Control> = self.0.iter().skip(1).copied().collect();
        if let Some(last) = self.0.last() {
            v.push(*last);
        }
        Strategy(v)
    }

    pub fn within_box(&self, a_max: f64) -> bool {
        self.0
            .iter()
            .all(|u| u.x.abs() <= a_max && u.y.abs() <= a_max)
    }
}

/// Stacked strategies of all `M` robots, indexed by robot id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointStrategy(pub Vec<Strategy>);

impl JointStrategy {
    pub fn zeros(num_robots: usize, horizon: usize) -> Self {
        JointStrategy(vec![Strategy::zeros(horizon); num_robots])
    }

    pub fn num_robots(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, i: usize) -> &Strategy {
        &self.0[i]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for s in &self.0 {
            s.write_flat(&mut out);
        }
        out
    }

    pub fn from_flat(flat: &[f64], num_robots: usize) -> Self {
        if num_robots == 0 {
            return JointStrategy(Vec::new());
        }
        let per = flat.len() / num_robots;
        JointStrategy(flat.chunks_exact(per).map(Strategy::from_flat).collect())
    }

    pub fn with_replaced(&self, i: usize, s: Strategy) -> Self {
        let mut out = self.clone();
        out.0[i] = s;
        out
    }

    pub fn shifted(&self) -> Self {
        JointStrategy(self.0.iter().map(Strategy::shifted).collect())
    }

    pub fn within_box(&self, a_max: f64) -> bool {
        self.0.iter().all(|s| s.within_box(a_max))
    }
}
