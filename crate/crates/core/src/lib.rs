//! Cooperative multi-robot navigation through pedestrian crowds.
//!
//! Each robot runs a receding-horizon controller whose objective couples it
//! to the other robots through pairwise shared terms. Because the shared
//! terms are symmetric, the robots play an exact potential game; the
//! [`cmpc`] module minimizes the potential jointly, while [`dmpc`] runs
//! iterative best response between a coordinator and one worker per robot.
//! Both alternate with a recursive crowd prediction from [`predictor`].
//! [`crowd_sim`] provides ORCA pedestrians to close the loop and
//! [`harness`] runs Monte-Carlo batches with the usual success, travel
//! time, collision and discomfort metrics.

pub mod cmpc;
pub mod crowd_sim;
pub mod dmpc;
pub mod dynamics;
pub mod error;
pub mod geom;
pub mod harness;
pub mod history;
pub mod objectives;
pub mod params;
pub mod predictor;
pub mod scenario;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
pub use geom::Vec2;
pub use history::PositionHistory;
pub use params::{validate_params, CostParams, PairMatrix, ParamViolation};
pub use scenario::{HumanSpec, Layout, RobotSpec, Scenario};
pub use types::{AgentId, AgentKind, Control, JointStrategy, RobotState, Strategy};
