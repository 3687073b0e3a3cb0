//! Single-step pedestrian predictors and the recursive horizon rollout.
//!
//! A [`Predictor`] maps the last `L` slices of every agent's position to the
//! humans' positions one period later. [`rollout_prediction`] applies it
//! recursively over the horizon: each predicted human slice is appended to
//! the window together with the robots' planned positions, so the crowd
//! forecast depends on the plan.

mod external;

pub use external::ExternalPredictor;

use crate::error::Error;
use crate::geom::Vec2;
use crate::history::PositionHistory;
use serde::{Deserialize, Serialize};

pub trait Predictor: Send + Sync {
    /// Human positions one period after the newest slice of `history`.
    fn predict_step(&self, history: &PositionHistory) -> Result<Vec<Vec2>, Error>;

    /// Called once before each planning solve. Predictors that cache replies
    /// drop them here.
    fn begin_solve(&self) {}

    fn name(&self) -> &str;
}

/// Predicted human positions at `t+1 ..= t+H`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictedCrowd {
    slices: Vec<Vec<Vec2>>,
}

impl PredictedCrowd {
    pub fn new(slices: Vec<Vec<Vec2>>) -> Self {
        Self { slices }
    }

    /// A crowd with no humans over `horizon` steps.
    pub fn empty(horizon: usize) -> Self {
        Self {
            slices: vec![Vec::new(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.slices.len()
    }

    pub fn num_humans(&self) -> usize {
        self.slices.first().map(Vec::len).unwrap_or(0)
    }

    /// Positions of all humans at horizon step `k` (`0` is `t+1`).
    pub fn slice(&self, k: usize) -> &[Vec2] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<Vec2>] {
        &self.slices
    }

    /// Trajectory of human `j` over the horizon.
    pub fn human(&self, j: usize) -> Vec<Vec2> {
        self.slices.iter().map(|s| s[j]).collect()
    }
}

/// Recursive prediction over `horizon` steps.
///
/// `robot_plan[i][k]` is robot `i`'s planned position at `t+k+1`. It is
/// inserted into the window after step `k` so later predictions react to it.
pub fn rollout_prediction(
    predictor: &dyn Predictor,
    history: &PositionHistory,
    robot_plan: &[Vec<Vec2>],
    horizon: usize,
) -> Result<PredictedCrowd, Error> {
    let m = history.num_robots();
    let n_h = history.num_humans();
    if robot_plan.len() != m {
        return Err(Error::Arity {
            what: "robot plan",
            expected: m,
            got: robot_plan.len(),
        });
    }
    if let Some(p) = robot_plan.iter().find(|p| p.len() < horizon) {
        return Err(Error::Arity {
            what: "robot plan steps",
            expected: horizon,
            got: p.len(),
        });
    }
    let mut window = history.clone();
    let mut slices = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let humans = predictor.predict_step(&window)?;
        if humans.len() != n_h {
            return Err(Error::Arity {
                what: "predictor output",
                expected: n_h,
                got: humans.len(),
            });
        }
        if let Some(bad) = humans.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("predicted position {bad:?}")));
        }
        if k + 1 < horizon {
            let mut next: Vec<Vec2> = robot_plan.iter().map(|p| p[k]).collect();
            next.extend_from_slice(&humans);
            window.push(next)?;
        }
        slices.push(humans);
    }
    Ok(PredictedCrowd { slices })
}

/// Linear extrapolation of the last displacement.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantVelocity;

pub fn constant_velocity_predictor() -> ConstantVelocity {
    ConstantVelocity
}

fn last_two(history: &PositionHistory) -> Result<(&[Vec2], &[Vec2]), Error> {
    match (history.from_back(0), history.from_back(1)) {
        (Some(last), Some(prev)) => Ok((last, prev)),
        _ => Err(Error::Invalid(format!(
            "constant-velocity extrapolation needs L >= 2, window has {}",
            history.len()
        ))),
    }
}

impl Predictor for ConstantVelocity {
    fn predict_step(&self, history: &PositionHistory) -> Result<Vec<Vec2>, Error> {
        let (last, prev) = last_two(history)?;
        let m = history.num_robots();
        Ok(last[m..]
            .iter()
            .zip(&prev[m..])
            .map(|(&l, &p)| l + (l - p))
            .collect())
    }

    fn name(&self) -> &str {
        "constant_velocity"
    }
}

/// Constant velocity plus a bounded repulsion from every nearby agent.
///
/// Each agent within `radius` pushes the human away with displacement
/// `gain * (1 - d / radius) * tau`. The total step is capped at
/// `max(max_speed * tau, |constant-velocity step|)`.
#[derive(Debug, Clone, Copy)]
pub struct SocialPredictor {
    pub gain: f64,
    pub radius: f64,
    pub tau: f64,
    pub max_speed: f64,
}

pub const SOCIAL_DEFAULT_GAIN: f64 = 0.3;
pub const SOCIAL_DEFAULT_RADIUS: f64 = 2.0;

pub fn social_predictor(
    gain: f64,
    radius: f64,
    tau: f64,
    max_speed: f64,
) -> Result<SocialPredictor, Error> {
    if !(gain >= 0.0 && radius >= 0.0 && tau > 0.0 && max_speed >= 0.0) {
        return Err(Error::Invalid(format!(
            "social predictor needs non-negative gain/radius/speed and tau > 0 (gain={gain}, radius={radius})"
        )));
    }
    Ok(SocialPredictor {
        gain,
        radius,
        tau,
        max_speed,
    })
}

impl Predictor for SocialPredictor {
    fn predict_step(&self, history: &PositionHistory) -> Result<Vec<Vec2>, Error> {
        let (last, prev) = last_two(history)?;
        let m = history.num_robots();
        let mut out = Vec::with_capacity(last.len() - m);
        for h in m..last.len() {
            let cv = last[h] - prev[h];
            let mut disp = cv;
            if self.gain > 0.0 {
                for (a, &other) in last.iter().enumerate() {
                    if a == h {
                        continue;
                    }
                    let away = last[h] - other;
                    let d = away.norm();
                    if d > 0.0 && d < self.radius {
                        disp += away * (self.gain * (1.0 - d / self.radius) * self.tau / d);
                    }
                }
                let cap = (self.max_speed * self.tau).max(cv.norm());
                let len = disp.norm();
                if len > cap {
                    disp = disp * (cap / len);
                }
            }
            out.push(last[h] + disp);
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "social"
    }
}
