//! Cost features, per-robot objectives, the game potential and their
//! gradients with respect to the stacked controls.
//!
//! Every robot `i` has an individual objective `J_i` (goal tracking,
//! acceleration, jerk, human clearance, soft speed limit) and a shared
//! objective `J_ij` with every other robot (robot clearance, flocking).
//! The player cost is `C_i = J_i + sum_{j != i} J_ij` and the potential is
//! `F = sum_i J_i + sum_{i < j} J_ij`; with `J_ij(a, b) = J_ji(b, a)` the
//! partial derivative of `F` with respect to `u_i` equals that of `C_i`.
//!
//! Crowd predictions are treated as constants: no derivative flows through
//! the predictor.

use crate::dynamics::{build_rollout_matrices, rollout_into, RolloutMatrices};
use crate::geom::Vec2;
use crate::params::CostParams;
use crate::predictor::PredictedCrowd;
use crate::types::{Control, JointStrategy, RobotState, Strategy};
use serde::{Deserialize, Serialize};

/// Straight-line desired positions at `t+1 ..= t+H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory(pub Vec<Vec2>);

impl ReferenceTrajectory {
    pub fn points(&self) -> &[Vec2] {
        &self.0
    }
}

/// Reference advancing `min(tau * v_max, remaining)` per step along the
/// direction from `s_t` to `goal`, which is fixed at time `t`.
pub fn make_reference(
    s_t: Vec2,
    goal: Vec2,
    horizon: usize,
    tau: f64,
    v_max: f64,
) -> ReferenceTrajectory {
    let dir = (goal - s_t).normalized();
    let max_step = tau * v_max;
    let mut cur = s_t;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let remaining = (goal - cur).norm();
        cur = if remaining <= max_step {
            goal
        } else {
            cur + dir * max_step
        };
        out.push(cur);
    }
    ReferenceTrajectory(out)
}

/// Squared tracking error normalized by the current distance to the goal.
pub fn j_goal(
    traj: &[Vec2],
    reference: &ReferenceTrajectory,
    s_t: Vec2,
    goal: Vec2,
    delta_goal: f64,
) -> f64 {
    let err: f64 = traj
        .iter()
        .zip(reference.points())
        .map(|(s, r)| (*s - *r).norm_sq())
        .sum();
    err / ((s_t - goal).norm() + delta_goal)
}

pub fn j_acce(strat: &Strategy) -> f64 {
    strat.controls().iter().map(|u| u.norm_sq()).sum()
}

/// Sum of squared control increments, starting from the last applied control.
pub fn j_jerk(strat: &Strategy, u_prev: Control) -> f64 {
    let mut prev = u_prev;
    let mut acc = 0.0;
    for &u in strat.controls() {
        acc += (u - prev).norm_sq();
        prev = u;
    }
    acc
}

/// Speed-dependent human clearance; `<= 0` is safe.
#[inline]
pub fn g_human(x: &RobotState, s_h: Vec2, d_min: f64, rho: f64) -> f64 {
    d_min * d_min + rho * x.velocity.norm_sq() - (x.position - s_h).norm_sq()
}

/// Inter-robot clearance; `<= 0` is safe.
#[inline]
pub fn g_robot(s_i: Vec2, s_j: Vec2, d_min: f64) -> f64 {
    d_min * d_min - (s_i - s_j).norm_sq()
}

/// Smoothed max: `ln(exp(mu z) + 1) / mu`, evaluated without overflow.
#[inline]
pub fn smax(z: f64, mu: f64) -> f64 {
    let t = mu * z;
    if t > 30.0 {
        z + (-t).exp().ln_1p() / mu
    } else {
        t.exp().ln_1p() / mu
    }
}

/// Derivative of [`smax`] with respect to `z`: the logistic function of `mu z`.
#[inline]
pub fn smax_grad(z: f64, mu: f64) -> f64 {
    let t = mu * z;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Human collision penalty of one robot trajectory against one predicted
/// human trajectory. Uses the robot velocity at the same step.
pub fn j_coll_human(traj: &[RobotState], human: &[Vec2], params: &CostParams) -> f64 {
    traj.iter()
        .zip(human)
        .map(|(x, h)| smax(g_human(x, *h, params.d_min, params.rho), params.mu))
        .sum()
}

/// Robot-robot collision penalty.
pub fn j_coll_robot(traj_i: &[Vec2], traj_j: &[Vec2], d_min: f64, mu: f64) -> f64 {
    traj_i
        .iter()
        .zip(traj_j)
        .map(|(a, b)| smax(g_robot(*a, *b, d_min), mu))
        .sum()
}

/// Squared deviation of the smoothed distance from the desired spacing.
pub fn j_floc(traj_i: &[Vec2], traj_j: &[Vec2], d_ij: f64, delta_norm: f64) -> f64 {
    traj_i
        .iter()
        .zip(traj_j)
        .map(|(a, b)| {
            let d = ((*a - *b).norm_sq() + delta_norm).sqrt();
            (d - d_ij) * (d - d_ij)
        })
        .sum()
}

/// Soft per-axis speed limit `sum_k sum_axis smax(v^2 - v_max^2)`.
pub fn j_vel(traj: &[RobotState], v_max: f64, mu: f64) -> f64 {
    let v2 = v_max * v_max;
    traj.iter()
        .map(|x| {
            smax(x.velocity.x * x.velocity.x - v2, mu) + smax(x.velocity.y * x.velocity.y - v2, mu)
        })
        .sum()
}

/// Weighted cost terms of one robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub goal: f64,
    pub acce: f64,
    pub jerk: f64,
    pub coll_human: f64,
    pub vel: f64,
    pub coll_robot: f64,
    pub floc: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.goal
            + self.acce
            + self.jerk
            + self.coll_human
            + self.vel
            + self.coll_robot
            + self.floc;
        self
    }
}

/// Everything about robot `i` at time `t` that its objective needs besides
/// the controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotContext {
    pub state: RobotState,
    pub goal: Vec2,
    /// Last applied control (zero at episode start).
    pub u_prev: Control,
    pub reference: ReferenceTrajectory,
}

impl RobotContext {
    pub fn new(state: RobotState, goal: Vec2, u_prev: Control, params: &CostParams) -> Self {
        let reference = make_reference(
            state.position,
            goal,
            params.horizon,
            params.tau,
            params.v_max,
        );
        Self {
            state,
            goal,
            u_prev,
            reference,
        }
    }

    fn goal_scale(&self, params: &CostParams) -> f64 {
        params.w_goal / ((self.state.position - self.goal).norm() + params.delta_goal)
    }
}

/// One planning instance: parameters, robot contexts and a frozen crowd
/// prediction. Evaluates objectives and gradients on flat control vectors.
#[derive(Debug, Clone)]
pub struct PlanningProblem<'a> {
    pub params: &'a CostParams,
    pub robots: &'a [RobotContext],
    pub crowd: &'a PredictedCrowd,
    matrices: RolloutMatrices,
}

impl<'a> PlanningProblem<'a> {
    pub fn new(
        params: &'a CostParams,
        robots: &'a [RobotContext],
        crowd: &'a PredictedCrowd,
    ) -> Self {
        assert_eq!(
            crowd.horizon(),
            params.horizon,
            "prediction horizon mismatch"
        );
        Self {
            params,
            robots,
            crowd,
            matrices: build_rollout_matrices(params.horizon, params.tau),
        }
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon
    }

    pub fn num_robots(&self) -> usize {
        self.robots.len()
    }

    /// Number of decision variables of one robot.
    pub fn block_len(&self) -> usize {
        2 * self.params.horizon
    }

    /// States of robot `i` under flat controls `u` (length `2H`).
    pub fn rollout(&self, i: usize, u: &[f64]) -> Vec<RobotState> {
        let controls: Vec<Control> = u.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        let mut out = Vec::with_capacity(controls.len());
        rollout_into(&self.robots[i].state, &controls, self.params.tau, &mut out);
        out
    }

    pub fn positions(&self, i: usize, u: &[f64]) -> Vec<Vec2> {
        self.rollout(i, u).iter().map(|x| x.position).collect()
    }

    /// Individual objective of robot `i`. When `grad` is given, `dJ_i/du_i`
    /// is added into it.
    pub fn individual(&self, i: usize, u: &[f64], grad: Option<&mut [f64]>) -> CostBreakdown {
        let p = self.params;
        let h = p.horizon;
        let ctx = &self.robots[i];
        let states = self.rollout(i, u);
        let want_grad = grad.is_some();
        let mut gx = if want_grad {
            vec![0.0; 4 * h]
        } else {
            Vec::new()
        };
        let mut out = CostBreakdown::default();

        let c_goal = ctx.goal_scale(p);
        let mut goal = 0.0;
        for (k, (x, r)) in states.iter().zip(ctx.reference.points()).enumerate() {
            let d = x.position - *r;
            goal += d.norm_sq();
            if want_grad {
                gx[4 * k] += 2.0 * c_goal * d.x;
                gx[4 * k + 1] += 2.0 * c_goal * d.y;
            }
        }
        out.goal = c_goal * goal;

        let w_ch = p.w_coll_human;
        if w_ch != 0.0 {
            let d2 = p.d_min * p.d_min;
            let mut coll = 0.0;
            for (k, x) in states.iter().enumerate() {
                let speed2 = x.velocity.norm_sq();
                for &hp in self.crowd.slice(k) {
                    let rel = x.position - hp;
                    let z = d2 + p.rho * speed2 - rel.norm_sq();
                    coll += smax(z, p.mu);
                    if want_grad && p.mu * z > -745.0 {
                        let s = w_ch * smax_grad(z, p.mu);
                        gx[4 * k] -= 2.0 * s * rel.x;
                        gx[4 * k + 1] -= 2.0 * s * rel.y;
                        gx[4 * k + 2] += 2.0 * s * p.rho * x.velocity.x;
                        gx[4 * k + 3] += 2.0 * s * p.rho * x.velocity.y;
                    }
                }
            }
            out.coll_human = w_ch * coll;
        }

        if p.w_vel != 0.0 {
            let v2 = p.v_max * p.v_max;
            let mut vel = 0.0;
            for (k, x) in states.iter().enumerate() {
                for axis in 0..2 {
                    let va = if axis == 0 {
                        x.velocity.x
                    } else {
                        x.velocity.y
                    };
                    let z = va * va - v2;
                    vel += smax(z, p.mu);
                    if want_grad {
                        gx[4 * k + 2 + axis] += p.w_vel * smax_grad(z, p.mu) * 2.0 * va;
                    }
                }
            }
            out.vel = p.w_vel * vel;
        }

        let mut acce = 0.0;
        let mut jerk = 0.0;
        let mut prev = ctx.u_prev;
        for c in u.chunks_exact(2) {
            let uk = Vec2::new(c[0], c[1]);
            acce += uk.norm_sq();
            jerk += (uk - prev).norm_sq();
            prev = uk;
        }
        out.acce = p.w_acce * acce;
        out.jerk = p.w_jerk * jerk;

        if let Some(g) = grad {
            self.matrices.accumulate_transpose(&gx, g);
            let mut prev = ctx.u_prev;
            for k in 0..h {
                let uk = Vec2::new(u[2 * k], u[2 * k + 1]);
                let mut gk = uk * (2.0 * p.w_acce) + (uk - prev) * (2.0 * p.w_jerk);
                if k + 1 < h {
                    let next = Vec2::new(u[2 * k + 2], u[2 * k + 3]);
                    gk -= (next - uk) * (2.0 * p.w_jerk);
                }
                g[2 * k] += gk.x;
                g[2 * k + 1] += gk.y;
                prev = uk;
            }
        }
        out.finish()
    }

    /// Shared objective between robots `i` and `j` given their positions.
    pub fn shared(&self, i: usize, j: usize, pos_i: &[Vec2], pos_j: &[Vec2]) -> f64 {
        self.shared_parts(i, j, pos_i, pos_j, None).0
    }

    /// Returns `(total, weighted collision, weighted flocking)`. With `grads`
    /// the position sensitivities are added into the two stacked state
    /// gradients (`4H` each).
    fn shared_parts(
        &self,
        i: usize,
        j: usize,
        pos_i: &[Vec2],
        pos_j: &[Vec2],
        mut grads: Option<(&mut [f64], &mut [f64])>,
    ) -> (f64, f64, f64) {
        let p = self.params;
        let w_c = p.w_coll_robot.get(i, j);
        let w_f = p.w_floc.get(i, j);
        let d_ij = p.d_flock.get(i, j);
        let d2 = p.d_min * p.d_min;
        let mut coll = 0.0;
        let mut floc = 0.0;
        for (k, (a, b)) in pos_i.iter().zip(pos_j).enumerate() {
            let rel = *a - *b;
            let r2 = rel.norm_sq();
            let mut gscale = 0.0;
            if w_c != 0.0 {
                let z = d2 - r2;
                coll += smax(z, p.mu);
                if grads.is_some() && p.mu * z > -745.0 {
                    gscale -= 2.0 * w_c * smax_grad(z, p.mu);
                }
            }
            if w_f != 0.0 {
                let n = (r2 + p.delta_norm).sqrt();
                floc += (n - d_ij) * (n - d_ij);
                if grads.is_some() {
                    gscale += 2.0 * w_f * (n - d_ij) / n;
                }
            }
            if let Some((gi, gj)) = grads.as_mut() {
                gi[4 * k] += gscale * rel.x;
                gi[4 * k + 1] += gscale * rel.y;
                gj[4 * k] -= gscale * rel.x;
                gj[4 * k + 1] -= gscale * rel.y;
            }
        }
        let coll = w_c * coll;
        let floc = w_f * floc;
        (coll + floc, coll, floc)
    }

    /// Player cost of robot `i` with its own controls `u_i` and the other
    /// robots' planned positions frozen (`neighbors[j]` is ignored for
    /// `j == i`). Adds `dC_i/du_i` into `grad` when given.
    pub fn player_given_neighbors(
        &self,
        i: usize,
        u_i: &[f64],
        neighbors: &[Vec<Vec2>],
        grad: Option<&mut [f64]>,
    ) -> CostBreakdown {
        let h = self.params.horizon;
        match grad {
            None => {
                let mut b = self.individual(i, u_i, None);
                let pos_i = self.positions(i, u_i);
                for (j, pos_j) in neighbors.iter().enumerate() {
                    if j != i {
                        let (_, c, f) = self.shared_parts(i, j, &pos_i, pos_j, None);
                        b.coll_robot += c;
                        b.floc += f;
                    }
                }
                b.finish()
            }
            Some(g) => {
                let mut b = self.individual(i, u_i, Some(&mut *g));
                let pos_i = self.positions(i, u_i);
                let mut gx = vec![0.0; 4 * h];
                let mut sink = vec![0.0; 4 * h];
                for (j, pos_j) in neighbors.iter().enumerate() {
                    if j != i {
                        let (_, c, f) =
                            self.shared_parts(i, j, &pos_i, pos_j, Some((&mut gx, &mut sink)));
                        b.coll_robot += c;
                        b.floc += f;
                    }
                }
                self.matrices.accumulate_transpose(&gx, g);
                b.finish()
            }
        }
    }

    /// Player cost of robot `i` under the joint flat controls.
    pub fn player(&self, i: usize, joint: &[f64], grad: Option<&mut [f64]>) -> CostBreakdown {
        let bl = self.block_len();
        let neighbors: Vec<Vec<Vec2>> = (0..self.num_robots())
            .map(|j| {
                if j == i {
                    Vec::new()
                } else {
                    self.positions(j, &joint[j * bl..(j + 1) * bl])
                }
            })
            .collect();
        self.player_given_neighbors(i, &joint[i * bl..(i + 1) * bl], &neighbors, grad)
    }

    /// Potential `sum_i J_i + sum_{i<j} J_ij` on the joint flat controls.
    /// Writes the full gradient into `grad` (overwriting) when given.
    pub fn potential(&self, joint: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let m = self.num_robots();
        let bl = self.block_len();
        let h = self.params.horizon;
        let positions: Vec<Vec<Vec2>> = (0..m)
            .map(|i| self.positions(i, &joint[i * bl..(i + 1) * bl]))
            .collect();
        match grad {
            None => {
                let mut f = 0.0;
                for i in 0..m {
                    f += self.individual(i, &joint[i * bl..(i + 1) * bl], None).total;
                }
                for i in 0..m {
                    for j in i + 1..m {
                        f += self.shared(i, j, &positions[i], &positions[j]);
                    }
                }
                f
            }
            Some(g) => {
                g.iter_mut().for_each(|v| *v = 0.0);
                let mut f = 0.0;
                for i in 0..m {
                    f += self
                        .individual(
                            i,
                            &joint[i * bl..(i + 1) * bl],
                            Some(&mut g[i * bl..(i + 1) * bl]),
                        )
                        .total;
                }
                let mut gx = vec![vec![0.0; 4 * h]; m];
                for i in 0..m {
                    let (head, tail) = gx.split_at_mut(i + 1);
                    for j in i + 1..m {
                        let (t, _, _) = self.shared_parts(
                            i,
                            j,
                            &positions[i],
                            &positions[j],
                            Some((&mut head[i], &mut tail[j - i - 1])),
                        );
                        f += t;
                    }
                }
                for i in 0..m {
                    self.matrices
                        .accumulate_transpose(&gx[i], &mut g[i * bl..(i + 1) * bl]);
                }
                f
            }
        }
    }
}

/// Builds per-robot contexts for a planning step.
pub fn robot_contexts(
    states: &[RobotState],
    goals: &[Vec2],
    u_prev: &[Control],
    params: &CostParams,
) -> Vec<RobotContext> {
    states
        .iter()
        .zip(goals)
        .zip(u_prev)
        .map(|((s, g), u)| RobotContext::new(*s, *g, *u, params))
        .collect()
}

pub fn individual_cost(
    i: usize,
    strat_i: &Strategy,
    robots: &[RobotContext],
    pred: &PredictedCrowd,
    params: &CostParams,
) -> CostBreakdown {
    PlanningProblem::new(params, robots, pred).individual(i, &strat_i.to_flat(), None)
}

/// Shared objective; exactly symmetric under swapping `(i, a)` with `(j, b)`.
pub fn shared_cost(
    i: usize,
    j: usize,
    traj_i: &[Vec2],
    traj_j: &[Vec2],
    params: &CostParams,
) -> f64 {
    let w_c = params.w_coll_robot.get(i, j);
    let w_f = params.w_floc.get(i, j);
    w_c * j_coll_robot(traj_i, traj_j, params.d_min, params.mu)
        + w_f * j_floc(traj_i, traj_j, params.d_flock.get(i, j), params.delta_norm)
}

pub fn player_cost(
    i: usize,
    joint: &JointStrategy,
    robots: &[RobotContext],
    pred: &PredictedCrowd,
    params: &CostParams,
) -> f64 {
    PlanningProblem::new(params, robots, pred)
        .player(i, &joint.to_flat(), None)
        .total
}

pub fn potential(
    joint: &JointStrategy,
    robots: &[RobotContext],
    pred: &PredictedCrowd,
    params: &CostParams,
) -> f64 {
    PlanningProblem::new(params, robots, pred).potential(&joint.to_flat(), None)
}

/// `dC_i/du_i`, length `2H`.
pub fn grad_player_cost(
    i: usize,
    joint: &JointStrategy,
    robots: &[RobotContext],
    pred: &PredictedCrowd,
    params: &CostParams,
) -> Vec<f64> {
    let mut g = vec![0.0; 2 * params.horizon];
    PlanningProblem::new(params, robots, pred).player(i, &joint.to_flat(), Some(&mut g));
    g
}

/// `dF/du_R`, length `2MH`.
pub fn grad_potential(
    joint: &JointStrategy,
    robots: &[RobotContext],
    pred: &PredictedCrowd,
    params: &CostParams,
) -> Vec<f64> {
    let flat = joint.to_flat();
    let mut g = vec![0.0; flat.len()];
    PlanningProblem::new(params, robots, pred).potential(&flat, Some(&mut g));
    g
}
