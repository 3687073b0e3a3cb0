//! Centralized IBR: alternate crowd prediction with a joint minimization of
//! the potential over all robots' controls.

use crate::error::Error;
use crate::geom::Vec2;
use crate::history::PositionHistory;
use crate::objectives::{PlanningProblem, RobotContext};
use crate::params::CostParams;
use crate::predictor::{rollout_prediction, PredictedCrowd, Predictor};
use crate::solver::{minimize_box, SolveReport, SolverOptions};
use crate::types::JointStrategy;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CmpcOptions {
    pub solver: SolverOptions,
    /// Return the last iterate when the outer loop hits `j_max`, as
    /// Algorithm 1 does literally. By default the iterate with the lowest
    /// potential is returned instead.
    pub strict_alg1: bool,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CmpcIteration {
    pub iter: usize,
    pub potential: f64,
    pub solve: SolveReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmpcOutcome {
    pub strategy: JointStrategy,
    /// Potential of `u_init` under the prediction made from its rollout.
    pub initial_potential: f64,
    pub trace: Vec<CmpcIteration>,
    pub converged: bool,
    /// Prediction the returned strategy was optimized against.
    pub prediction: PredictedCrowd,
}

impl CmpcOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Planned positions of every robot under `joint` (flat, robot-major).
pub fn planned_positions(
    params: &CostParams,
    robots: &[RobotContext],
    joint: &[f64],
) -> Vec<Vec<Vec2>> {
    let crowd = PredictedCrowd::empty(params.horizon);
    let problem = PlanningProblem::new(params, robots, &crowd);
    let bl = problem.block_len();
    (0..robots.len())
        .map(|i| problem.positions(i, &joint[i * bl..(i + 1) * bl]))
        .collect()
}

/// Runs Algorithm 1 from `u_init`.
pub fn solve_cmpc(
    robots: &[RobotContext],
    history: &PositionHistory,
    predictor: &dyn Predictor,
    params: &CostParams,
    u_init: &JointStrategy,
    opts: &CmpcOptions,
) -> Result<CmpcOutcome, Error> {
    let m = robots.len();
    let h = params.horizon;
    if u_init.num_robots() != m {
        return Err(Error::Arity {
            what: "initial joint strategy",
            expected: m,
            got: u_init.num_robots(),
        });
    }
    if let Some(s) = u_init.0.iter().find(|s| s.horizon() != h) {
        return Err(Error::Arity {
            what: "initial strategy horizon",
            expected: h,
            got: s.horizon(),
        });
    }
    if history.num_robots() != m {
        return Err(Error::Arity {
            what: "history robots",
            expected: m,
            got: history.num_robots(),
        });
    }
    predictor.begin_solve();

    let n = 2 * m * h;
    let lo = vec![-params.a_max; n];
    let hi = vec![params.a_max; n];
    let mut u: Vec<f64> = u_init.to_flat();

    let mut plan = planned_positions(params, robots, &u);
    let mut prediction = rollout_prediction(predictor, history, &plan, h)?;
    let initial_potential = PlanningProblem::new(params, robots, &prediction).potential(&u, None);

    let mut prev_f = initial_potential;
    let mut trace = Vec::with_capacity(params.j_max);
    let mut best: Option<(f64, Vec<f64>, PredictedCrowd)> = None;
    let mut converged = false;

    for j in 1..=params.j_max {
        if j > 1 {
            prediction = rollout_prediction(predictor, history, &plan, h)?;
        }
        let problem = PlanningProblem::new(params, robots, &prediction);
        let (u_new, report) = minimize_box(
            |x, g| problem.potential(x, Some(g)),
            &lo,
            &hi,
            &u,
            &opts.solver,
        )?;
        let f = report.objective;
        u = u_new;
        trace.push(CmpcIteration {
            iter: j,
            potential: f,
            solve: report,
        });
        if best.as_ref().is_none_or(|(bf, _, _)| f < *bf) {
            best = Some((f, u.clone(), prediction.clone()));
        }
        if (f - prev_f).abs() <= params.xi {
            converged = true;
            break;
        }
        prev_f = f;
        plan = planned_positions(params, robots, &u);
    }

    if !converged && !opts.strict_alg1 {
        if let Some((_, bu, bp)) = best {
            u = bu;
            prediction = bp;
        }
    }
    Ok(CmpcOutcome {
        strategy: JointStrategy::from_flat(&u, m),
        initial_potential,
        trace,
        converged,
        prediction,
    })
}

/// Deviation of a human trajectory from the prediction:
/// `sum_k ||candidate_k - predicted_k||` with all humans of one step stacked
/// into a single vector. Zero when the humans follow the prediction.
pub fn eval_interaction_cost(pred: &PredictedCrowd, candidate: &[Vec<Vec2>]) -> Result<f64, Error> {
    if candidate.len() != pred.horizon() {
        return Err(Error::Arity {
            what: "candidate steps",
            expected: pred.horizon(),
            got: candidate.len(),
        });
    }
    let mut total = 0.0;
    for (k, cand) in candidate.iter().enumerate() {
        let p = pred.slice(k);
        if cand.len() != p.len() {
            return Err(Error::Arity {
                what: "candidate humans",
                expected: p.len(),
                got: cand.len(),
            });
        }
        let sq: f64 = cand.iter().zip(p).map(|(a, b)| (*a - *b).norm_sq()).sum();
        total += sq.sqrt();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::robot_contexts;
    use crate::predictor::{ConstantVelocity, SocialPredictor};
    use crate::types::RobotState;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    fn setup(
        states: &[RobotState],
        goals: &[Vec2],
        humans: &[Vec2],
        p: &CostParams,
    ) -> (Vec<RobotContext>, PositionHistory) {
        let contexts = robot_contexts(states, goals, &vec![Vec2::ZERO; states.len()], p);
        let mut slice: Vec<Vec2> = states.iter().map(|s| s.position).collect();
        slice.extend_from_slice(humans);
        (
            contexts,
            PositionHistory::filled(p.history_len, states.len(), slice),
        )
    }

    #[test]
    fn robot_at_goal_stays_put() {
        let p = CostParams::default();
        let s = [RobotState::new(v(1.0, 1.0), Vec2::ZERO)];
        let (ctx, hist) = setup(&s, &[v(1.0, 1.0)], &[], &p);
        let out = solve_cmpc(
            &ctx,
            &hist,
            &ConstantVelocity,
            &p,
            &JointStrategy::zeros(1, 4),
            &CmpcOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 1);
        assert!(out.trace[0].potential.abs() < 1e-6);
        assert!(out.strategy.to_flat().iter().all(|u| u.abs() < 1e-6));
    }

    #[test]
    fn constant_velocity_converges_at_second_iteration() {
        let p = CostParams::default();
        let s = [
            RobotState::new(v(-3.0, 0.5), Vec2::ZERO),
            RobotState::new(v(-3.0, -0.7), Vec2::ZERO),
        ];
        let humans = [v(0.0, 2.0), v(1.0, -1.5)];
        let (ctx, hist) = setup(&s, &[v(3.0, 0.5), v(3.0, -0.7)], &humans, &p);
        let out = solve_cmpc(
            &ctx,
            &hist,
            &ConstantVelocity,
            &p,
            &JointStrategy::zeros(2, 4),
            &CmpcOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 2);
        assert!((out.trace[1].potential - out.trace[0].potential).abs() <= p.xi);
        assert!(out.strategy.within_box(p.a_max));
        assert!(out.trace[1].potential <= out.initial_potential + 1e-9);
    }

    #[test]
    fn mirrored_start_gives_mirrored_plans() {
        let p = CostParams::default();
        let s = [
            RobotState::new(v(-3.0, 1.0), Vec2::ZERO),
            RobotState::new(v(-3.0, -1.0), Vec2::ZERO),
        ];
        let (ctx, hist) = setup(&s, &[v(3.0, 0.4), v(3.0, -0.4)], &[], &p);
        let out = solve_cmpc(
            &ctx,
            &hist,
            &ConstantVelocity,
            &p,
            &JointStrategy::zeros(2, 4),
            &CmpcOptions::default(),
        )
        .unwrap();
        for (a, b) in out.strategy.0[0]
            .controls()
            .iter()
            .zip(out.strategy.0[1].controls())
        {
            assert!((a.x - b.x).abs() < 1e-6, "{a:?} {b:?}");
            assert!((a.y + b.y).abs() < 1e-6, "{a:?} {b:?}");
        }
    }

    #[test]
    fn plan_dependent_predictor_terminates_with_small_gap() {
        let p = CostParams::default();
        let s = [
            RobotState::new(v(-2.0, 0.0), v(0.5, 0.0)),
            RobotState::new(v(-2.0, 1.2), v(0.5, 0.0)),
        ];
        let humans = [v(0.0, 0.3), v(0.5, 1.0), v(-0.5, -1.0)];
        let (ctx, hist) = setup(&s, &[v(3.0, 0.0), v(3.0, 1.2)], &humans, &p);
        let social = SocialPredictor {
            gain: 0.3,
            radius: 2.0,
            tau: p.tau,
            max_speed: 1.5,
        };
        let out = solve_cmpc(
            &ctx,
            &hist,
            &social,
            &p,
            &JointStrategy::zeros(2, 4),
            &CmpcOptions::default(),
        )
        .unwrap();
        assert!(out.iterations() <= p.j_max);
        if out.converged {
            let n = out.trace.len();
            let prev = if n >= 2 {
                out.trace[n - 2].potential
            } else {
                out.initial_potential
            };
            assert!((out.trace[n - 1].potential - prev).abs() <= p.xi);
        }
        assert!(out.strategy.within_box(p.a_max));
    }

    #[test]
    fn lowest_potential_returned_unless_strict() {
        let mut p = CostParams::default();
        p.xi = 0.0;
        p.j_max = 3;
        let s = [RobotState::new(v(-2.0, 0.0), v(0.5, 0.0))];
        let humans = [v(-0.5, 0.2)];
        let (ctx, hist) = setup(&s, &[v(3.0, 0.0)], &humans, &p);
        let social = SocialPredictor {
            gain: 0.3,
            radius: 2.0,
            tau: p.tau,
            max_speed: 1.5,
        };
        let u0 = JointStrategy::zeros(1, 4);
        let relaxed = solve_cmpc(&ctx, &hist, &social, &p, &u0, &CmpcOptions::default()).unwrap();
        let strict = solve_cmpc(
            &ctx,
            &hist,
            &social,
            &p,
            &u0,
            &CmpcOptions {
                strict_alg1: true,
                ..Default::default()
            },
        )
        .unwrap();
        if !relaxed.converged {
            let min = relaxed
                .trace
                .iter()
                .map(|t| t.potential)
                .fold(f64::INFINITY, f64::min);
            let problem = PlanningProblem::new(&p, &ctx, &relaxed.prediction);
            let got = problem.potential(&relaxed.strategy.to_flat(), None);
            assert!((got - min).abs() <= 1e-9 * min.abs().max(1.0));
            let last = strict.trace.last().unwrap();
            let problem = PlanningProblem::new(&p, &ctx, &strict.prediction);
            let got = problem.potential(&strict.strategy.to_flat(), None);
            assert!((got - last.potential).abs() <= 1e-9 * last.potential.abs().max(1.0));
        }
    }

    #[test]
    fn arity_is_checked() {
        let p = CostParams::default();
        let s = [RobotState::new(v(0.0, 0.0), Vec2::ZERO)];
        let (ctx, hist) = setup(&s, &[v(1.0, 0.0)], &[], &p);
        let r = solve_cmpc(
            &ctx,
            &hist,
            &ConstantVelocity,
            &p,
            &JointStrategy::zeros(2, 4),
            &CmpcOptions::default(),
        );
        assert!(matches!(r, Err(Error::Arity { .. })));
    }

    #[test]
    fn interaction_cost_examples() {
        let pred = PredictedCrowd::new(
            (0..4)
                .map(|k| vec![v(k as f64, 0.0), v(0.0, k as f64)])
                .collect(),
        );
        let same: Vec<Vec<Vec2>> = pred.slices().to_vec();
        assert_eq!(eval_interaction_cost(&pred, &same).unwrap(), 0.0);

        let one = PredictedCrowd::new((0..4).map(|k| vec![v(k as f64, 0.0)]).collect());
        let shifted: Vec<Vec<Vec2>> = one
            .slices()
            .iter()
            .map(|s| vec![s[0] + v(0.1, 0.0)])
            .collect();
        assert!((eval_interaction_cost(&one, &shifted).unwrap() - 0.4).abs() < 1e-12);

        let partial: Vec<Vec<Vec2>> = pred
            .slices()
            .iter()
            .map(|s| vec![s[0], s[1] + v(0.0, 0.2)])
            .collect();
        assert!((eval_interaction_cost(&pred, &partial).unwrap() - 0.8).abs() < 1e-12);
    }
}
