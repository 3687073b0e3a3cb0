use super::message::{DmpcMessage, WorkerSetup};
use super::transport::Transport;
use crate::cmpc::planned_positions;
use crate::error::Error;
use crate::geom::Vec2;
use crate::history::PositionHistory;
use crate::objectives::{PlanningProblem, RobotContext};
use crate::params::CostParams;
use crate::predictor::{rollout_prediction, PredictedCrowd, Predictor};
use crate::types::{JointStrategy, Strategy};
use std::time::{Duration, Instant};

pub const DEFAULT_WORKER_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmpcOptions {
    /// Budget for collecting all replies of one iteration.
    pub worker_timeout: Duration,
}

impl Default for DmpcOptions {
    fn default() -> Self {
        Self {
            worker_timeout: DEFAULT_WORKER_TIMEOUT,
        }
    }
}

/// Bookkeeping of one IBR round, evaluated by the coordinator under that
/// round's prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpcIteration {
    pub iter: usize,
    /// `C_i(u^(j))` for every robot.
    pub player_costs: Vec<f64>,
    /// `F(u^(j-1))`.
    pub potential_before: f64,
    /// `F(u^(j))`.
    pub potential: f64,
    pub flags: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpcOutcome {
    pub strategy: JointStrategy,
    pub trace: Vec<DmpcIteration>,
    pub converged: bool,
    pub prediction: PredictedCrowd,
}

impl DmpcOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

fn others(plan: &[Vec<Vec2>], i: usize) -> Vec<Vec<Vec2>> {
    plan.iter()
        .enumerate()
        .map(|(j, p)| if j == i { Vec::new() } else { p.clone() })
        .collect()
}

/// Receives one message per robot for `iter`, ordered by robot id.
fn collect<T>(
    transport: &mut dyn Transport,
    m: usize,
    iter: usize,
    deadline: Instant,
    budget: Duration,
    mut pick: impl FnMut(DmpcMessage) -> Option<(usize, T)>,
    expected: &str,
) -> Result<Vec<T>, Error> {
    let mut slots: Vec<Option<T>> = (0..m).map(|_| None).collect();
    let mut got = 0;
    while got < m {
        let left = deadline.saturating_duration_since(Instant::now());
        let msg = match transport.recv(left) {
            Ok(msg) => msg,
            Err(Error::Timeout(..)) => {
                let missing: Vec<usize> = (0..m).filter(|&i| slots[i].is_none()).collect();
                return Err(Error::Timeout(
                    budget,
                    format!("{expected} at iteration {iter} from robots {missing:?}"),
                ));
            }
            Err(e) => return Err(e),
        };
        if let DmpcMessage::Error { robot, message, .. } = msg {
            return Err(Error::Worker { robot, message });
        }
        if msg.iter() != iter {
            return Err(Error::Protocol(format!(
                "{} for iteration {} while collecting iteration {iter}",
                msg.kind(),
                msg.iter()
            )));
        }
        let kind = msg.kind();
        let (robot, value) =
            pick(msg).ok_or_else(|| Error::Protocol(format!("expected {expected}, got {kind}")))?;
        let slot = slots
            .get_mut(robot)
            .ok_or_else(|| Error::Protocol(format!("{expected} from unknown robot {robot}")))?;
        if slot.is_some() {
            return Err(Error::Protocol(format!(
                "duplicate {expected} from robot {robot}"
            )));
        }
        *slot = Some(value);
        got += 1;
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("all slots filled"))
        .collect())
}

/// Runs Algorithm 2 for one MPC step. Workers must be idle; they receive a
/// fresh setup and are released with `Terminate` at the end.
pub fn run_coordinator(
    robots: &[RobotContext],
    history: &PositionHistory,
    predictor: &dyn Predictor,
    params: &CostParams,
    u_init: &JointStrategy,
    transport: &mut dyn Transport,
    opts: &DmpcOptions,
) -> Result<DmpcOutcome, Error> {
    let m = robots.len();
    let h = params.horizon;
    if transport.num_workers() != m {
        return Err(Error::Arity {
            what: "workers",
            expected: m,
            got: transport.num_workers(),
        });
    }
    if u_init.num_robots() != m {
        return Err(Error::Arity {
            what: "initial joint strategy",
            expected: m,
            got: u_init.num_robots(),
        });
    }
    predictor.begin_solve();

    let mut joint = u_init.clone();
    let mut plan = planned_positions(params, robots, &joint.to_flat());
    for (i, ctx) in robots.iter().enumerate() {
        transport.send(
            i,
            DmpcMessage::Setup {
                robot: i,
                setup: Box::new(WorkerSetup {
                    params: params.clone(),
                    num_robots: m,
                    context: ctx.clone(),
                    warm_start: joint.0[i].clone(),
                    neighbors: others(&plan, i),
                }),
            },
        )?;
    }

    let mut trace = Vec::new();
    let mut converged = false;
    let mut prediction = PredictedCrowd::empty(h);
    for j in 1..=params.j_max {
        let deadline = Instant::now() + opts.worker_timeout;
        prediction = rollout_prediction(predictor, history, &plan, h)?;
        let problem = PlanningProblem::new(params, robots, &prediction);
        let potential_before = problem.potential(&joint.to_flat(), None);

        for i in 0..m {
            transport.send(
                i,
                DmpcMessage::PredictionBroadcast {
                    iter: j,
                    crowd: prediction.clone(),
                },
            )?;
        }
        let replies = collect(
            transport,
            m,
            j,
            deadline,
            opts.worker_timeout,
            |msg| match msg {
                DmpcMessage::BestResponse {
                    robot,
                    trajectory,
                    strategy,
                    ..
                } => Some((robot, (trajectory, strategy))),
                _ => None,
            },
            "best_response",
        )?;
        let mut strategies: Vec<Strategy> = Vec::with_capacity(m);
        for (i, (trajectory, strategy)) in replies.into_iter().enumerate() {
            if strategy.horizon() != h || trajectory.len() != h {
                return Err(Error::Worker {
                    robot: i,
                    message: format!("best response with {} steps", strategy.horizon()),
                });
            }
            plan[i] = trajectory;
            strategies.push(strategy);
        }
        joint = JointStrategy(strategies);

        for i in 0..m {
            transport.send(
                i,
                DmpcMessage::NeighborUpdate {
                    iter: j,
                    robot: i,
                    neighbors: others(&plan, i),
                },
            )?;
        }
        let flags = collect(
            transport,
            m,
            j,
            deadline,
            opts.worker_timeout,
            |msg| match msg {
                DmpcMessage::ConvFlag { robot, conv, .. } => Some((robot, conv)),
                _ => None,
            },
            "conv_flag",
        )?;

        let flat = joint.to_flat();
        trace.push(DmpcIteration {
            iter: j,
            player_costs: (0..m)
                .map(|i| problem.player(i, &flat, None).total)
                .collect(),
            potential_before,
            potential: problem.potential(&flat, None),
            flags: flags.clone(),
        });
        if flags.iter().all(|&f| f) {
            converged = true;
            break;
        }
    }

    let last = trace.len();
    for i in 0..m {
        transport.send(
            i,
            DmpcMessage::Terminate {
                iter: last,
                strategy: joint.clone(),
            },
        )?;
    }
    Ok(DmpcOutcome {
        strategy: joint,
        trace,
        converged,
        prediction,
    })
}
