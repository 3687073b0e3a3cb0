//! Per-robot side of distributed IBR.

use super::message::{DmpcMessage, WorkerSetup};
use crate::error::Error;
use crate::geom::Vec2;
use crate::objectives::{PlanningProblem, RobotContext};
use crate::params::CostParams;
use crate::predictor::PredictedCrowd;
use crate::solver::{minimize_box, SolverOptions};
use crate::types::Strategy;

/// Anything that answers coordinator messages. [`RobotWorker`] is the real
/// one; tests inject others.
pub trait Responder: Send {
    /// Replies to one message, in order.
    fn handle(&mut self, msg: DmpcMessage) -> Vec<DmpcMessage>;
}

/// What a worker needs to evaluate its own player cost.
#[derive(Debug, Clone)]
struct Local {
    params: CostParams,
    /// Own context repeated `M` times; only entry `id` is read.
    contexts: Vec<RobotContext>,
    /// `u_i^(j)` after the last accepted or reverted update.
    current: Vec<f64>,
    /// `u_i^(j-1)`.
    previous: Vec<f64>,
    /// `x_{-i}` as last received.
    neighbors: Vec<Vec<Vec2>>,
    crowd: Option<PredictedCrowd>,
}

#[derive(Debug, Clone)]
pub struct RobotWorker {
    id: usize,
    solver: SolverOptions,
    local: Option<Local>,
}

impl RobotWorker {
    pub fn new(id: usize, solver: SolverOptions) -> Self {
        Self {
            id,
            solver,
            local: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    fn setup(&mut self, s: WorkerSetup) -> Result<(), Error> {
        let h = s.params.horizon;
        if s.warm_start.horizon() != h {
            return Err(Error::Arity {
                what: "warm start horizon",
                expected: h,
                got: s.warm_start.horizon(),
            });
        }
        if s.neighbors.len() != s.num_robots || self.id >= s.num_robots {
            return Err(Error::Arity {
                what: "neighbor trajectories",
                expected: s.num_robots,
                got: s.neighbors.len(),
            });
        }
        let u = s.warm_start.to_flat();
        self.local = Some(Local {
            contexts: vec![s.context; s.num_robots],
            params: s.params,
            previous: u.clone(),
            current: u,
            neighbors: s.neighbors,
            crowd: None,
        });
        Ok(())
    }

    fn local(&mut self) -> Result<&mut Local, Error> {
        self.local
            .as_mut()
            .ok_or_else(|| Error::Protocol("message before setup".into()))
    }

    /// Best response to a new prediction with the neighbors frozen.
    fn best_response(&mut self, iter: usize, crowd: PredictedCrowd) -> Result<DmpcMessage, Error> {
        let id = self.id;
        let solver = self.solver;
        let l = self.local()?;
        if crowd.horizon() != l.params.horizon {
            return Err(Error::Arity {
                what: "broadcast horizon",
                expected: l.params.horizon,
                got: crowd.horizon(),
            });
        }
        let problem = PlanningProblem::new(&l.params, &l.contexts, &crowd);
        let old = l.current.clone();
        let c_old = problem
            .player_given_neighbors(id, &old, &l.neighbors, None)
            .total;
        let n = old.len();
        let lo = vec![-l.params.a_max; n];
        let hi = vec![l.params.a_max; n];
        let (cand, report) = minimize_box(
            |u, g| {
                g.iter_mut().for_each(|x| *x = 0.0);
                problem
                    .player_given_neighbors(id, u, &l.neighbors, Some(g))
                    .total
            },
            &lo,
            &hi,
            &old,
            &solver,
        )?;
        let c_new = report.objective;
        let next = if c_new > c_old - l.params.epsilon {
            old.clone()
        } else {
            cand
        };
        let trajectory = problem.positions(id, &next);
        l.previous = old;
        l.current = next;
        l.crowd = Some(crowd);
        Ok(DmpcMessage::BestResponse {
            iter,
            robot: id,
            trajectory,
            strategy: Strategy::from_flat(&l.current),
        })
    }

    /// ε-Nash check after the exchange.
    fn conv_flag(&mut self, iter: usize, neighbors: Vec<Vec<Vec2>>) -> Result<DmpcMessage, Error> {
        let id = self.id;
        let l = self.local()?;
        if neighbors.len() != l.contexts.len() {
            return Err(Error::Arity {
                what: "neighbor update",
                expected: l.contexts.len(),
                got: neighbors.len(),
            });
        }
        let crowd = l
            .crowd
            .as_ref()
            .ok_or_else(|| Error::Protocol("neighbor update before prediction".into()))?;
        let problem = PlanningProblem::new(&l.params, &l.contexts, crowd);
        let c_cur = problem
            .player_given_neighbors(id, &l.current, &neighbors, None)
            .total;
        let c_prev = problem
            .player_given_neighbors(id, &l.previous, &neighbors, None)
            .total;
        let conv = c_cur <= c_prev + l.params.epsilon;
        l.neighbors = neighbors;
        Ok(DmpcMessage::ConvFlag {
            iter,
            robot: id,
            conv,
        })
    }

    fn dispatch(&mut self, msg: DmpcMessage) -> Result<Option<DmpcMessage>, Error> {
        match msg {
            DmpcMessage::Setup { robot, setup } if robot == self.id => {
                self.setup(*setup)?;
                Ok(None)
            }
            DmpcMessage::PredictionBroadcast { iter, crowd } => {
                self.best_response(iter, crowd).map(Some)
            }
            DmpcMessage::NeighborUpdate {
                iter,
                robot,
                neighbors,
            } if robot == self.id => self.conv_flag(iter, neighbors).map(Some),
            DmpcMessage::Terminate { .. } | DmpcMessage::Shutdown => {
                self.local = None;
                Ok(None)
            }
            other => Err(Error::Protocol(format!(
                "worker {} got unexpected {} message",
                self.id,
                other.kind()
            ))),
        }
    }
}

impl Responder for RobotWorker {
    fn handle(&mut self, msg: DmpcMessage) -> Vec<DmpcMessage> {
        let iter = msg.iter();
        match self.dispatch(msg) {
            Ok(reply) => reply.into_iter().collect(),
            Err(e) => vec![DmpcMessage::Error {
                iter,
                robot: self.id,
                message: e.to_string(),
            }],
        }
    }
}

/// Worker end of a transport.
pub trait WorkerLink {
    /// Next message, or `None` once the coordinator is gone.
    fn recv(&mut self) -> Result<Option<DmpcMessage>, Error>;
    fn send(&mut self, msg: DmpcMessage) -> Result<(), Error>;
}

/// Serves messages until `Shutdown` or the link closes.
pub fn run_robot_worker<R: Responder + ?Sized, L: WorkerLink + ?Sized>(
    worker: &mut R,
    link: &mut L,
) -> Result<(), Error> {
    while let Some(msg) = link.recv()? {
        let stop = matches!(msg, DmpcMessage::Shutdown);
        for reply in worker.handle(msg) {
            link.send(reply)?;
        }
        if stop {
            break;
        }
    }
    Ok(())
}
