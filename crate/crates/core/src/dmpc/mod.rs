//! Distributed IBR: a coordinator and one worker per robot.
//!
//! Each round the coordinator predicts the crowd from the robots' latest
//! trajectories and broadcasts it. Every worker best-responds with its
//! neighbors frozen, keeping its old strategy unless the new one improves
//! its cost by at least `epsilon`. The coordinator then sends each worker
//! the others' new trajectories and collects an `epsilon`-Nash flag per
//! robot. The round loop ends when all flags are set or after `j_max`.
//!
//! Workers never talk to each other. Transports: [`LocalTransport`]
//! (single-threaded, deterministic), [`ThreadedTransport`] and
//! [`TcpTransport`].

mod coordinator;
pub mod message;
mod tcp;
mod transport;
mod worker;

pub use coordinator::{
    run_coordinator, DmpcIteration, DmpcOptions, DmpcOutcome, DEFAULT_WORKER_TIMEOUT,
};
pub use message::{read_frame, write_frame, DmpcMessage, Frame, WorkerSetup};
pub use tcp::{run_tcp_worker, TcpTransport};
pub use transport::{LocalTransport, ThreadedTransport, Transport};
pub use worker::{run_robot_worker, Responder, RobotWorker, WorkerLink};
