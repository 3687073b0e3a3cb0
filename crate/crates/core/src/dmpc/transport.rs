//! Coordinator-side transports.

use super::message::DmpcMessage;
use super::worker::{run_robot_worker, Responder, RobotWorker, WorkerLink};
use crate::error::Error;
use crate::solver::SolverOptions;
use std::collections::VecDeque;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::Duration;

pub trait Transport {
    fn num_workers(&self) -> usize;
    fn send(&mut self, robot: usize, msg: DmpcMessage) -> Result<(), Error>;
    /// Next message from any worker.
    fn recv(&mut self, timeout: Duration) -> Result<DmpcMessage, Error>;
}

fn check_robot(robot: usize, m: usize) -> Result<(), Error> {
    if robot >= m {
        return Err(Error::Transport(format!("no worker {robot} (have {m})")));
    }
    Ok(())
}

/// Single-threaded transport: each send runs the worker's handler right
/// away and queues its replies. Delivery order is fully deterministic.
pub struct LocalTransport {
    workers: Vec<Box<dyn Responder>>,
    outbox: VecDeque<DmpcMessage>,
}

impl LocalTransport {
    pub fn new(workers: Vec<Box<dyn Responder>>) -> Self {
        Self {
            workers,
            outbox: VecDeque::new(),
        }
    }

    /// `m` standard workers.
    pub fn with_workers(m: usize, solver: SolverOptions) -> Self {
        Self::new(
            (0..m)
                .map(|i| Box::new(RobotWorker::new(i, solver)) as Box<dyn Responder>)
                .collect(),
        )
    }
}

impl Transport for LocalTransport {
    fn num_workers(&self) -> usize {
        self.workers.len()
    }

    fn send(&mut self, robot: usize, msg: DmpcMessage) -> Result<(), Error> {
        check_robot(robot, self.workers.len())?;
        let replies = self.workers[robot].handle(msg);
        self.outbox.extend(replies);
        Ok(())
    }

    fn recv(&mut self, timeout: Duration) -> Result<DmpcMessage, Error> {
        self.outbox
            .pop_front()
            .ok_or_else(|| Error::Timeout(timeout, "reply from in-process worker".into()))
    }
}

struct ChannelLink {
    rx: Receiver<DmpcMessage>,
    tx: Sender<DmpcMessage>,
}

impl WorkerLink for ChannelLink {
    fn recv(&mut self) -> Result<Option<DmpcMessage>, Error> {
        Ok(self.rx.recv().ok())
    }

    fn send(&mut self, msg: DmpcMessage) -> Result<(), Error> {
        self.tx
            .send(msg)
            .map_err(|_| Error::Transport("coordinator hung up".into()))
    }
}

/// One thread per worker, connected by channels.
pub struct ThreadedTransport {
    to_workers: Vec<Sender<DmpcMessage>>,
    from_workers: Receiver<DmpcMessage>,
    handles: Vec<JoinHandle<()>>,
}

impl ThreadedTransport {
    pub fn spawn(workers: Vec<Box<dyn Responder>>) -> Self {
        let (reply_tx, from_workers) = mpsc::channel();
        let mut to_workers = Vec::with_capacity(workers.len());
        let mut handles = Vec::with_capacity(workers.len());
        for (i, mut worker) in workers.into_iter().enumerate() {
            let (tx, rx) = mpsc::channel();
            to_workers.push(tx);
            let mut link = ChannelLink {
                rx,
                tx: reply_tx.clone(),
            };
            let handle = thread::Builder::new()
                .name(format!("dmpc-worker-{i}"))
                .spawn(move || {
                    let _ = run_robot_worker(worker.as_mut(), &mut link);
                })
                .expect("spawn worker thread");
            handles.push(handle);
        }
        Self {
            to_workers,
            from_workers,
            handles,
        }
    }

    pub fn with_workers(m: usize, solver: SolverOptions) -> Self {
        Self::spawn(
            (0..m)
                .map(|i| Box::new(RobotWorker::new(i, solver)) as Box<dyn Responder>)
                .collect(),
        )
    }
}

impl Transport for ThreadedTransport {
    fn num_workers(&self) -> usize {
        self.to_workers.len()
    }

    fn send(&mut self, robot: usize, msg: DmpcMessage) -> Result<(), Error> {
        check_robot(robot, self.to_workers.len())?;
        self.to_workers[robot]
            .send(msg)
            .map_err(|_| Error::Transport(format!("worker {robot} exited")))
    }

    fn recv(&mut self, timeout: Duration) -> Result<DmpcMessage, Error> {
        match self.from_workers.recv_timeout(timeout) {
            Ok(m) => Ok(m),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout, "worker reply".into())),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("all workers exited".into()))
            }
        }
    }
}

impl Drop for ThreadedTransport {
    fn drop(&mut self) {
        for tx in &self.to_workers {
            let _ = tx.send(DmpcMessage::Shutdown);
        }
        self.to_workers.clear();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}
