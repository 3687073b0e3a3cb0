//! Length-prefixed JSON frames over TCP.
//!
//! Workers connect to the coordinator and introduce themselves with a
//! `hello` frame carrying their robot id. Each connection gets a reader
//! thread that forwards decoded frames into one queue.

use super::message::{read_frame, write_frame, DmpcMessage};
use super::transport::Transport;
use super::worker::{run_robot_worker, RobotWorker, WorkerLink};
use crate::error::Error;
use crate::solver::SolverOptions;
use std::io::{BufReader, BufWriter};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

pub struct TcpTransport {
    writers: Vec<BufWriter<TcpStream>>,
    inbox: Receiver<Result<DmpcMessage, Error>>,
    local_workers: Vec<JoinHandle<Result<(), Error>>>,
}

fn forward(stream: TcpStream, tx: Sender<Result<DmpcMessage, Error>>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        loop {
            match read_frame(&mut reader) {
                Ok(Some(msg)) => {
                    if tx.send(Ok(msg)).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
}

impl TcpTransport {
    /// Waits for `m` workers on `listener`, each announcing its id.
    pub fn accept(listener: &TcpListener, m: usize, timeout: Duration) -> Result<Self, Error> {
        let deadline = Instant::now() + timeout;
        listener.set_nonblocking(true)?;
        let mut slots: Vec<Option<TcpStream>> = (0..m).map(|_| None).collect();
        let mut pending = m;
        while pending > 0 {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    stream.set_nodelay(true)?;
                    stream.set_read_timeout(Some(
                        deadline
                            .saturating_duration_since(Instant::now())
                            .max(Duration::from_millis(1)),
                    ))?;
                    let mut reader = stream.try_clone()?;
                    let robot = match read_frame(&mut reader)? {
                        Some(DmpcMessage::Hello { robot }) => robot,
                        other => {
                            return Err(Error::Protocol(format!("expected hello, got {other:?}")));
                        }
                    };
                    stream.set_read_timeout(None)?;
                    let slot = slots.get_mut(robot).ok_or_else(|| {
                        Error::Protocol(format!("hello from unknown robot {robot}"))
                    })?;
                    if slot.is_some() {
                        return Err(Error::Protocol(format!("robot {robot} connected twice")));
                    }
                    *slot = Some(stream);
                    pending -= 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(Error::Timeout(
                            timeout,
                            format!("{pending} worker connection(s)"),
                        ));
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        }
        listener.set_nonblocking(false)?;
        let (tx, inbox) = mpsc::channel();
        let mut writers = Vec::with_capacity(m);
        for stream in slots.into_iter().flatten() {
            forward(stream.try_clone()?, tx.clone());
            writers.push(BufWriter::new(stream));
        }
        Ok(Self {
            writers,
            inbox,
            local_workers: Vec::new(),
        })
    }

    /// Binds `127.0.0.1:port` (0 picks a free port) and runs `m` workers on
    /// local threads that connect over TCP.
    pub fn spawn_local(m: usize, port: u16, solver: SolverOptions) -> Result<Self, Error> {
        let listener = TcpListener::bind(("127.0.0.1", port))?;
        let addr = listener.local_addr()?;
        let handles: Vec<_> = (0..m)
            .map(|i| thread::spawn(move || run_tcp_worker(addr, i, solver)))
            .collect();
        let mut t = Self::accept(&listener, m, Duration::from_secs(5))?;
        t.local_workers = handles;
        Ok(t)
    }
}

impl Transport for TcpTransport {
    fn num_workers(&self) -> usize {
        self.writers.len()
    }

    fn send(&mut self, robot: usize, msg: DmpcMessage) -> Result<(), Error> {
        let m = self.writers.len();
        let w = self
            .writers
            .get_mut(robot)
            .ok_or_else(|| Error::Transport(format!("no worker {robot} (have {m})")))?;
        write_frame(w, &msg).map_err(|e| Error::Transport(format!("send to worker {robot}: {e}")))
    }

    fn recv(&mut self, timeout: Duration) -> Result<DmpcMessage, Error> {
        match self.inbox.recv_timeout(timeout) {
            Ok(Ok(m)) => Ok(m),
            Ok(Err(e)) => Err(Error::Transport(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(timeout, "worker frame".into())),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("all worker connections closed".into()))
            }
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for w in &mut self.writers {
            let _ = write_frame(w, &DmpcMessage::Shutdown);
        }
        self.writers.clear();
        for h in self.local_workers.drain(..) {
            let _ = h.join();
        }
    }
}

struct TcpLink {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl WorkerLink for TcpLink {
    fn recv(&mut self) -> Result<Option<DmpcMessage>, Error> {
        read_frame(&mut self.reader)
    }

    fn send(&mut self, msg: DmpcMessage) -> Result<(), Error> {
        write_frame(&mut self.writer, &msg)
    }
}

/// Connects to a coordinator and serves as robot `robot` until shutdown.
pub fn run_tcp_worker(
    addr: impl ToSocketAddrs,
    robot: usize,
    solver: SolverOptions,
) -> Result<(), Error> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut link = TcpLink {
        reader: BufReader::new(stream.try_clone()?),
        writer: BufWriter::new(stream),
    };
    link.send(DmpcMessage::Hello { robot })?;
    run_robot_worker(&mut RobotWorker::new(robot, solver), &mut link)
}
