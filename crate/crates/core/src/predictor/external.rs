//! Out-of-process predictor speaking line-delimited JSON.
//!
//! Request: `{"history": [[[x, y], ...N], ...L], "num_humans": n}`
//! Reply:   `{"positions": [[x, y], ...n]}`
//!
//! One request yields exactly one reply, in order. Replies are cached by
//! the exact bit pattern of the window until the next
//! [`begin_solve`](super::Predictor::begin_solve), so repeated queries within
//! one solve are deterministic even if the model is not.

use super::Predictor;
use crate::error::Error;
use crate::geom::Vec2;
use crate::history::PositionHistory;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(200);

#[derive(Serialize)]
struct Request<'a> {
    history: Vec<&'a [Vec2]>,
    num_humans: usize,
}

#[derive(Deserialize)]
struct Reply {
    positions: Vec<Vec2>,
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

pub struct ExternalPredictor {
    conn: Mutex<Connection>,
    cache: Mutex<HashMap<Vec<u64>, Vec<Vec2>>>,
    timeout: Duration,
    label: String,
}

impl ExternalPredictor {
    /// Wraps an arbitrary byte stream pair.
    pub fn from_streams<R, W>(reader: R, writer: W, label: impl Into<String>) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self::with_connection(reader, Box::new(writer), None, label.into())
    }

    /// Spawns `command` and talks to it over its stdin/stdout.
    pub fn spawn(mut command: Command) -> Result<Self, Error> {
        let label = format!("{command:?}");
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::with_connection(
            stdout,
            Box::new(stdin),
            Some(child),
            label,
        ))
    }

    /// Connects to a predictor server over TCP.
    pub fn connect(addr: impl ToSocketAddrs + std::fmt::Debug) -> Result<Self, Error> {
        let label = format!("tcp:{addr:?}");
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::with_connection(reader, Box::new(stream), None, label))
    }

    fn with_connection<R: Read + Send + 'static>(
        reader: R,
        writer: Box<dyn Write + Send>,
        child: Option<Child>,
        label: String,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Self {
            conn: Mutex::new(Connection {
                writer,
                lines: rx,
                child,
            }),
            cache: Mutex::new(HashMap::new()),
            timeout: DEFAULT_TIMEOUT,
            label,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn query(&self, history: &PositionHistory) -> Result<Vec<Vec2>, Error> {
        let n = history.num_humans();
        let request = Request {
            history: history.slices().map(|s| s.as_slice()).collect(),
            num_humans: n,
        };
        let mut line = serde_json::to_string(&request)?;
        line.push('\n');
        let mut conn = self.conn.lock().expect("predictor connection poisoned");
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.flush()?;
        let reply = match conn.lines.recv_timeout(self.timeout) {
            Ok(Ok(text)) => text,
            Ok(Err(e)) => return Err(Error::Io(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Timeout(
                    self.timeout,
                    format!("predictor {}", self.label),
                ))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol(format!(
                    "predictor {} closed its output",
                    self.label
                )))
            }
        };
        let parsed: Reply = serde_json::from_str(reply.trim_end())
            .map_err(|e| Error::Protocol(format!("malformed reply {:?}: {e}", reply.trim_end())))?;
        if parsed.positions.len() != n {
            return Err(Error::Arity {
                what: "external predictor reply",
                expected: n,
                got: parsed.positions.len(),
            });
        }
        Ok(parsed.positions)
    }
}

impl Predictor for ExternalPredictor {
    fn predict_step(&self, history: &PositionHistory) -> Result<Vec<Vec2>, Error> {
        let key = history.fingerprint();
        if let Some(hit) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let positions = self.query(history)?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, positions.clone());
        Ok(positions)
    }

    fn begin_solve(&self) {
        self.cache.lock().expect("cache poisoned").clear();
    }

    fn name(&self) -> &str {
        "external"
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{rollout_prediction, ConstantVelocity};
    use serde_json::Value;
    use std::net::TcpListener;

    /// Serves one connection, answering each request with `respond`.
    fn serve(respond: fn(&Value) -> String) -> std::net::SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut out = stream.try_clone().unwrap();
            for line in BufReader::new(stream).lines() {
                let Ok(line) = line else { break };
                let req: Value = serde_json::from_str(&line).unwrap();
                let mut reply = respond(&req);
                reply.push('\n');
                if out.write_all(reply.as_bytes()).is_err() {
                    break;
                }
            }
        });
        addr
    }

    fn echo_last(req: &Value) -> String {
        let n = req["num_humans"].as_u64().unwrap() as usize;
        let last = req["history"]
            .as_array()
            .unwrap()
            .last()
            .unwrap()
            .as_array()
            .unwrap();
        let humans = &last[last.len() - n..];
        serde_json::json!({ "positions": humans }).to_string()
    }

    fn history() -> PositionHistory {
        PositionHistory::from_slices(
            1,
            vec![
                vec![
                    Vec2::new(0.0, 0.0),
                    Vec2::new(2.0, 1.0),
                    Vec2::new(-1.0, 3.0),
                ],
                vec![
                    Vec2::new(0.1, 0.0),
                    Vec2::new(2.0, 1.0),
                    Vec2::new(-1.0, 3.0),
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn echo_server_gives_stationary_rollout() {
        let p = ExternalPredictor::connect(serve(echo_last)).unwrap();
        let h = history();
        let plan = vec![vec![
            Vec2::new(0.2, 0.0),
            Vec2::new(0.3, 0.0),
            Vec2::new(0.4, 0.0),
        ]];
        let got = rollout_prediction(&p, &h, &plan, 3).unwrap();
        let want = rollout_prediction(&ConstantVelocity, &h, &plan, 3).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn malformed_reply_is_a_protocol_error() {
        let p = ExternalPredictor::connect(serve(|_| "{\"pos\": 1}".into())).unwrap();
        assert!(matches!(
            p.predict_step(&history()),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn wrong_arity_is_reported() {
        let p = ExternalPredictor::connect(serve(|_| r#"{"positions": [[0, 0]]}"#.into())).unwrap();
        assert!(matches!(
            p.predict_step(&history()),
            Err(Error::Arity {
                expected: 2,
                got: 1,
                ..
            })
        ));
    }

    #[test]
    fn silent_server_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let (s, _) = listener.accept().unwrap();
            thread::sleep(Duration::from_millis(400));
            drop(s);
        });
        let p = ExternalPredictor::connect(addr)
            .unwrap()
            .with_timeout(Duration::from_millis(50));
        assert!(matches!(
            p.predict_step(&history()),
            Err(Error::Timeout(..))
        ));
        handle.join().unwrap();
    }

    #[test]
    fn replies_are_cached_within_a_solve() {
        // A server that answers with a counter: the cache must hide it.
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut out = stream.try_clone().unwrap();
            for (k, line) in BufReader::new(stream).lines().enumerate() {
                if line.is_err() {
                    break;
                }
                let x = k as f64;
                let reply = format!("{{\"positions\": [[{x}, 0], [{x}, 1]]}}\n");
                out.write_all(reply.as_bytes()).unwrap();
            }
        });
        let p = ExternalPredictor::connect(addr).unwrap();
        let h = history();
        let a = p.predict_step(&h).unwrap();
        let b = p.predict_step(&h).unwrap();
        assert_eq!(a, b);
        p.begin_solve();
        let c = p.predict_step(&h).unwrap();
        assert_ne!(a, c);
    }
}
