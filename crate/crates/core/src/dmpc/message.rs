//! Coordinator/worker messages and their wire frame.
//!
//! On the wire every message is a 4-byte big-endian length followed by a
//! UTF-8 JSON object `{"type", "iter", "robot", "payload"}`. `robot` is
//! `null` for coordinator broadcasts. Payloads per type:
//!
//! | type                   | payload                                        |
//! |------------------------|------------------------------------------------|
//! | `hello`                | `null`                                         |
//! | `setup`                | `{params, num_robots, context, warm_start, neighbors}` |
//! | `prediction_broadcast` | `[[[x, y], ...humans], ...H]`                  |
//! | `best_response`        | `{trajectory: [[x, y], ...H], strategy: [[ax, ay], ...H]}` |
//! | `neighbor_update`      | `[[[x, y], ...H], ...M]` (own entry empty)     |
//! | `conv_flag`            | `bool`                                         |
//! | `terminate`            | `[[[ax, ay], ...H], ...M]`                     |
//! | `error`                | `string`                                       |
//! | `shutdown`             | `null`                                         |

use crate::error::Error;
use crate::geom::Vec2;
use crate::objectives::RobotContext;
use crate::params::CostParams;
use crate::predictor::PredictedCrowd;
use crate::types::{JointStrategy, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::io::{ErrorKind, Read, Write};

/// Upper bound on a frame body, to reject garbage length prefixes.
pub const MAX_FRAME_LEN: usize = 64 << 20;

/// Per-MPC-step initialization of one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSetup {
    pub params: CostParams,
    pub num_robots: usize,
    pub context: RobotContext,
    /// `u_i^(0)`.
    pub warm_start: Strategy,
    /// `x_{-i}^(0)`, indexed by robot id; the own entry is ignored.
    pub neighbors: Vec<Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DmpcMessage {
    /// First frame a TCP worker sends after connecting.
    Hello {
        robot: usize,
    },
    Setup {
        robot: usize,
        setup: Box<WorkerSetup>,
    },
    PredictionBroadcast {
        iter: usize,
        crowd: PredictedCrowd,
    },
    BestResponse {
        iter: usize,
        robot: usize,
        trajectory: Vec<Vec2>,
        strategy: Strategy,
    },
    NeighborUpdate {
        iter: usize,
        robot: usize,
        neighbors: Vec<Vec<Vec2>>,
    },
    ConvFlag {
        iter: usize,
        robot: usize,
        conv: bool,
    },
    Terminate {
        iter: usize,
        strategy: JointStrategy,
    },
    Error {
        iter: usize,
        robot: usize,
        message: String,
    },
    /// Ends the worker loop.
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    #[serde(rename = "type")]
    pub kind: String,
    pub iter: usize,
    pub robot: Option<usize>,
    pub payload: Value,
}

#[derive(Serialize, Deserialize)]
struct BestResponsePayload {
    trajectory: Vec<Vec2>,
    strategy: Strategy,
}

impl DmpcMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            DmpcMessage::Hello { .. } => "hello",
            DmpcMessage::Setup { .. } => "setup",
            DmpcMessage::PredictionBroadcast { .. } => "prediction_broadcast",
            DmpcMessage::BestResponse { .. } => "best_response",
            DmpcMessage::NeighborUpdate { .. } => "neighbor_update",
            DmpcMessage::ConvFlag { .. } => "conv_flag",
            DmpcMessage::Terminate { .. } => "terminate",
            DmpcMessage::Error { .. } => "error",
            DmpcMessage::Shutdown => "shutdown",
        }
    }

    pub fn iter(&self) -> usize {
        match self {
            DmpcMessage::PredictionBroadcast { iter, .. }
            | DmpcMessage::BestResponse { iter, .. }
            | DmpcMessage::NeighborUpdate { iter, .. }
            | DmpcMessage::ConvFlag { iter, .. }
            | DmpcMessage::Terminate { iter, .. }
            | DmpcMessage::Error { iter, .. } => *iter,
            DmpcMessage::Hello { .. } | DmpcMessage::Setup { .. } | DmpcMessage::Shutdown => 0,
        }
    }

    pub fn robot(&self) -> Option<usize> {
        match self {
            DmpcMessage::Hello { robot }
            | DmpcMessage::Setup { robot, .. }
            | DmpcMessage::BestResponse { robot, .. }
            | DmpcMessage::NeighborUpdate { robot, .. }
            | DmpcMessage::ConvFlag { robot, .. }
            | DmpcMessage::Error { robot, .. } => Some(*robot),
            DmpcMessage::PredictionBroadcast { .. }
            | DmpcMessage::Terminate { .. }
            | DmpcMessage::Shutdown => None,
        }
    }

    pub fn to_frame(&self) -> Result<Frame, Error> {
        let payload = match self {
            DmpcMessage::Hello { .. } | DmpcMessage::Shutdown => Value::Null,
            DmpcMessage::Setup { setup, .. } => serde_json::to_value(setup)?,
            DmpcMessage::PredictionBroadcast { crowd, .. } => serde_json::to_value(crowd)?,
            DmpcMessage::BestResponse {
                trajectory,
                strategy,
                ..
            } => serde_json::to_value(BestResponsePayload {
                trajectory: trajectory.clone(),
                strategy: strategy.clone(),
            })?,
            DmpcMessage::NeighborUpdate { neighbors, .. } => serde_json::to_value(neighbors)?,
            DmpcMessage::ConvFlag { conv, .. } => Value::Bool(*conv),
            DmpcMessage::Terminate { strategy, .. } => serde_json::to_value(strategy)?,
            DmpcMessage::Error { message, .. } => Value::String(message.clone()),
        };
        Ok(Frame {
            kind: self.kind().to_string(),
            iter: self.iter(),
            robot: self.robot(),
            payload,
        })
    }

    pub fn from_frame(frame: Frame) -> Result<Self, Error> {
        let robot = || {
            frame
                .robot
                .ok_or_else(|| Error::Protocol(format!("{} frame without robot id", frame.kind)))
        };
        let iter = frame.iter;
        let msg = match frame.kind.as_str() {
            "hello" => DmpcMessage::Hello { robot: robot()? },
            "setup" => DmpcMessage::Setup {
                robot: robot()?,
                setup: Box::new(serde_json::from_value(frame.payload)?),
            },
            "prediction_broadcast" => DmpcMessage::PredictionBroadcast {
                iter,
                crowd: serde_json::from_value(frame.payload)?,
            },
            "best_response" => {
                let robot = robot()?;
                let p: BestResponsePayload = serde_json::from_value(frame.payload)?;
                DmpcMessage::BestResponse {
                    iter,
                    robot,
                    trajectory: p.trajectory,
                    strategy: p.strategy,
                }
            }
            "neighbor_update" => DmpcMessage::NeighborUpdate {
                iter,
                robot: robot()?,
                neighbors: serde_json::from_value(frame.payload)?,
            },
            "conv_flag" => DmpcMessage::ConvFlag {
                iter,
                robot: robot()?,
                conv: frame
                    .payload
                    .as_bool()
                    .ok_or_else(|| Error::Protocol("conv_flag payload is not a bool".into()))?,
            },
            "terminate" => DmpcMessage::Terminate {
                iter,
                strategy: serde_json::from_value(frame.payload)?,
            },
            "error" => DmpcMessage::Error {
                iter,
                robot: robot()?,
                message: frame.payload.as_str().unwrap_or_default().to_string(),
            },
            "shutdown" => DmpcMessage::Shutdown,
            other => return Err(Error::Protocol(format!("unknown message type {other:?}"))),
        };
        Ok(msg)
    }
}

pub fn write_frame<W: Write>(w: &mut W, msg: &DmpcMessage) -> Result<(), Error> {
    let body = serde_json::to_vec(&msg.to_frame()?)?;
    if body.len() > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds limit",
            body.len()
        )));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the header.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<DmpcMessage>, Error> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("frame length {len} exceeds limit")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let frame: Frame = serde_json::from_slice(&body)?;
    DmpcMessage::from_frame(frame).map(Some)
}
