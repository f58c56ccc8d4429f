//! Wire messages. Every message is a JSON object `{type, seq, payload}`.
//!
//! Client to server:
//!
//! | type             | payload                                             |
//! |------------------|-----------------------------------------------------|
//! | `HipMove`        | `{x, y, z, at?}`; `at` is session time in seconds   |
//! | `SelectModel`    | `{name}`                                            |
//! | `SelectLevel`    | `{level}`                                           |
//! | `SelectRoi`      | `{center: [u, v], extent, depth_gain?}`             |
//! | `SetMaterial`    | `{k, rho, mu_s, mu_max, g0}`                        |
//! | `ToggleFriction` | `{on}`                                              |
//! | `Reset`          | none                                                |
//!
//! Server to client: `Hello`, `Ack`, `Error` and `Frame`. `seq` counts
//! messages of each server type separately, so delivered frames carry a
//! gap-free sequence.

use hapto_core::lod::{RoiSelection, WorkspaceMapping};
use hapto_core::sim::HapticFrame;
use hapto_core::{NoteEvent, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::SessionError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", deny_unknown_fields)]
pub enum ClientCommand {
    HipMove {
        x: f64,
        y: f64,
        z: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        at: Option<f64>,
    },
    SelectModel {
        name: String,
    },
    SelectLevel {
        level: usize,
    },
    SelectRoi {
        center: [f64; 2],
        extent: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depth_gain: Option<f64>,
    },
    SetMaterial {
        k: f64,
        rho: f64,
        mu_s: f64,
        mu_max: f64,
        g0: f64,
    },
    ToggleFriction {
        on: bool,
    },
    Reset,
}

impl ClientCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ClientCommand::HipMove { .. } => "HipMove",
            ClientCommand::SelectModel { .. } => "SelectModel",
            ClientCommand::SelectLevel { .. } => "SelectLevel",
            ClientCommand::SelectRoi { .. } => "SelectRoi",
            ClientCommand::SetMaterial { .. } => "SetMaterial",
            ClientCommand::ToggleFriction { .. } => "ToggleFriction",
            ClientCommand::Reset => "Reset",
        }
    }

    /// Rejects non-finite numbers.
    pub fn validate(&self) -> Result<(), SessionError> {
        let nums: Vec<f64> = match self {
            ClientCommand::HipMove { x, y, z, at } => {
                let mut v = vec![*x, *y, *z];
                v.extend(at);
                v
            }
            ClientCommand::SelectRoi {
                center, depth_gain, ..
            } => {
                let mut v = center.to_vec();
                v.extend(depth_gain);
                v
            }
            ClientCommand::SetMaterial {
                k,
                rho,
                mu_s,
                mu_max,
                g0,
            } => vec![*k, *rho, *mu_s, *mu_max, *g0],
            _ => Vec::new(),
        };
        if nums.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(SessionError::Invalid(format!(
                "{}: numeric fields must be finite",
                self.name()
            )))
        }
    }
}

/// A client command with its sequence number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub command: ClientCommand,
}

impl ClientMessage {
    /// Parses and validates one message. On failure the sequence number is
    /// recovered when possible so the error reply can reference it.
    pub fn parse(text: &str) -> Result<Self, (Option<u64>, SessionError)> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| (None, SessionError::Malformed(e.to_string())))?;
        let seq = value.get("seq").and_then(|s| s.as_u64());
        let msg: ClientMessage = serde_json::from_value(value)
            .map_err(|e| (seq, SessionError::Malformed(e.to_string())))?;
        msg.command.validate().map_err(|e| (Some(msg.seq), e))?;
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages serialize")
    }
}

/// Where the active tile comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub model: String,
    pub level: usize,
    pub levels: usize,
    pub roi: RoiSelection,
    pub mapping: WorkspaceMapping,
    pub friction: bool,
}

/// Active tile geometry for client-side rendering, possibly subsampled by
/// `stride` lattice steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileInfo {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    /// Workspace length between delivered samples.
    pub spacing: f64,
    /// Surface heights in workspace units, row-major.
    pub heights: Vec<f64>,
    pub friction: Option<Vec<f64>>,
    pub zones: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub models: Vec<String>,
    pub tick_rate: f64,
    pub publish_rate: f64,
    pub view: ViewDescriptor,
    pub tile: TileInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AckPayload {
    pub command_seq: u64,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub command_seq: Option<u64>,
    pub message: String,
}

/// Published state snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub t: u64,
    pub hip: Vec3,
    pub proxy: Vec3,
    pub force: Vec3,
    pub in_contact: bool,
    pub stuck: bool,
    pub mu_d: f64,
    pub iters: usize,
    /// Every event since the previous delivered frame.
    pub events: Vec<NoteEvent>,
    pub level: usize,
    pub roi: RoiSelection,
}

impl FramePayload {
    pub fn new(frame: &HapticFrame, events: Vec<NoteEvent>, level: usize, roi: RoiSelection) -> Self {
        Self {
            t: frame.t,
            hip: frame.hip,
            proxy: frame.proxy,
            force: frame.force,
            in_contact: frame.in_contact,
            stuck: frame.stuck,
            mu_d: frame.mu_d,
            iters: frame.iters,
            events,
            level,
            roi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ServerPayload {
    Hello(Box<HelloPayload>),
    Ack(Box<AckPayload>),
    Error(ErrorPayload),
    Frame(Box<FramePayload>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub seq: u64,
    #[serde(flatten)]
    pub payload: ServerPayload,
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn parse(text: &str) -> Result<Self, SessionError> {
        serde_json::from_str(text).map_err(|e| SessionError::Malformed(e.to_string()))
    }
}

/// Per-type outgoing sequence counters.
#[derive(Clone, Debug, Default)]
pub struct SeqCounters {
    hello: u64,
    ack: u64,
    error: u64,
    frame: u64,
}

impl SeqCounters {
    pub fn stamp(&mut self, payload: ServerPayload) -> ServerMessage {
        let counter = match payload {
            ServerPayload::Hello(_) => &mut self.hello,
            ServerPayload::Ack(_) => &mut self.ack,
            ServerPayload::Error(_) => &mut self.error,
            ServerPayload::Frame(_) => &mut self.frame,
        };
        let seq = *counter;
        *counter += 1;
        ServerMessage { seq, payload }
    }
}
