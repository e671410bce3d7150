//! Teleop wire messages. Every message is one JSON object in a websocket text
//! frame, tagged by `type` and carrying a `seq` number. See `docs/teleop-protocol.md`.

use serde::{Deserialize, Serialize};

use crate::sim::ContactPoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Partial update; absent fields keep their value.
    Command {
        seq: u64,
        #[serde(default)]
        goal_direction: Option<f64>,
        #[serde(default)]
        height_delta: Option<f64>,
        #[serde(default)]
        terrain_bool: Option<u8>,
    },
    Reset {
        seq: u64,
    },
    Terrain {
        seq: u64,
        terrain: String,
    },
}

impl ClientMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ClientMessage::Command { seq, .. }
            | ClientMessage::Reset { seq }
            | ClientMessage::Terrain { seq, .. } => *seq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    pub goal_direction: f64,
    pub height_delta: f64,
    pub height_target: f64,
    pub terrain_bool: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerrainInfo {
    pub spec: String,
    /// Ground polyline `[x, z]`.
    pub profile: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub t: f64,
    pub pose: Pose,
    pub joints: [f64; 4],
    pub wheel_angles: [f64; 2],
    pub hip: [f64; 2],
    pub knees: [[f64; 2]; 2],
    pub wheels: [[f64; 2]; 2],
    pub contacts: Vec<ContactPoint>,
    pub goal: [f64; 2],
    pub command: CommandState,
    /// The policy input of the latest tick.
    pub observation: Vec<f64>,
    pub terrain: TerrainInfo,
    /// Sequence number of the last client message applied to the simulation.
    pub applied_seq: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        seq: u64,
        control_hz: f64,
        snapshot_hz: f64,
        obs_dim: usize,
    },
    State {
        seq: u64,
        #[serde(flatten)]
        snapshot: Box<Snapshot>,
    },
    Error {
        seq: u64,
        in_reply_to: Option<u64>,
        message: String,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ServerMessage::Hello { seq, .. }
            | ServerMessage::State { seq, .. }
            | ServerMessage::Error { seq, .. } => *seq,
        }
    }
}
