//! Wire messages. Every frame is one UTF-8 JSON object tagged by `type`.

use serde::{Deserialize, Serialize};
use shieldsim_core::dynamics::PhysicalParams;
use shieldsim_core::harness::Outcome;
use shieldsim_core::humans::KeyState;
use shieldsim_core::scenarios::Scenario;
use shieldsim_core::shield::ShieldDecision;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        name: String,
    },
    /// Starts an episode. `None` keeps the server's configured scenario.
    Start {
        #[serde(default)]
        scenario: Option<String>,
    },
    Input {
        up: bool,
        down: bool,
        left: bool,
        right: bool,
        seq: u64,
    },
    Quit,
}

impl ClientMessage {
    pub fn input(keys: KeyState, seq: u64) -> Self {
        ClientMessage::Input {
            up: keys.up,
            down: keys.down,
            left: keys.left,
            right: keys.right,
            seq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "outcome", rename_all = "snake_case")]
pub enum SessionStatus {
    Lobby,
    Running,
    Ended(Outcome),
}

/// Per-episode totals sent after `End`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub rounds: usize,
    pub shield_activations: usize,
    pub stops_in_zone: usize,
    /// The input snapshot the human consumed in each round; `None` where no
    /// fresh input was available.
    pub commands: Vec<Option<KeyState>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    Welcome {
        session: u64,
        version: u32,
    },
    ScenarioDesc {
        geometry: Box<Scenario>,
        params: PhysicalParams,
    },
    Tick {
        round: usize,
        /// `(x_R, y_R, v_R, θ_R, x_H, y_H, v_H, θ_H)`.
        state: [f64; 8],
        shield_decision: Option<ShieldDecision>,
        status: SessionStatus,
    },
    End {
        outcome: Outcome,
        time_to_goal_s: Option<f64>,
    },
    Summary(EpisodeSummary),
    Error {
        message: String,
    },
}
