//! Per-connection session state machine, independent of the socket.

use std::sync::{Arc, Mutex};

use shieldsim_core::harness::{Episode, HumanKind, RunConfig};
use shieldsim_core::humans::{KeyState, RemoteHuman};
use shieldsim_core::scenarios::Scenario;

use crate::mailbox::Mailbox;
use crate::protocol::{ClientMessage, EpisodeSummary, ServerMessage, SessionStatus, PROTOCOL_VERSION};

struct Running {
    episode: Episode,
    consumed: Arc<Mutex<Vec<Option<KeyState>>>>,
}

pub struct Session {
    id: u64,
    seed: u64,
    template: RunConfig,
    mailbox: Mailbox,
    running: Option<Running>,
    status: SessionStatus,
    closed: bool,
}

impl Session {
    /// `template` supplies everything but the human, which is always remote.
    pub fn new(id: u64, seed: u64, template: RunConfig) -> Self {
        Self {
            id,
            seed,
            template: RunConfig {
                human: HumanKind::Remote,
                run_count: 1,
                seed,
                ..template
            },
            mailbox: Mailbox::new(),
            running: None,
            status: SessionStatus::Lobby,
            closed: false,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_running(&self) -> bool {
        self.running.is_some()
    }

    /// True once the connection should be closed.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Handles one raw text frame. Malformed frames close the session.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => self.handle(m),
            Err(e) => self.fail(format!("malformed message: {e}")),
        }
    }

    pub fn fail(&mut self, message: String) -> Vec<ServerMessage> {
        self.closed = true;
        let mut out = self.abort("session error");
        out.insert(0, ServerMessage::Error { message });
        out
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        match msg {
            ClientMessage::Hello { .. } => vec![ServerMessage::Welcome {
                session: self.id,
                version: PROTOCOL_VERSION,
            }],
            ClientMessage::Start { scenario } => self.start(scenario),
            ClientMessage::Input {
                up,
                down,
                left,
                right,
                seq,
            } => {
                self.mailbox.post(KeyState { up, down, left, right }, seq);
                Vec::new()
            }
            ClientMessage::Quit => {
                self.closed = true;
                self.abort("client quit")
            }
        }
    }

    fn start(&mut self, scenario: Option<String>) -> Vec<ServerMessage> {
        if self.running.is_some() {
            return vec![ServerMessage::Error {
                message: "an episode is already running".into(),
            }];
        }
        let mut cfg = self.template.clone();
        if let Some(name) = scenario {
            match Scenario::builtin_by_name(&name) {
                Ok(s) => cfg.scenario = s,
                Err(e) => return vec![ServerMessage::Error { message: e.to_string() }],
            }
        }
        let tau = cfg.scenario.physical.tau;
        let timeout_rounds = (cfg.remote.timeout_s / tau).round() as usize;
        let source = self.mailbox.source(timeout_rounds);
        let consumed = source.consumed();
        let human = Box::new(RemoteHuman::new(cfg.remote, source));
        match cfg.validate().and_then(|_| Episode::with_human(&cfg, self.seed, human)) {
            Ok(episode) => {
                self.running = Some(Running { episode, consumed });
                self.status = SessionStatus::Running;
                vec![ServerMessage::ScenarioDesc {
                    params: cfg.scenario.physical,
                    geometry: Box::new(cfg.scenario),
                }]
            }
            Err(e) => vec![ServerMessage::Error { message: e.to_string() }],
        }
    }

    /// Advances the running episode by one round.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        let Some(run) = &mut self.running else {
            return Vec::new();
        };
        let report = run.episode.step_round();
        let status = match report.outcome {
            Some(o) => SessionStatus::Ended(o),
            None => SessionStatus::Running,
        };
        let mut out = vec![ServerMessage::Tick {
            round: report.round,
            state: report.state.to_vector(),
            shield_decision: report.decision,
            status,
        }];
        if report.outcome.is_some() {
            out.extend(self.finish());
        }
        out
    }

    fn abort(&mut self, reason: &str) -> Vec<ServerMessage> {
        match &mut self.running {
            Some(run) => {
                run.episode.abort_with(reason);
                self.finish()
            }
            None => Vec::new(),
        }
    }

    fn finish(&mut self) -> Vec<ServerMessage> {
        let Some(run) = self.running.take() else {
            return Vec::new();
        };
        let commands = run.consumed.lock().expect("consumed log poisoned").clone();
        let record = run.episode.into_record();
        self.status = SessionStatus::Ended(record.outcome);
        vec![
            ServerMessage::End {
                outcome: record.outcome,
                time_to_goal_s: record.time_to_goal_s,
            },
            ServerMessage::Summary(EpisodeSummary {
                seed: record.seed,
                rounds: record.rounds,
                shield_activations: record.shield_activations,
                stops_in_zone: record.stops_in_zone,
                commands,
            }),
        ]
    }
}
