//! WebSocket server for live sessions: one simulated episode per connection,
//! with the human vehicle driven by the client's keyboard.

pub mod mailbox;
pub mod protocol;
pub mod session;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use shieldsim_core::harness::RunConfig;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::time::{interval, Interval, MissedTickBehavior};

use crate::protocol::ServerMessage;
use crate::session::Session;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Scenario, controller and backup used for every session.
    pub run: RunConfig,
    /// Wall-clock time per round.
    pub tick: Duration,
    /// Session `n` (counting from 0) uses seed `base_seed + n`.
    pub base_seed: u64,
}

impl ServerConfig {
    pub fn new(run: RunConfig) -> Self {
        let tick = Duration::from_secs_f64(run.scenario.physical.tau);
        Self {
            run,
            tick,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

struct AppState {
    cfg: ServerConfig,
    sessions: AtomicU64,
}

/// The router serving the session endpoint at `/ws`.
pub fn router(cfg: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        cfg,
        sessions: AtomicU64::new(0),
    });
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

/// Serves sessions on `listener` until the process ends.
pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> Result<(), ServerError> {
    axum::serve(listener, router(cfg)).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>) -> Response {
    let id = state.sessions.fetch_add(1, Ordering::Relaxed);
    let session = Session::new(id, state.cfg.base_seed.wrapping_add(id), state.cfg.run.clone());
    let tick = state.cfg.tick;
    ws.on_upgrade(move |socket| run_session(socket, session, tick))
}

async fn send_all(socket: &mut WebSocket, messages: Vec<ServerMessage>) -> bool {
    for m in messages {
        let text = serde_json::to_string(&m).expect("server messages serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn next_tick(ticker: &mut Option<Interval>) {
    match ticker {
        Some(t) => {
            t.tick().await;
        }
        None => std::future::pending().await,
    }
}

async fn run_session(mut socket: WebSocket, mut session: Session, tick: Duration) {
    tracing::info!(session = session.id(), seed = session.seed(), "session opened");
    let mut ticker: Option<Interval> = None;
    loop {
        let out = tokio::select! {
            frame = socket.recv() => match frame {
                Some(Ok(Message::Text(text))) => session.handle_text(&text),
                Some(Ok(Message::Binary(_))) => session.fail("binary frames are not supported".into()),
                Some(Ok(Message::Ping(_) | Message::Pong(_))) => Vec::new(),
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
            },
            _ = next_tick(&mut ticker) => session.tick(),
        };
        if session.is_running() && ticker.is_none() {
            let mut t = interval(tick);
            t.set_missed_tick_behavior(MissedTickBehavior::Delay);
            t.reset();
            ticker = Some(t);
        } else if !session.is_running() {
            ticker = None;
        }
        if !send_all(&mut socket, out).await || session.is_closed() {
            break;
        }
    }
    let _ = socket.send(Message::Close(None)).await;
    tracing::info!(session = session.id(), status = ?session.status(), "session closed");
}
