//! Single-slot, last-write-wins input mailbox between the socket reader and
//! the simulation tick.

use std::sync::{Arc, Mutex};

use shieldsim_core::controllers::ControllerError;
use shieldsim_core::humans::{CommandSource, KeyState};
use tokio::sync::watch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub keys: KeyState,
    pub seq: u64,
}

/// Writer half, owned by the connection.
#[derive(Debug)]
pub struct Mailbox {
    tx: watch::Sender<Option<Snapshot>>,
}

impl Default for Mailbox {
    fn default() -> Self {
        Self::new()
    }
}

impl Mailbox {
    pub fn new() -> Self {
        Self {
            tx: watch::channel(None).0,
        }
    }

    /// Stores `keys` unless `seq` does not exceed the last accepted sequence
    /// number. Returns whether the snapshot was accepted.
    pub fn post(&self, keys: KeyState, seq: u64) -> bool {
        self.tx.send_if_modified(|slot| match slot {
            Some(s) if seq <= s.seq => false,
            _ => {
                *slot = Some(Snapshot { keys, seq });
                true
            }
        })
    }

    pub fn latest(&self) -> Option<Snapshot> {
        *self.tx.borrow()
    }

    /// A reader that treats a snapshot as absent once it has been consumed
    /// for `timeout_rounds` rounds without a newer one arriving.
    pub fn source(&self, timeout_rounds: usize) -> MailboxSource {
        MailboxSource {
            rx: self.tx.subscribe(),
            timeout_rounds,
            last_seq: None,
            age: 0,
            consumed: Arc::default(),
        }
    }
}

/// Reader half, consumed once per round by the remote human.
#[derive(Debug)]
pub struct MailboxSource {
    rx: watch::Receiver<Option<Snapshot>>,
    timeout_rounds: usize,
    last_seq: Option<u64>,
    age: usize,
    consumed: Arc<Mutex<Vec<Option<KeyState>>>>,
}

impl MailboxSource {
    /// Shared log of the input consumed in each round.
    pub fn consumed(&self) -> Arc<Mutex<Vec<Option<KeyState>>>> {
        Arc::clone(&self.consumed)
    }
}

impl CommandSource for MailboxSource {
    fn next_command(&mut self) -> Result<Option<KeyState>, ControllerError> {
        let current = *self.rx.borrow_and_update();
        let keys = current.and_then(|s| {
            if self.last_seq == Some(s.seq) {
                self.age += 1;
            } else {
                self.last_seq = Some(s.seq);
                self.age = 0;
            }
            (self.age < self.timeout_rounds).then_some(s.keys)
        });
        self.consumed.lock().expect("consumed log poisoned").push(keys);
        Ok(keys)
    }
}
