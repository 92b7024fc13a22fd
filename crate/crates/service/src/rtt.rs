//! Round-trip-time measurement bound to a login attempt.
//!
//! The login page fetches a nonce (`GET /v1/auth/nonce`), opens
//! `GET /v1/rtt?nonce=<nonce>` as a WebSocket and echoes every frame. The
//! server sends `pings` frames of the form
//!
//! ```json
//! {"type":"ping","seq":0,"payload":"9f0c..."}
//! ```
//!
//! back to back and matches echoes by `seq` (order does not matter, the
//! payload must be unchanged). When every ping came back in time the samples
//! are stored under the nonce and the server sends
//! `{"type":"done","samples":5}`; otherwise `{"type":"done","samples":0}` and
//! the login later proceeds without RTT. The login request names the nonce;
//! unclaimed measurements expire after `nonce_ttl_secs`.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Upper bound on outstanding nonces; beyond it new nonces are refused.
pub const MAX_PENDING: usize = 100_000;

#[derive(Debug)]
struct Slot {
    created: Instant,
    samples: Option<Vec<f64>>,
}

#[derive(Debug)]
pub struct RttRegistry {
    ttl: Duration,
    slots: Mutex<HashMap<String, Slot>>,
}

impl RttRegistry {
    pub fn new(ttl: Duration) -> Self {
        RttRegistry { ttl, slots: Mutex::new(HashMap::new()) }
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }

    fn purge(&self, slots: &mut HashMap<String, Slot>) {
        let ttl = self.ttl;
        slots.retain(|_, s| s.created.elapsed() < ttl);
    }

    /// A fresh 128-bit nonce, or `None` when too many are outstanding.
    pub fn issue(&self) -> Option<String> {
        let mut bytes = [0u8; 16];
        rand::rng().fill_bytes(&mut bytes);
        let nonce = hex::encode(bytes);
        let mut slots = self.slots.lock();
        if slots.len() >= MAX_PENDING {
            self.purge(&mut slots);
            if slots.len() >= MAX_PENDING {
                return None;
            }
        }
        slots.insert(nonce.clone(), Slot { created: Instant::now(), samples: None });
        Some(nonce)
    }

    /// True while the nonce is live and has no measurement yet.
    pub fn awaiting(&self, nonce: &str) -> bool {
        let slots = self.slots.lock();
        slots.get(nonce).is_some_and(|s| s.samples.is_none() && s.created.elapsed() < self.ttl)
    }

    /// Stores samples for a live nonce; false if it expired or already has some.
    pub fn record(&self, nonce: &str, samples: Vec<f64>) -> bool {
        let mut slots = self.slots.lock();
        match slots.get_mut(nonce) {
            Some(s) if s.samples.is_none() && s.created.elapsed() < self.ttl => {
                s.samples = Some(samples);
                true
            }
            _ => false,
        }
    }

    /// Claims the samples of a nonce. Unknown, expired or unmeasured nonces
    /// give no samples; the nonce is spent either way.
    pub fn take(&self, nonce: &str) -> Vec<f64> {
        let mut slots = self.slots.lock();
        let slot = slots.remove(nonce);
        self.purge(&mut slots);
        match slot {
            Some(s) if s.created.elapsed() < self.ttl => s.samples.unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.slots.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum RttFrame {
    Ping { seq: u32, payload: String },
    Done { samples: u32 },
}

/// Tracks sent pings and matches echoes to them.
#[derive(Debug)]
pub struct PingRound {
    sent: Vec<(String, Instant)>,
    samples: Vec<Option<f64>>,
}

impl PingRound {
    /// Builds `n` ping frames, marking them as sent now.
    pub fn start(n: u32) -> (Self, Vec<String>) {
        let mut frames = Vec::new();
        let mut sent = Vec::new();
        for seq in 0..n {
            let mut bytes = [0u8; 8];
            rand::rng().fill_bytes(&mut bytes);
            let payload = hex::encode(bytes);
            frames.push(serde_json::to_string(&RttFrame::Ping { seq, payload: payload.clone() }).expect("frame"));
            sent.push((payload, Instant::now()));
        }
        (PingRound { sent, samples: vec![None; n as usize] }, frames)
    }

    /// Restarts the clock of ping `seq`; call right after writing its frame.
    pub fn mark_sent(&mut self, seq: usize) {
        if let Some(s) = self.sent.get_mut(seq) {
            s.1 = Instant::now();
        }
    }

    /// Accepts one echoed frame. Unknown sequence numbers, altered payloads
    /// and repeats are ignored.
    pub fn echo(&mut self, text: &str) {
        let Ok(RttFrame::Ping { seq, payload }) = serde_json::from_str::<RttFrame>(text) else { return };
        let i = seq as usize;
        if let (Some((expected, at)), Some(slot)) = (self.sent.get(i), self.samples.get(i)) {
            if slot.is_none() && *expected == payload {
                self.samples[i] = Some(at.elapsed().as_secs_f64() * 1000.0);
            }
        }
    }

    pub fn complete(&self) -> bool {
        self.samples.iter().all(Option::is_some)
    }

    /// All samples in sequence order, only once every ping was echoed.
    pub fn samples(&self) -> Option<Vec<f64>> {
        self.samples.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonce_lifecycle() {
        let reg = RttRegistry::new(Duration::from_secs(60));
        let n = reg.issue().unwrap();
        assert_eq!(n.len(), 32);
        assert!(reg.awaiting(&n));
        assert!(reg.record(&n, vec![12.0, 9.5]));
        assert!(!reg.record(&n, vec![1.0]), "one measurement per nonce");
        assert_eq!(reg.take(&n), vec![12.0, 9.5]);
        assert!(reg.take(&n).is_empty(), "spent");
        assert!(reg.take("unknown").is_empty());
    }

    #[test]
    fn expired_nonce_yields_nothing() {
        let reg = RttRegistry::new(Duration::from_millis(1));
        let n = reg.issue().unwrap();
        std::thread::sleep(Duration::from_millis(5));
        assert!(!reg.awaiting(&n));
        assert!(!reg.record(&n, vec![1.0]));
        assert!(reg.take(&n).is_empty());
    }

    #[test]
    fn echoes_match_by_sequence() {
        let (mut round, frames) = PingRound::start(5);
        assert_eq!(frames.len(), 5);
        for f in frames.iter().rev() {
            round.echo(f);
        }
        round.echo(&frames[0]);
        assert!(round.complete());
        assert_eq!(round.samples().unwrap().len(), 5);
    }

    #[test]
    fn altered_or_foreign_echoes_are_ignored() {
        let (mut round, frames) = PingRound::start(2);
        round.echo(&frames[0]);
        round.echo(r#"{"type":"ping","seq":1,"payload":"00"}"#);
        round.echo(r#"{"type":"ping","seq":7,"payload":"00"}"#);
        round.echo("garbage");
        assert!(!round.complete());
        assert!(round.samples().is_none());
    }
}
