//! Simulated parties, the messages they exchange and the append-only trace.
//!
//! The server agent only accepts [`ToServer`] messages, whose variants carry
//! noisy or masked values. Every delivery is recorded in the [`Trace`], which
//! is what the information-flow checks inspect.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::crypto::{secure_aggregate, MaskedLossCiphertext};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Server,
    /// Holds the OPE key; never the server.
    KeyHolder,
    /// Deals pairwise seeds during setup.
    Dealer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    NoisyLoss,
    MaskedLoss,
    NoisyDegree,
    Theta,
    DeletionBit,
    PairSeeds,
    OpeKey,
    RawDegree,
    RawLoss,
}

impl Payload {
    /// Payloads that must never reach the server.
    pub fn is_sensitive(&self) -> bool {
        matches!(
            self,
            Payload::RawDegree | Payload::RawLoss | Payload::PairSeeds | Payload::OpeKey
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub event: String,
    pub round: Option<u32>,
    pub actor: Role,
    pub recipient: Role,
    pub payload: Payload,
    pub payload_size: usize,
}

/// Append-only event log. Records carry roles and sizes, never user ids.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    enabled: bool,
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new() -> Self {
        Self { enabled: true, events: Vec::new() }
    }

    /// A trace that drops everything; for callers that only want results.
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        event: &str,
        round: Option<u32>,
        actor: Role,
        recipient: Role,
        payload: Payload,
        payload_size: usize,
    ) {
        if self.enabled {
            self.events.push(TraceEvent {
                event: event.to_owned(),
                round,
                actor,
                recipient,
                payload,
                payload_size,
            });
        }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn received_by(&self, role: Role) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.recipient == role)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("trace events serialize"));
        }
        out
    }
}

/// Everything a user may send to the server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToServer {
    NoisyLoss { round: u32, value: f64 },
    MaskedLoss(MaskedLossCiphertext),
    NoisyDegree(f64),
}

impl ToServer {
    fn describe(&self) -> (&'static str, Option<u32>, Payload, usize) {
        match self {
            ToServer::NoisyLoss { round, .. } => ("noisy_loss", Some(*round), Payload::NoisyLoss, 8),
            ToServer::MaskedLoss(ct) => ("masked_loss", Some(ct.round), Payload::MaskedLoss, 8),
            ToServer::NoisyDegree(_) => ("noisy_degree", None, Payload::NoisyDegree, 8),
        }
    }
}

/// The untrusted aggregator. Holds only what users sent it.
#[derive(Debug, Default)]
pub struct Server {
    noisy_losses: Vec<(u32, f64)>,
    masked: Vec<MaskedLossCiphertext>,
    noisy_degrees: Vec<f64>,
}

impl Server {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn receive(&mut self, msg: ToServer, trace: &mut Trace) {
        let (event, round, payload, size) = msg.describe();
        trace.record(event, round, Role::User, Role::Server, payload, size);
        match msg {
            ToServer::NoisyLoss { round, value } => self.noisy_losses.push((round, value)),
            ToServer::MaskedLoss(ct) => self.masked.push(ct),
            ToServer::NoisyDegree(d) => self.noisy_degrees.push(d),
        }
    }

    /// Sum of the noisy losses reported for `round`.
    pub fn sum_noisy_losses(&self, round: u32) -> f64 {
        self.noisy_losses.iter().filter(|(r, _)| *r == round).map(|(_, v)| v).sum()
    }

    pub fn aggregate_masked(&self, users: usize, round: u32) -> Result<u64> {
        let cts: Vec<_> = self.masked.iter().filter(|c| c.round == round).copied().collect();
        secure_aggregate(&cts, users, round)
    }

    pub fn noisy_degrees(&self) -> &[f64] {
        &self.noisy_degrees
    }

    /// Every numeric value the server has seen, for leak checks.
    pub fn observed_values(&self) -> Vec<f64> {
        self.noisy_losses
            .iter()
            .map(|(_, v)| *v)
            .chain(self.masked.iter().map(|c| c.value as f64))
            .chain(self.noisy_degrees.iter().copied())
            .collect()
    }

    pub fn observed_ciphertexts(&self) -> &[MaskedLossCiphertext] {
        &self.masked
    }

    /// Announces the selected parameter to all users.
    pub fn broadcast_theta(&self, users: usize, trace: &mut Trace) {
        for _ in 0..users {
            trace.record("theta", None, Role::Server, Role::User, Payload::Theta, 8);
        }
    }
}
