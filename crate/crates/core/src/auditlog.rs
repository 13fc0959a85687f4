//! Append-only, hash-chained audit log.
//!
//! Each event commits to its predecessor:
//!
//! ```text
//! hash = sha256_hex(prev_hash ‖ canonical_json({kind, payload, seq}))
//! ```
//!
//! The first event links to `sha256_hex("SFC-GENESIS")`. The export format
//! is newline-delimited canonical JSON, one event per line in seq order,
//! each line terminated by `\n`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::canonical::{canonical_value, sha256_hex};
use crate::clock::SimTime;
use crate::escrow::{ContractId, ContractState, Parcel};
use crate::ledger::{AccountId, TokenAmount};
use crate::oracle::OracleKind;

pub const GENESIS_ANCHOR: &str = "SFC-GENESIS";

pub fn genesis_hash() -> String {
    sha256_hex(GENESIS_ANCHOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line} is not in canonical form")]
    NonCanonical { line: usize },
    #[error("export must end with a newline")]
    MissingTrailingNewline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    IcoMinted,
    Buy,
    Transfer,
    ContractCreated,
    Invested,
    OracleQueried,
    Settled,
    SweepExecuted,
}

impl EventKind {
    pub const ALL: [EventKind; 8] = [
        EventKind::IcoMinted,
        EventKind::Buy,
        EventKind::Transfer,
        EventKind::ContractCreated,
        EventKind::Invested,
        EventKind::OracleQueried,
        EventKind::Settled,
        EventKind::SweepExecuted,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::IcoMinted => "IcoMinted",
            EventKind::Buy => "Buy",
            EventKind::Transfer => "Transfer",
            EventKind::ContractCreated => "ContractCreated",
            EventKind::Invested => "Invested",
            EventKind::OracleQueried => "OracleQueried",
            EventKind::Settled => "Settled",
            EventKind::SweepExecuted => "SweepExecuted",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

/// Kind-specific payload. Amounts are base units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", deny_unknown_fields)]
pub enum EventBody {
    IcoMinted {
        fund: AccountId,
        supply: TokenAmount,
        decimals: u8,
        at: SimTime,
    },
    Buy {
        fund: AccountId,
        investor: AccountId,
        amount: TokenAmount,
        at: SimTime,
    },
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: TokenAmount,
        at: SimTime,
    },
    ContractCreated {
        contract: ContractId,
        landowner: AccountId,
        escrow_account: AccountId,
        parcel: Parcel,
        maturity_at: SimTime,
        threshold: f64,
        at: SimTime,
    },
    Invested {
        contract: ContractId,
        investor: AccountId,
        escrow_account: AccountId,
        amount: TokenAmount,
        escrow_total: TokenAmount,
        at: SimTime,
    },
    OracleQueried {
        contract: ContractId,
        source: OracleKind,
        preserved_fraction: f64,
        verdict: bool,
        evidence_hash: String,
        at: SimTime,
    },
    Settled {
        contract: ContractId,
        outcome: ContractState,
        beneficiary: AccountId,
        escrow_account: AccountId,
        amount: TokenAmount,
        at: SimTime,
    },
    SweepExecuted {
        investor: AccountId,
        fund: AccountId,
        period: u64,
        balance_before: TokenAmount,
        amount: TokenAmount,
        at: SimTime,
    },
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::IcoMinted { .. } => EventKind::IcoMinted,
            EventBody::Buy { .. } => EventKind::Buy,
            EventBody::Transfer { .. } => EventKind::Transfer,
            EventBody::ContractCreated { .. } => EventKind::ContractCreated,
            EventBody::Invested { .. } => EventKind::Invested,
            EventBody::OracleQueried { .. } => EventKind::OracleQueried,
            EventBody::Settled { .. } => EventKind::Settled,
            EventBody::SweepExecuted { .. } => EventKind::SweepExecuted,
        }
    }

    pub fn at(&self) -> SimTime {
        match self {
            EventBody::IcoMinted { at, .. }
            | EventBody::Buy { at, .. }
            | EventBody::Transfer { at, .. }
            | EventBody::ContractCreated { at, .. }
            | EventBody::Invested { at, .. }
            | EventBody::OracleQueried { at, .. }
            | EventBody::Settled { at, .. }
            | EventBody::SweepExecuted { at, .. } => *at,
        }
    }

    /// Every account named in the payload.
    pub fn accounts(&self) -> Vec<&AccountId> {
        match self {
            EventBody::IcoMinted { fund, .. } => vec![fund],
            EventBody::Buy { fund, investor, .. } => vec![fund, investor],
            EventBody::Transfer { from, to, .. } => vec![from, to],
            EventBody::ContractCreated {
                landowner,
                escrow_account,
                ..
            } => vec![landowner, escrow_account],
            EventBody::Invested {
                investor,
                escrow_account,
                ..
            } => vec![investor, escrow_account],
            EventBody::OracleQueried { .. } => vec![],
            EventBody::Settled {
                beneficiary,
                escrow_account,
                ..
            } => vec![beneficiary, escrow_account],
            EventBody::SweepExecuted { investor, fund, .. } => vec![investor, fund],
        }
    }

    pub fn contract(&self) -> Option<&ContractId> {
        match self {
            EventBody::ContractCreated { contract, .. }
            | EventBody::Invested { contract, .. }
            | EventBody::OracleQueried { contract, .. }
            | EventBody::Settled { contract, .. } => Some(contract),
            _ => None,
        }
    }

    fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("event bodies are representable as JSON")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEvent {
    pub seq: u64,
    pub body: EventBody,
    pub prev_hash: String,
    pub hash: String,
}

impl AuditEvent {
    pub fn kind(&self) -> EventKind {
        self.body.kind()
    }

    /// Hash this event should carry given its fields and `prev_hash`.
    pub fn compute_hash(&self) -> String {
        compute_hash(&self.prev_hash, self.seq, &self.body)
    }

    pub fn to_value(&self) -> Value {
        let mut map = match self.body.to_value() {
            Value::Object(map) => map,
            _ => unreachable!("adjacently tagged enums serialize to objects"),
        };
        map.insert("seq".into(), json!(self.seq));
        map.insert("prev_hash".into(), json!(self.prev_hash));
        map.insert("hash".into(), json!(self.hash));
        Value::Object(map)
    }

    /// One canonical export line, without the trailing newline.
    pub fn to_line(&self) -> String {
        canonical_value(&self.to_value())
    }

    pub fn from_value(value: Value) -> Result<Self, String> {
        let Value::Object(mut map) = value else {
            return Err("event must be a JSON object".into());
        };
        let seq = take(&mut map, "seq")?
            .as_u64()
            .ok_or("`seq` must be a non-negative integer")?;
        let prev_hash = take_string(&mut map, "prev_hash")?;
        let hash = take_string(&mut map, "hash")?;
        let body: EventBody =
            serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
        Ok(AuditEvent {
            seq,
            body,
            prev_hash,
            hash,
        })
    }
}

fn take(map: &mut Map<String, Value>, key: &str) -> Result<Value, String> {
    map.remove(key).ok_or_else(|| format!("missing `{key}`"))
}

fn take_string(map: &mut Map<String, Value>, key: &str) -> Result<String, String> {
    match take(map, key)? {
        Value::String(s) => Ok(s),
        _ => Err(format!("`{key}` must be a string")),
    }
}

impl Serialize for AuditEvent {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

fn compute_hash(prev_hash: &str, seq: u64, body: &EventBody) -> String {
    let mut preimage = match body.to_value() {
        Value::Object(map) => map,
        _ => unreachable!("adjacently tagged enums serialize to objects"),
    };
    preimage.insert("seq".into(), json!(seq));
    let mut bytes = prev_hash.as_bytes().to_vec();
    bytes.extend_from_slice(canonical_value(&Value::Object(preimage)).as_bytes());
    sha256_hex(bytes)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Filter {
    Account(AccountId),
    Contract(ContractId),
    Kind(EventKind),
    /// Half-open `[from, to)` range of sequence numbers.
    SeqRange {
        from: u64,
        to: u64,
    },
}

impl Filter {
    pub fn matches(&self, event: &AuditEvent) -> bool {
        match self {
            Filter::Account(id) => event.body.accounts().contains(&id),
            Filter::Contract(id) => event.body.contract() == Some(id),
            Filter::Kind(kind) => event.kind() == *kind,
            Filter::SeqRange { from, to } => (*from..*to).contains(&event.seq),
        }
    }
}

/// Matching events in seq order.
pub fn query<'a>(events: &'a [AuditEvent], filter: &Filter) -> Vec<&'a AuditEvent> {
    events.iter().filter(|e| filter.matches(e)).collect()
}

/// True iff seqs run 0..n, every link points at its predecessor (or the
/// genesis anchor) and every hash recomputes.
pub fn verify_chain(events: &[AuditEvent]) -> bool {
    let mut prev = genesis_hash();
    for (i, event) in events.iter().enumerate() {
        if event.seq != i as u64 || event.prev_hash != prev || event.compute_hash() != event.hash {
            return false;
        }
        prev = event.hash.clone();
    }
    true
}

/// Parses an export. Every line must be byte-identical to the canonical
/// encoding of the event it decodes to.
pub fn parse_export(text: &str) -> Result<Vec<AuditEvent>, AuditError> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text
        .strip_suffix('\n')
        .ok_or(AuditError::MissingTrailingNewline)?;
    body.split('\n')
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 1;
            let value: Value = serde_json::from_str(line).map_err(|e| AuditError::Malformed {
                line: line_no,
                reason: e.to_string(),
            })?;
            let event = AuditEvent::from_value(value).map_err(|reason| AuditError::Malformed {
                line: line_no,
                reason,
            })?;
            if event.to_line() != line {
                return Err(AuditError::NonCanonical { line: line_no });
            }
            Ok(event)
        })
        .collect()
}

/// Validates an exported file byte-exactly.
pub fn verify_export(bytes: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(bytes) else {
        return false;
    };
    parse_export(text).is_ok_and(|events| verify_chain(&events))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditLog {
    events: Vec<AuditEvent>,
}

impl Default for AuditLog {
    fn default() -> Self {
        Self::new()
    }
}

impl AuditLog {
    pub fn new() -> Self {
        AuditLog { events: Vec::new() }
    }

    pub fn append(&mut self, body: EventBody) -> &AuditEvent {
        let seq = self.events.len() as u64;
        let prev_hash = self.head_hash();
        let hash = compute_hash(&prev_hash, seq, &body);
        self.events.push(AuditEvent {
            seq,
            body,
            prev_hash,
            hash,
        });
        self.events.last().expect("just pushed")
    }

    /// Hash of the last event, or the genesis anchor for an empty log.
    pub fn head_hash(&self) -> String {
        self.events
            .last()
            .map(|e| e.hash.clone())
            .unwrap_or_else(genesis_hash)
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn verify(&self) -> bool {
        verify_chain(&self.events)
    }

    pub fn query(&self, filter: &Filter) -> Vec<&AuditEvent> {
        query(&self.events, filter)
    }

    pub fn export(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_line());
            out.push('\n');
        }
        out
    }

    /// Rebuilds a log from an export, rejecting anything that fails verification.
    pub fn import(text: &str) -> Result<Self, AuditError> {
        let events = parse_export(text)?;
        if !verify_chain(&events) {
            return Err(AuditError::Malformed {
                line: 0,
                reason: "hash chain does not verify".into(),
            });
        }
        Ok(AuditLog { events })
    }
}
