//! Off-chain protocol engine for the Standing Forest Coin (SFC).
//!
//! The crate models the full token flow of a forest-preservation currency:
//! a mint-once ICO into a genesis fund wallet, investor purchases,
//! preservation escrow contracts settled by an oracle at maturity, the
//! annual 5% donation sweep, and a hash-chained audit log that can be
//! exported, verified and queried like a block explorer.
//!
//! Everything is deterministic. Token amounts are exact integers in base
//! units; simulated time is counted in whole days since genesis.

pub mod auditlog;
pub mod canonical;
pub mod clock;
pub mod engine;
pub mod escrow;
pub mod ledger;
pub mod oracle;
pub mod scenario;
pub mod sweep;

pub use auditlog::{AuditEvent, AuditLog, EventBody, EventKind, Filter};
pub use clock::SimTime;
pub use engine::{Engine, EngineError};
pub use escrow::{ContractId, ContractState, EscrowContract, Parcel, SettlementOutcome};
pub use ledger::{AccountId, Ledger, LedgerError, Role, TokenAmount};
pub use oracle::{LandCoverGrid, OracleHandle, OracleVerdict};
pub use sweep::{SweepPolicy, SweepReport};
