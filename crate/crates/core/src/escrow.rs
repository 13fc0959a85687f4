//! Preservation escrow contracts.
//!
//! A contract binds a landowner to a parcel until maturity. Investors move
//! tokens into the contract's dedicated escrow account while it is open.
//! After maturity a single settle call consults the oracle and routes the
//! whole pot to the landowner (preserved) or back to the fund (not
//! preserved). Settled contracts are inactive and reject every mutation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimTime;
use crate::ledger::{AccountId, Ledger, LedgerError, Role, TokenAmount};
use crate::oracle::{Oracle, OracleError, OracleVerdict};

pub const DEFAULT_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EscrowError {
    #[error("account `{0}` is not a landowner")]
    NotLandowner(AccountId),
    #[error("maturity {maturity} is not after the current time {now}")]
    MaturityInPast { maturity: SimTime, now: SimTime },
    #[error("threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("unknown contract `{0}`")]
    UnknownContract(ContractId),
    #[error("contract `{0}` is not open")]
    ContractNotOpen(ContractId),
    #[error("contract `{contract}` matured at {maturity}; investments are closed")]
    PastMaturity {
        contract: ContractId,
        maturity: SimTime,
    },
    #[error("contract `{contract}` matures at {maturity}")]
    NotYetMature {
        contract: ContractId,
        maturity: SimTime,
    },
    #[error("oracle failure: {0}")]
    OracleFailure(#[from] OracleError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParcelError {
    #[error("latitude bounds must satisfy -90 <= lat_min < lat_max <= 90")]
    Latitude,
    #[error("longitude bounds must satisfy -180 <= lon_min < lon_max <= 180")]
    Longitude,
}

/// Axis-aligned lat/lon bounding box, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParcel")]
pub struct Parcel {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParcel {
    lat_min: f64,
    lat_max: f64,
    lon_min: f64,
    lon_max: f64,
}

impl TryFrom<RawParcel> for Parcel {
    type Error = ParcelError;

    fn try_from(raw: RawParcel) -> Result<Self, Self::Error> {
        Parcel::new(raw.lat_min, raw.lat_max, raw.lon_min, raw.lon_max)
    }
}

impl Parcel {
    pub fn new(
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
    ) -> Result<Self, ParcelError> {
        // NaN fails every comparison below.
        if !(lat_min >= -90.0 && lat_min < lat_max && lat_max <= 90.0) {
            return Err(ParcelError::Latitude);
        }
        if !(lon_min >= -180.0 && lon_min < lon_max && lon_max <= 180.0) {
            return Err(ParcelError::Longitude);
        }
        Ok(Parcel {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        })
    }

    pub fn lat_min(&self) -> f64 {
        self.lat_min
    }

    pub fn lat_max(&self) -> f64 {
        self.lat_max
    }

    pub fn lon_min(&self) -> f64 {
        self.lon_min
    }

    pub fn lon_max(&self) -> f64 {
        self.lon_max
    }

    /// Area of the box in degree² units.
    pub fn area(&self) -> f64 {
        (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)
    }

    /// Area of the intersection with another box, zero when disjoint or touching.
    pub fn overlap_area(&self, other: &Parcel) -> f64 {
        overlap_1d(self.lat_min, self.lat_max, other.lat_min, other.lat_max)
            * overlap_1d(self.lon_min, self.lon_max, other.lon_min, other.lon_max)
    }
}

pub(crate) fn overlap_1d(a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    (a_hi.min(b_hi) - a_lo.max(b_lo)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContractId(String);

impl ContractId {
    pub fn new(id: impl Into<String>) -> Self {
        ContractId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ContractId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractState {
    Open,
    SettledPaid,
    SettledReverted,
}

impl ContractState {
    pub fn is_open(self) -> bool {
        self == ContractState::Open
    }
}

impl fmt::Display for ContractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractState::Open => "Open",
            ContractState::SettledPaid => "Settled(Paid)",
            ContractState::SettledReverted => "Settled(Reverted)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub investor: AccountId,
    pub amount: TokenAmount,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscrowContract {
    pub id: ContractId,
    pub landowner: AccountId,
    pub escrow_account: AccountId,
    pub parcel: Parcel,
    pub created_at: SimTime,
    pub maturity_at: SimTime,
    pub threshold: f64,
    pub contributions: Vec<Contribution>,
    pub state: ContractState,
}

impl EscrowContract {
    pub fn contributed(&self) -> TokenAmount {
        TokenAmount::from_base_units(
            self.contributions
                .iter()
                .map(|c| c.amount.base_units())
                .sum(),
        )
    }
}

/// Confirmation handed back to an investor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvestReceipt {
    pub contract: ContractId,
    pub escrow_account: AccountId,
    pub escrow_total: TokenAmount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SettlementOutcome {
    pub contract_id: ContractId,
    pub verdict: OracleVerdict,
    pub beneficiary: AccountId,
    pub amount: TokenAmount,
    pub state: ContractState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractStatus {
    pub contract: EscrowContract,
    pub escrow_balance: TokenAmount,
}

/// Registry of every contract created by one engine.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Escrows {
    contracts: BTreeMap<ContractId, EscrowContract>,
    created: u64,
}

impl Escrows {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id the next successful `create_contract` will return.
    pub fn next_id(&self) -> ContractId {
        Self::nth_id(self.created + 1)
    }

    /// Id of the `n`-th contract created (1-based).
    pub fn nth_id(n: u64) -> ContractId {
        ContractId(format!("c{n}"))
    }

    pub fn escrow_account_for(id: &ContractId) -> AccountId {
        AccountId::new(format!("escrow:{id}")).expect("non-empty by construction")
    }

    pub fn get(&self, id: &ContractId) -> Result<&EscrowContract, EscrowError> {
        self.contracts
            .get(id)
            .ok_or_else(|| EscrowError::UnknownContract(id.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &EscrowContract> {
        self.contracts.values()
    }

    pub fn create_contract(
        &mut self,
        ledger: &mut Ledger,
        landowner: &AccountId,
        parcel: Parcel,
        maturity_at: SimTime,
        threshold: f64,
        now: SimTime,
    ) -> Result<ContractId, EscrowError> {
        if ledger.role_of(landowner)? != Role::Landowner {
            return Err(EscrowError::NotLandowner(landowner.clone()));
        }
        if maturity_at <= now {
            return Err(EscrowError::MaturityInPast {
                maturity: maturity_at,
                now,
            });
        }
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(EscrowError::InvalidThreshold(threshold));
        }
        let id = self.next_id();
        let escrow_account = Self::escrow_account_for(&id);
        ledger.open_account(escrow_account.clone(), Role::Escrow)?;
        self.contracts.insert(
            id.clone(),
            EscrowContract {
                id: id.clone(),
                landowner: landowner.clone(),
                escrow_account,
                parcel,
                created_at: now,
                maturity_at,
                threshold,
                contributions: Vec::new(),
                state: ContractState::Open,
            },
        );
        self.created += 1;
        Ok(id)
    }

    pub fn invest(
        &mut self,
        ledger: &mut Ledger,
        investor: &AccountId,
        contract_id: &ContractId,
        amount: TokenAmount,
        now: SimTime,
    ) -> Result<InvestReceipt, EscrowError> {
        let contract = self
            .contracts
            .get_mut(contract_id)
            .ok_or_else(|| EscrowError::UnknownContract(contract_id.clone()))?;
        if !contract.state.is_open() {
            return Err(EscrowError::ContractNotOpen(contract_id.clone()));
        }
        if now >= contract.maturity_at {
            return Err(EscrowError::PastMaturity {
                contract: contract_id.clone(),
                maturity: contract.maturity_at,
            });
        }
        if ledger.role_of(investor)? == Role::Escrow {
            return Err(LedgerError::EscrowLocked(investor.clone()).into());
        }
        ledger.move_tokens(investor, &contract.escrow_account, amount)?;
        contract.contributions.push(Contribution {
            investor: investor.clone(),
            amount,
            at: now,
        });
        Ok(InvestReceipt {
            contract: contract_id.clone(),
            escrow_account: contract.escrow_account.clone(),
            escrow_total: ledger.balance_of(&contract.escrow_account)?,
        })
    }

    /// Consults the oracle once and releases the pot to exactly one beneficiary.
    ///
    /// An oracle failure leaves the contract open so settlement can be retried.
    pub fn settle(
        &mut self,
        ledger: &mut Ledger,
        contract_id: &ContractId,
        oracle: &dyn Oracle,
        now: SimTime,
    ) -> Result<SettlementOutcome, EscrowError> {
        let contract = self
            .contracts
            .get_mut(contract_id)
            .ok_or_else(|| EscrowError::UnknownContract(contract_id.clone()))?;
        if !contract.state.is_open() {
            return Err(EscrowError::ContractNotOpen(contract_id.clone()));
        }
        if now < contract.maturity_at {
            return Err(EscrowError::NotYetMature {
                contract: contract_id.clone(),
                maturity: contract.maturity_at,
            });
        }
        let fund = ledger.fund().cloned().ok_or(LedgerError::NoFundAccount)?;
        let verdict = oracle.verdict(contract, now)?;
        let (beneficiary, state) = if verdict.verdict {
            (contract.landowner.clone(), ContractState::SettledPaid)
        } else {
            (fund, ContractState::SettledReverted)
        };
        let amount = ledger.balance_of(&contract.escrow_account)?;
        if !amount.is_zero() {
            ledger.move_tokens(&contract.escrow_account, &beneficiary, amount)?;
        }
        contract.state = state;
        Ok(SettlementOutcome {
            contract_id: contract_id.clone(),
            verdict,
            beneficiary,
            amount,
            state,
        })
    }

    pub fn contract_status(
        &self,
        ledger: &Ledger,
        contract_id: &ContractId,
    ) -> Result<ContractStatus, EscrowError> {
        let contract = self.get(contract_id)?;
        Ok(ContractStatus {
            escrow_balance: ledger.balance_of(&contract.escrow_account)?,
            contract: contract.clone(),
        })
    }
}
