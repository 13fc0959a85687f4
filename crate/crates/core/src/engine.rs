//! Composition root: one ledger, its escrow contracts, the sweep schedule
//! and the audit log, driven by a simulated clock.
//!
//! Every successful mutation appends to the audit log; settlement appends
//! an `OracleQueried` and a `Settled` event, and a sweep appends one
//! `SweepExecuted` per nonzero donation. Failed calls append nothing and
//! change nothing.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::auditlog::{AuditEvent, AuditLog, EventBody, Filter};
use crate::clock::SimTime;
use crate::escrow::{
    ContractId, ContractState, ContractStatus, EscrowError, Escrows, InvestReceipt, Parcel,
    SettlementOutcome,
};
use crate::ledger::{AccountId, Ledger, LedgerError, Role, TokenAmount};
use crate::oracle::Oracle;
use crate::sweep::{SweepError, SweepPolicy, SweepReport, Sweeper};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Escrow(#[from] EscrowError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("escrow accounts are created by contracts, not opened directly")]
    ReservedRole,
}

/// Engine state. `Clone` gives a consistent read-only snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    ledger: Ledger,
    escrows: Escrows,
    sweeper: Sweeper,
    log: AuditLog,
    clock: SimTime,
    genesis: Option<SimTime>,
}

impl Engine {
    pub fn new(decimals: u8) -> Result<Self, EngineError> {
        Self::with_policy(decimals, SweepPolicy::default())
    }

    pub fn with_policy(decimals: u8, policy: SweepPolicy) -> Result<Self, EngineError> {
        Ok(Engine {
            ledger: Ledger::new(decimals)?,
            escrows: Escrows::new(),
            sweeper: Sweeper::new(policy),
            log: AuditLog::new(),
            clock: SimTime::GENESIS,
            genesis: None,
        })
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Day of the ICO, once it happened.
    pub fn genesis(&self) -> Option<SimTime> {
        self.genesis
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn escrows(&self) -> &Escrows {
        &self.escrows
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn decimals(&self) -> u8 {
        self.ledger.decimals()
    }

    pub fn advance_clock(&mut self, days: u64) -> SimTime {
        self.clock = self.clock.plus_days(days);
        self.clock
    }

    pub fn open_account(&mut self, id: AccountId, role: Role) -> Result<(), EngineError> {
        if role == Role::Escrow {
            return Err(EngineError::ReservedRole);
        }
        Ok(self.ledger.open_account(id, role)?)
    }

    pub fn ico_mint(&mut self, supply: TokenAmount, fund: &AccountId) -> Result<(), EngineError> {
        self.ledger.ico_mint(supply, fund)?;
        self.genesis = Some(self.clock);
        self.log.append(EventBody::IcoMinted {
            fund: fund.clone(),
            supply,
            decimals: self.ledger.decimals(),
            at: self.clock,
        });
        Ok(())
    }

    pub fn transfer(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: TokenAmount,
    ) -> Result<(), EngineError> {
        self.ledger.transfer(from, to, amount)?;
        self.log.append(EventBody::Transfer {
            from: from.clone(),
            to: to.clone(),
            amount,
            at: self.clock,
        });
        Ok(())
    }

    pub fn buy(&mut self, investor: &AccountId, amount: TokenAmount) -> Result<(), EngineError> {
        self.ledger.buy(investor, amount)?;
        let fund = self
            .ledger
            .fund()
            .cloned()
            .expect("buy succeeded, so a fund exists");
        self.log.append(EventBody::Buy {
            fund,
            investor: investor.clone(),
            amount,
            at: self.clock,
        });
        Ok(())
    }

    pub fn create_contract(
        &mut self,
        landowner: &AccountId,
        parcel: Parcel,
        maturity_at: SimTime,
        threshold: f64,
    ) -> Result<ContractId, EngineError> {
        let id = self.escrows.create_contract(
            &mut self.ledger,
            landowner,
            parcel,
            maturity_at,
            threshold,
            self.clock,
        )?;
        self.log.append(EventBody::ContractCreated {
            contract: id.clone(),
            landowner: landowner.clone(),
            escrow_account: Escrows::escrow_account_for(&id),
            parcel,
            maturity_at,
            threshold,
            at: self.clock,
        });
        Ok(id)
    }

    pub fn invest(
        &mut self,
        investor: &AccountId,
        contract: &ContractId,
        amount: TokenAmount,
    ) -> Result<InvestReceipt, EngineError> {
        let receipt =
            self.escrows
                .invest(&mut self.ledger, investor, contract, amount, self.clock)?;
        self.log.append(EventBody::Invested {
            contract: contract.clone(),
            investor: investor.clone(),
            escrow_account: receipt.escrow_account.clone(),
            amount,
            escrow_total: receipt.escrow_total,
            at: self.clock,
        });
        Ok(receipt)
    }

    pub fn settle(
        &mut self,
        contract: &ContractId,
        oracle: &dyn Oracle,
    ) -> Result<SettlementOutcome, EngineError> {
        let outcome = self
            .escrows
            .settle(&mut self.ledger, contract, oracle, self.clock)?;
        let verdict = &outcome.verdict;
        self.log.append(EventBody::OracleQueried {
            contract: contract.clone(),
            source: verdict.source,
            preserved_fraction: verdict.preserved_fraction,
            verdict: verdict.verdict,
            evidence_hash: verdict.evidence_hash.clone(),
            at: self.clock,
        });
        self.log.append(EventBody::Settled {
            contract: contract.clone(),
            outcome: outcome.state,
            beneficiary: outcome.beneficiary.clone(),
            escrow_account: Escrows::escrow_account_for(contract),
            amount: outcome.amount,
            at: self.clock,
        });
        Ok(outcome)
    }

    /// Runs the donation sweep for the period ending now.
    pub fn run_annual_sweep(&mut self) -> Result<SweepReport, EngineError> {
        let genesis = self.genesis.ok_or(SweepError::NotMinted)?;
        let report = self
            .sweeper
            .run_annual_sweep(&mut self.ledger, genesis, self.clock)?;
        let fund = self
            .ledger
            .fund()
            .cloned()
            .expect("minted ledgers have a fund");
        for entry in &report.entries {
            self.log.append(EventBody::SweepExecuted {
                investor: entry.investor.clone(),
                fund: fund.clone(),
                period: report.period,
                balance_before: entry.balance_before,
                amount: entry.amount_swept,
                at: self.clock,
            });
        }
        Ok(report)
    }

    pub fn balance_of(&self, id: &AccountId) -> Result<TokenAmount, EngineError> {
        Ok(self.ledger.balance_of(id)?)
    }

    pub fn total_supply(&self) -> TokenAmount {
        self.ledger.total_supply()
    }

    pub fn contract_status(&self, id: &ContractId) -> Result<ContractStatus, EngineError> {
        Ok(self.escrows.contract_status(&self.ledger, id)?)
    }

    pub fn query(&self, filter: &Filter) -> Vec<&AuditEvent> {
        self.log.query(filter)
    }

    pub fn head_hash(&self) -> String {
        self.log.head_hash()
    }

    pub fn export_log(&self) -> String {
        self.log.export()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {seq}: {reason}")]
    Inconsistent { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayedContract {
    pub landowner: AccountId,
    pub state: ContractState,
}

/// State reconstructed purely from an audit log.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogReplay {
    pub decimals: u8,
    pub total_supply: TokenAmount,
    pub balances: BTreeMap<AccountId, TokenAmount>,
    pub contracts: BTreeMap<ContractId, ReplayedContract>,
    pub last_at: SimTime,
    pub events: usize,
}

impl LogReplay {
    pub fn sum_of_balances(&self) -> u128 {
        self.balances.values().map(|b| b.base_units() as u128).sum()
    }
}

/// Replays balance movements and contract lifecycles from events.
pub fn replay_log(events: &[AuditEvent]) -> Result<LogReplay, ReplayError> {
    let mut state = LogReplay {
        decimals: crate::ledger::DEFAULT_DECIMALS,
        ..LogReplay::default()
    };
    for event in events {
        let seq = event.seq;
        let fail = |reason: String| ReplayError::Inconsistent { seq, reason };
        let mut moved = |from: &AccountId, to: &AccountId, amount: TokenAmount| {
            let balance = state.balances.get(from).copied().unwrap_or_default();
            let debited = balance
                .checked_sub(amount)
                .ok_or_else(|| fail(format!("`{from}` would go negative")))?;
            state.balances.insert(from.clone(), debited);
            let credited = state
                .balances
                .get(to)
                .copied()
                .unwrap_or_default()
                .checked_add(amount)
                .map_err(|e| fail(e.to_string()))?;
            state.balances.insert(to.clone(), credited);
            Ok::<(), ReplayError>(())
        };
        match &event.body {
            EventBody::IcoMinted {
                fund,
                supply,
                decimals,
                ..
            } => {
                let decimals = *decimals;
                state.balances.insert(fund.clone(), *supply);
                state.total_supply = *supply;
                state.decimals = decimals;
            }
            EventBody::Buy {
                fund,
                investor,
                amount,
                ..
            } => moved(fund, investor, *amount)?,
            EventBody::Transfer {
                from, to, amount, ..
            } => moved(from, to, *amount)?,
            EventBody::Invested {
                investor,
                escrow_account,
                amount,
                ..
            } => moved(investor, escrow_account, *amount)?,
            EventBody::Settled {
                escrow_account,
                beneficiary,
                amount,
                ..
            } if !amount.is_zero() => moved(escrow_account, beneficiary, *amount)?,
            EventBody::SweepExecuted {
                investor,
                fund,
                amount,
                ..
            } => moved(investor, fund, *amount)?,
            _ => {}
        }
        match &event.body {
            EventBody::ContractCreated {
                contract,
                landowner,
                escrow_account,
                ..
            } => {
                state.balances.entry(escrow_account.clone()).or_default();
                state.contracts.insert(
                    contract.clone(),
                    ReplayedContract {
                        landowner: landowner.clone(),
                        state: ContractState::Open,
                    },
                );
            }
            EventBody::Settled {
                contract, outcome, ..
            } => {
                let entry =
                    state
                        .contracts
                        .get_mut(contract)
                        .ok_or_else(|| ReplayError::Inconsistent {
                            seq,
                            reason: format!("settles unknown contract `{contract}`"),
                        })?;
                entry.state = *outcome;
            }
            _ => {}
        }
        state.last_at = event.body.at();
        state.events += 1;
    }
    Ok(state)
}
