//! Annual donation sweep from investor wallets to the preservation fund.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::SimTime;
use crate::ledger::{AccountId, Ledger, LedgerError, Role, TokenAmount};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error("period {period} was already swept")]
    DuplicateSweep { period: u64 },
    #[error("{at} is not a sweep boundary")]
    NotOnPeriodBoundary { at: SimTime },
    #[error("no tokens have been minted yet")]
    NotMinted,
    #[error("sweep rate must lie strictly between 0 and 1 and the period must be positive")]
    InvalidPolicy,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Rate is the exact rational `rate_numerator / rate_denominator`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPolicy {
    rate_numerator: u64,
    rate_denominator: u64,
    period_days: u64,
}

impl Default for SweepPolicy {
    fn default() -> Self {
        SweepPolicy {
            rate_numerator: 5,
            rate_denominator: 100,
            period_days: 365,
        }
    }
}

impl SweepPolicy {
    pub fn new(
        rate_numerator: u64,
        rate_denominator: u64,
        period_days: u64,
    ) -> Result<Self, SweepError> {
        if rate_numerator == 0 || rate_numerator >= rate_denominator || period_days == 0 {
            return Err(SweepError::InvalidPolicy);
        }
        Ok(SweepPolicy {
            rate_numerator,
            rate_denominator,
            period_days,
        })
    }

    pub fn period_days(&self) -> u64 {
        self.period_days
    }

    /// Only investor wallets donate; fund, landowner and escrow balances are exempt.
    pub fn is_exempt(&self, role: Role) -> bool {
        role != Role::Investor
    }

    /// `floor(balance · rate)` in base units.
    pub fn amount_due(&self, balance: TokenAmount) -> TokenAmount {
        let due = balance.base_units() as u128 * self.rate_numerator as u128
            / self.rate_denominator as u128;
        // due <= balance because rate < 1
        TokenAmount::from_base_units(due as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub investor: AccountId,
    pub balance_before: TokenAmount,
    pub amount_swept: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep_time: SimTime,
    pub period: u64,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn total(&self) -> u128 {
        self.entries
            .iter()
            .map(|e| e.amount_swept.base_units() as u128)
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sweeper {
    policy: SweepPolicy,
    swept_periods: BTreeSet<u64>,
}

impl Sweeper {
    pub fn new(policy: SweepPolicy) -> Self {
        Sweeper {
            policy,
            swept_periods: BTreeSet::new(),
        }
    }

    pub fn policy(&self) -> &SweepPolicy {
        &self.policy
    }

    pub fn swept_periods(&self) -> impl Iterator<Item = u64> + '_ {
        self.swept_periods.iter().copied()
    }

    /// Sweeps every investor wallet for the period ending at `at`.
    ///
    /// Periods are anchored at `genesis`; `at` must be a positive multiple
    /// of the period length after it. Zero amounts are omitted from the report.
    pub fn run_annual_sweep(
        &mut self,
        ledger: &mut Ledger,
        genesis: SimTime,
        at: SimTime,
    ) -> Result<SweepReport, SweepError> {
        if !ledger.is_minted() {
            return Err(SweepError::NotMinted);
        }
        let elapsed = at
            .days()
            .checked_sub(genesis.days())
            .ok_or(SweepError::NotOnPeriodBoundary { at })?;
        if elapsed == 0 || elapsed % self.policy.period_days != 0 {
            return Err(SweepError::NotOnPeriodBoundary { at });
        }
        let period = elapsed / self.policy.period_days;
        if self.swept_periods.contains(&period) {
            return Err(SweepError::DuplicateSweep { period });
        }
        let fund = ledger.fund().cloned().ok_or(LedgerError::NoFundAccount)?;

        let entries: Vec<SweepEntry> = ledger
            .accounts()
            .filter(|(_, account)| !self.policy.is_exempt(account.role))
            .filter_map(|(id, account)| {
                let due = self.policy.amount_due(account.balance);
                (!due.is_zero()).then(|| SweepEntry {
                    investor: id.clone(),
                    balance_before: account.balance,
                    amount_swept: due,
                })
            })
            .collect();

        let report = SweepReport {
            sweep_time: at,
            period,
            entries,
        };
        let fund_after = ledger.balance_of(&fund)?.base_units() as u128 + report.total();
        if fund_after > u64::MAX as u128 {
            return Err(LedgerError::Overflow.into());
        }
        for entry in &report.entries {
            ledger.move_tokens(&entry.investor, &fund, entry.amount_swept)?;
        }
        self.swept_periods.insert(period);
        Ok(report)
    }
}
