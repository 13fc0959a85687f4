//! Integer-exact token accounting with ERC-20-like semantics.
//!
//! Amounts are unsigned base units. The display value of an amount is
//! `base_units / 10^decimals`, with `decimals` fixed when the ledger is
//! created. Every mutating operation validates fully before touching state,
//! so a failed call leaves the ledger exactly as it was.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_DECIMALS: u8 = 2;
pub const MAX_DECIMALS: u8 = 18;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("account id must not be empty")]
    EmptyAccountId,
    #[error("unknown account `{0}`")]
    UnknownAccount(AccountId),
    #[error("account `{0}` already exists")]
    DuplicateAccount(AccountId),
    #[error("a fund account already exists (`{0}`)")]
    FundAlreadyExists(AccountId),
    #[error("tokens were already minted")]
    AlreadyMinted,
    #[error("account `{0}` is not the fund account")]
    NotFundAccount(AccountId),
    #[error("ICO supply must be positive")]
    ZeroSupply,
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("account `{account}` holds {balance} base units, {requested} requested")]
    InsufficientBalance {
        account: AccountId,
        balance: TokenAmount,
        requested: TokenAmount,
    },
    #[error(
        "allowance of `{spender}` over `{owner}` is {allowance} base units, {requested} requested"
    )]
    InsufficientAllowance {
        owner: AccountId,
        spender: AccountId,
        allowance: TokenAmount,
        requested: TokenAmount,
    },
    #[error("cannot transfer from `{0}` to itself")]
    SelfTransfer(AccountId),
    #[error("account `{0}` is not an investor")]
    NotInvestor(AccountId),
    #[error("escrow account `{0}` can only be moved by its contract")]
    EscrowLocked(AccountId),
    #[error("no fund account has been opened")]
    NoFundAccount,
    #[error("token arithmetic overflow")]
    Overflow,
    #[error("decimals must be at most {MAX_DECIMALS}, got {0}")]
    InvalidDecimals(u8),
    #[error("invalid amount `{0}`")]
    MalformedAmount(String),
}

/// Opaque, non-empty account identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccountId(String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> Result<Self, LedgerError> {
        let id = id.into();
        if id.is_empty() {
            return Err(LedgerError::EmptyAccountId);
        }
        Ok(AccountId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AccountId {
    type Error = LedgerError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        AccountId::new(value)
    }
}

impl From<AccountId> for String {
    fn from(id: AccountId) -> String {
        id.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Fund,
    Investor,
    Landowner,
    Escrow,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Fund => "fund",
            Role::Investor => "investor",
            Role::Landowner => "landowner",
            Role::Escrow => "escrow",
        })
    }
}

/// Token quantity in base units.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TokenAmount(u64);

impl TokenAmount {
    pub const ZERO: TokenAmount = TokenAmount(0);

    pub const fn from_base_units(units: u64) -> Self {
        TokenAmount(units)
    }

    pub const fn base_units(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, rhs: TokenAmount) -> Result<TokenAmount, LedgerError> {
        self.0
            .checked_add(rhs.0)
            .map(TokenAmount)
            .ok_or(LedgerError::Overflow)
    }

    pub fn checked_sub(self, rhs: TokenAmount) -> Option<TokenAmount> {
        self.0.checked_sub(rhs.0).map(TokenAmount)
    }

    /// Parses a display value such as `"120.00"`, `"120"` or `"0.5"`.
    ///
    /// At most `decimals` fractional digits are accepted; the result is exact.
    pub fn parse_display(text: &str, decimals: u8) -> Result<TokenAmount, LedgerError> {
        let malformed = || LedgerError::MalformedAmount(text.to_string());
        let (whole, frac) = match text.split_once('.') {
            Some((w, f)) => (w, f),
            None => (text, ""),
        };
        let digits_only = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if whole.is_empty() || !digits_only(whole) || !digits_only(frac) {
            return Err(malformed());
        }
        if text.contains('.') && frac.is_empty() {
            return Err(malformed());
        }
        if frac.len() > decimals as usize {
            return Err(malformed());
        }
        let scale = 10u64
            .checked_pow(decimals as u32)
            .ok_or(LedgerError::Overflow)?;
        let whole: u64 = whole.parse().map_err(|_| malformed())?;
        let frac_units: u64 = if frac.is_empty() {
            0
        } else {
            let padded = format!("{frac:0<width$}", width = decimals as usize);
            padded.parse().map_err(|_| malformed())?
        };
        whole
            .checked_mul(scale)
            .and_then(|w| w.checked_add(frac_units))
            .map(TokenAmount)
            .ok_or(LedgerError::Overflow)
    }

    /// Formats with exactly `decimals` fractional digits.
    pub fn display(self, decimals: u8) -> DisplayAmount {
        DisplayAmount {
            amount: self,
            decimals,
        }
    }
}

impl fmt::Display for TokenAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub struct DisplayAmount {
    amount: TokenAmount,
    decimals: u8,
}

impl fmt::Display for DisplayAmount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.decimals == 0 {
            return write!(f, "{}", self.amount.0);
        }
        let scale = 10u128.pow(self.decimals as u32);
        let units = self.amount.0 as u128;
        write!(
            f,
            "{}.{:0width$}",
            units / scale,
            units % scale,
            width = self.decimals as usize
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub role: Role,
    pub balance: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    decimals: u8,
    accounts: BTreeMap<AccountId, Account>,
    allowances: BTreeMap<(AccountId, AccountId), TokenAmount>,
    total_supply: TokenAmount,
    minted: bool,
    fund: Option<AccountId>,
}

impl Ledger {
    pub fn new(decimals: u8) -> Result<Self, LedgerError> {
        if decimals > MAX_DECIMALS {
            return Err(LedgerError::InvalidDecimals(decimals));
        }
        Ok(Ledger {
            decimals,
            accounts: BTreeMap::new(),
            allowances: BTreeMap::new(),
            total_supply: TokenAmount::ZERO,
            minted: false,
            fund: None,
        })
    }

    pub fn decimals(&self) -> u8 {
        self.decimals
    }

    pub fn is_minted(&self) -> bool {
        self.minted
    }

    pub fn fund(&self) -> Option<&AccountId> {
        self.fund.as_ref()
    }

    pub fn open_account(&mut self, id: AccountId, role: Role) -> Result<(), LedgerError> {
        if self.accounts.contains_key(&id) {
            return Err(LedgerError::DuplicateAccount(id));
        }
        if role == Role::Fund {
            if let Some(existing) = &self.fund {
                return Err(LedgerError::FundAlreadyExists(existing.clone()));
            }
            self.fund = Some(id.clone());
        }
        self.accounts.insert(
            id,
            Account {
                role,
                balance: TokenAmount::ZERO,
            },
        );
        Ok(())
    }

    pub fn contains(&self, id: &AccountId) -> bool {
        self.accounts.contains_key(id)
    }

    pub fn role_of(&self, id: &AccountId) -> Result<Role, LedgerError> {
        self.account(id).map(|a| a.role)
    }

    pub fn balance_of(&self, id: &AccountId) -> Result<TokenAmount, LedgerError> {
        self.account(id).map(|a| a.balance)
    }

    pub fn total_supply(&self) -> TokenAmount {
        self.total_supply
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&AccountId, &Account)> {
        self.accounts.iter()
    }

    /// Sum of all balances, widened so it cannot overflow.
    pub fn sum_of_balances(&self) -> u128 {
        self.accounts.values().map(|a| a.balance.0 as u128).sum()
    }

    pub fn ico_mint(&mut self, supply: TokenAmount, fund: &AccountId) -> Result<(), LedgerError> {
        if self.minted {
            return Err(LedgerError::AlreadyMinted);
        }
        if self.role_of(fund)? != Role::Fund {
            return Err(LedgerError::NotFundAccount(fund.clone()));
        }
        if supply.is_zero() {
            return Err(LedgerError::ZeroSupply);
        }
        self.account_mut(fund)?.balance = supply;
        self.total_supply = supply;
        self.minted = true;
        Ok(())
    }

    /// Moves tokens between two non-escrow accounts.
    pub fn transfer(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: TokenAmount,
    ) -> Result<(), LedgerError> {
        self.check_free_transfer(from, to)?;
        self.move_tokens(from, to, amount)
    }

    /// Fund-to-investor purchase.
    pub fn buy(&mut self, investor: &AccountId, amount: TokenAmount) -> Result<(), LedgerError> {
        if self.role_of(investor)? != Role::Investor {
            return Err(LedgerError::NotInvestor(investor.clone()));
        }
        let fund = self.fund.clone().ok_or(LedgerError::NoFundAccount)?;
        self.transfer(&fund, investor, amount)
    }

    /// Sets the allowance of `spender` over `owner`'s balance (overwrite semantics).
    pub fn approve(
        &mut self,
        owner: &AccountId,
        spender: &AccountId,
        amount: TokenAmount,
    ) -> Result<(), LedgerError> {
        self.account(owner)?;
        self.account(spender)?;
        self.allowances
            .insert((owner.clone(), spender.clone()), amount);
        Ok(())
    }

    pub fn allowance(&self, owner: &AccountId, spender: &AccountId) -> TokenAmount {
        self.allowances
            .get(&(owner.clone(), spender.clone()))
            .copied()
            .unwrap_or_default()
    }

    /// Spends part of an allowance granted by `owner` to `spender`.
    pub fn transfer_from(
        &mut self,
        spender: &AccountId,
        owner: &AccountId,
        to: &AccountId,
        amount: TokenAmount,
    ) -> Result<(), LedgerError> {
        self.account(spender)?;
        self.check_free_transfer(owner, to)?;
        let allowance = self.allowance(owner, spender);
        let remaining =
            allowance
                .checked_sub(amount)
                .ok_or_else(|| LedgerError::InsufficientAllowance {
                    owner: owner.clone(),
                    spender: spender.clone(),
                    allowance,
                    requested: amount,
                })?;
        self.move_tokens(owner, to, amount)?;
        self.allowances
            .insert((owner.clone(), spender.clone()), remaining);
        Ok(())
    }

    fn check_free_transfer(&self, from: &AccountId, to: &AccountId) -> Result<(), LedgerError> {
        for id in [from, to] {
            if self.role_of(id)? == Role::Escrow {
                return Err(LedgerError::EscrowLocked(id.clone()));
            }
        }
        Ok(())
    }

    /// Role-agnostic movement used by escrow settlement and the sweep.
    pub(crate) fn move_tokens(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        amount: TokenAmount,
    ) -> Result<(), LedgerError> {
        if amount.is_zero() {
            return Err(LedgerError::InvalidAmount);
        }
        if from == to {
            return Err(LedgerError::SelfTransfer(from.clone()));
        }
        let from_balance = self.balance_of(from)?;
        let to_balance = self.balance_of(to)?;
        let debited =
            from_balance
                .checked_sub(amount)
                .ok_or_else(|| LedgerError::InsufficientBalance {
                    account: from.clone(),
                    balance: from_balance,
                    requested: amount,
                })?;
        let credited = to_balance.checked_add(amount)?;
        self.account_mut(from)?.balance = debited;
        self.account_mut(to)?.balance = credited;
        Ok(())
    }

    fn account(&self, id: &AccountId) -> Result<&Account, LedgerError> {
        self.accounts
            .get(id)
            .ok_or_else(|| LedgerError::UnknownAccount(id.clone()))
    }

    fn account_mut(&mut self, id: &AccountId) -> Result<&mut Account, LedgerError> {
        self.accounts
            .get_mut(id)
            .ok_or_else(|| LedgerError::UnknownAccount(id.clone()))
    }
}
