//! JSON scenario files: declare accounts and an ICO, replay an ordered list
//! of protocol steps against a fresh engine, and check optional expectations.
//!
//! ```json
//! {
//!   "decimals": 2,
//!   "ico": { "supply": "4000.00", "fund": "fund" },
//!   "accounts": [ { "id": "fund", "role": "fund" }, { "id": "alice", "role": "investor" } ],
//!   "steps": [ { "op": "buy", "investor": "alice", "amount": "120.00" } ],
//!   "expectations": { "balances": { "alice": "120.00" } }
//! }
//! ```
//!
//! Amounts are display strings with at most `decimals` fractional digits.
//! Contracts are numbered `c1`, `c2`, … in creation order; the escrow
//! account of contract `cN` is `escrow:cN`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::clock::SimTime;
use crate::engine::{Engine, EngineError};
use crate::escrow::{ContractId, ContractState, Escrows, Parcel, DEFAULT_THRESHOLD};
use crate::ledger::{AccountId, Role, TokenAmount, DEFAULT_DECIMALS, MAX_DECIMALS};
use crate::oracle::{GeoRasterOracle, LandCoverGrid, OracleHandle, ScriptedOracle};
use crate::sweep::SweepReport;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_decimals")]
    pub decimals: u8,
    pub ico: IcoSpec,
    pub accounts: Vec<AccountSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub expectations: Option<Expectations>,
}

fn default_decimals() -> u8 {
    DEFAULT_DECIMALS
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IcoSpec {
    pub supply: String,
    pub fund: AccountId,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountSpec {
    pub id: AccountId,
    pub role: Role,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    AdvanceDays {
        days: u64,
    },
    Buy {
        investor: AccountId,
        amount: String,
    },
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: String,
    },
    CreateContract {
        landowner: AccountId,
        parcel: Parcel,
        maturity_at: u64,
        #[serde(default)]
        threshold: Option<f64>,
    },
    Invest {
        investor: AccountId,
        contract: ContractId,
        amount: String,
    },
    Sweep,
    Settle {
        contract: ContractId,
        oracle: OracleSpec,
    },
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::AdvanceDays { .. } => "advance_days",
            Step::Buy { .. } => "buy",
            Step::Transfer { .. } => "transfer",
            Step::CreateContract { .. } => "create_contract",
            Step::Invest { .. } => "invest",
            Step::Sweep => "sweep",
            Step::Settle { .. } => "settle",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Scripted {
        verdicts: BTreeMap<ContractId, bool>,
    },
    GeoRaster {
        t0: GridSource,
        t1: GridSource,
    },
}

/// A grid given inline or as a path relative to the scenario file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSource {
    Path(String),
    Inline(LandCoverGrid),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectations {
    #[serde(default)]
    pub balances: BTreeMap<AccountId, String>,
    #[serde(default)]
    pub contracts: BTreeMap<ContractId, ContractState>,
}

/// A scenario with amounts parsed, references checked and grids loaded.
#[derive(Debug, Clone)]
pub struct Plan {
    pub decimals: u8,
    pub supply: TokenAmount,
    pub fund: AccountId,
    pub accounts: Vec<(AccountId, Role)>,
    pub steps: Vec<PlannedStep>,
    pub expected_balances: BTreeMap<AccountId, TokenAmount>,
    pub expected_contracts: BTreeMap<ContractId, ContractState>,
}

#[derive(Debug, Clone)]
pub enum PlannedStep {
    AdvanceDays(u64),
    Buy {
        investor: AccountId,
        amount: TokenAmount,
    },
    Transfer {
        from: AccountId,
        to: AccountId,
        amount: TokenAmount,
    },
    CreateContract {
        landowner: AccountId,
        parcel: Parcel,
        maturity_at: SimTime,
        threshold: f64,
    },
    Invest {
        investor: AccountId,
        contract: ContractId,
        amount: TokenAmount,
    },
    Sweep,
    Settle {
        contract: ContractId,
        oracle: OracleHandle,
    },
}

impl PlannedStep {
    pub fn name(&self) -> &'static str {
        match self {
            PlannedStep::AdvanceDays(_) => "advance_days",
            PlannedStep::Buy { .. } => "buy",
            PlannedStep::Transfer { .. } => "transfer",
            PlannedStep::CreateContract { .. } => "create_contract",
            PlannedStep::Invest { .. } => "invest",
            PlannedStep::Sweep => "sweep",
            PlannedStep::Settle { .. } => "settle",
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Checks references and converts amounts. Grid paths resolve against `base_dir`.
    pub fn validate(&self, base_dir: &Path) -> Result<Plan, ScenarioError> {
        let invalid = |msg: String| ScenarioError::Validation(msg);
        if self.decimals > MAX_DECIMALS {
            return Err(invalid(format!("decimals must be at most {MAX_DECIMALS}")));
        }
        let amount = |text: &str, what: &str| {
            TokenAmount::parse_display(text, self.decimals)
                .map_err(|e| invalid(format!("{what}: {e}")))
        };

        let mut roles: BTreeMap<AccountId, Role> = BTreeMap::new();
        for spec in &self.accounts {
            if spec.role == Role::Escrow {
                return Err(invalid(format!(
                    "account `{}`: escrow accounts are created by contracts",
                    spec.id
                )));
            }
            if roles.insert(spec.id.clone(), spec.role).is_some() {
                return Err(invalid(format!("account `{}` declared twice", spec.id)));
            }
        }
        let funds = roles.values().filter(|r| **r == Role::Fund).count();
        if funds != 1 {
            return Err(invalid(format!(
                "exactly one fund account required, found {funds}"
            )));
        }
        if roles.get(&self.ico.fund) != Some(&Role::Fund) {
            return Err(invalid(format!(
                "ICO target `{}` is not the fund account",
                self.ico.fund
            )));
        }
        let supply = amount(&self.ico.supply, "ico.supply")?;
        if supply.is_zero() {
            return Err(invalid("ico.supply must be positive".into()));
        }

        let declared = |id: &AccountId, at: usize| {
            if roles.contains_key(id) {
                Ok(())
            } else {
                Err(invalid(format!("step {at}: undeclared account `{id}`")))
            }
        };
        let mut contracts: BTreeSet<ContractId> = BTreeSet::new();
        let mut steps = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            let known_contract = |c: &ContractId| {
                if contracts.contains(c) {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "step {i}: contract `{c}` is not created by an earlier step"
                    )))
                }
            };
            let planned = match step {
                Step::AdvanceDays { days } => PlannedStep::AdvanceDays(*days),
                Step::Buy {
                    investor,
                    amount: a,
                } => {
                    declared(investor, i)?;
                    PlannedStep::Buy {
                        investor: investor.clone(),
                        amount: amount(a, &format!("step {i}"))?,
                    }
                }
                Step::Transfer {
                    from,
                    to,
                    amount: a,
                } => {
                    declared(from, i)?;
                    declared(to, i)?;
                    PlannedStep::Transfer {
                        from: from.clone(),
                        to: to.clone(),
                        amount: amount(a, &format!("step {i}"))?,
                    }
                }
                Step::CreateContract {
                    landowner,
                    parcel,
                    maturity_at,
                    threshold,
                } => {
                    declared(landowner, i)?;
                    contracts.insert(Escrows::nth_id(contracts.len() as u64 + 1));
                    PlannedStep::CreateContract {
                        landowner: landowner.clone(),
                        parcel: *parcel,
                        maturity_at: SimTime(*maturity_at),
                        threshold: threshold.unwrap_or(DEFAULT_THRESHOLD),
                    }
                }
                Step::Invest {
                    investor,
                    contract,
                    amount: a,
                } => {
                    declared(investor, i)?;
                    known_contract(contract)?;
                    PlannedStep::Invest {
                        investor: investor.clone(),
                        contract: contract.clone(),
                        amount: amount(a, &format!("step {i}"))?,
                    }
                }
                Step::Sweep => PlannedStep::Sweep,
                Step::Settle { contract, oracle } => {
                    known_contract(contract)?;
                    PlannedStep::Settle {
                        contract: contract.clone(),
                        oracle: resolve_oracle(oracle, base_dir)
                            .map_err(|e| invalid(format!("step {i}: {e}")))?,
                    }
                }
            };
            steps.push(planned);
        }

        let mut expected_balances = BTreeMap::new();
        let mut expected_contracts = BTreeMap::new();
        if let Some(exp) = &self.expectations {
            for (id, text) in &exp.balances {
                let is_escrow = contracts
                    .iter()
                    .any(|c| &Escrows::escrow_account_for(c) == id);
                if !roles.contains_key(id) && !is_escrow {
                    return Err(invalid(format!("expectation for unknown account `{id}`")));
                }
                expected_balances.insert(id.clone(), amount(text, &format!("expectation `{id}`"))?);
            }
            for (id, state) in &exp.contracts {
                if !contracts.contains(id) {
                    return Err(invalid(format!("expectation for unknown contract `{id}`")));
                }
                expected_contracts.insert(id.clone(), *state);
            }
        }

        Ok(Plan {
            decimals: self.decimals,
            supply,
            fund: self.ico.fund.clone(),
            accounts: self
                .accounts
                .iter()
                .map(|a| (a.id.clone(), a.role))
                .collect(),
            steps,
            expected_balances,
            expected_contracts,
        })
    }
}

fn resolve_oracle(spec: &OracleSpec, base_dir: &Path) -> Result<OracleHandle, String> {
    match spec {
        OracleSpec::Scripted { verdicts } => Ok(OracleHandle::Scripted(ScriptedOracle::new(
            verdicts.iter().map(|(c, v)| (c.clone(), *v)),
        ))),
        OracleSpec::GeoRaster { t0, t1 } => {
            let load = |src: &GridSource| match src {
                GridSource::Inline(grid) => Ok(grid.clone()),
                GridSource::Path(p) => {
                    LandCoverGrid::load(&base_dir.join(p)).map_err(|e| e.to_string())
                }
            };
            GeoRasterOracle::new(load(t0)?, load(t1)?)
                .map(OracleHandle::GeoRaster)
                .map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepFailure {
    pub index: usize,
    pub op: &'static str,
    pub error: EngineError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractSummary {
    pub id: ContractId,
    pub landowner: AccountId,
    pub state: ContractState,
    pub escrow_balance: TokenAmount,
    pub contributed: TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationResult {
    pub subject: String,
    pub expected: String,
    pub actual: String,
}

impl ExpectationResult {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub decimals: u8,
    pub clock: SimTime,
    pub total_supply: TokenAmount,
    pub balances: Vec<(AccountId, Role, TokenAmount)>,
    pub contracts: Vec<ContractSummary>,
    pub sweeps: Vec<SweepReport>,
    pub head_hash: String,
    pub events: usize,
    pub steps_completed: usize,
    pub failure: Option<StepFailure>,
    pub expectations: Vec<ExpectationResult>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.expectations.iter().all(ExpectationResult::passed)
    }

    pub fn balance(&self, id: &str) -> Option<TokenAmount> {
        self.balances
            .iter()
            .find(|(a, _, _)| a.as_str() == id)
            .map(|(_, _, b)| *b)
    }

    pub fn contract(&self, id: &str) -> Option<&ContractSummary> {
        self.contracts.iter().find(|c| c.id.as_str() == id)
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.decimals;
        writeln!(f, "clock: {}", self.clock)?;
        writeln!(f, "total supply: {}", self.total_supply.display(d))?;
        writeln!(f, "balances:")?;
        for (id, role, balance) in &self.balances {
            writeln!(
                f,
                "  {id:<20} {role:<10} {:>16}",
                balance.display(d).to_string()
            )?;
        }
        if !self.contracts.is_empty() {
            writeln!(f, "contracts:")?;
            for c in &self.contracts {
                writeln!(
                    f,
                    "  {:<8} landowner={} state={} escrow={} contributed={}",
                    c.id,
                    c.landowner,
                    c.state,
                    c.escrow_balance.display(d),
                    c.contributed.display(d)
                )?;
            }
        }
        for sweep in &self.sweeps {
            writeln!(
                f,
                "sweep at {} (period {}):",
                sweep.sweep_time, sweep.period
            )?;
            for e in &sweep.entries {
                writeln!(
                    f,
                    "  {} {} -> swept {}",
                    e.investor,
                    e.balance_before.display(d),
                    e.amount_swept.display(d)
                )?;
            }
        }
        writeln!(f, "events: {}", self.events)?;
        writeln!(f, "head hash: {}", self.head_hash)?;
        if let Some(fail) = &self.failure {
            writeln!(
                f,
                "FAILED at step {} ({}): {}",
                fail.index, fail.op, fail.error
            )?;
        }
        for e in &self.expectations {
            let mark = if e.passed() { "PASS" } else { "FAIL" };
            writeln!(
                f,
                "[{mark}] {} expected {} got {}",
                e.subject, e.expected, e.actual
            )?;
        }
        write!(f, "result: {}", if self.passed() { "pass" } else { "fail" })
    }
}

/// Result of executing a plan: the final engine and its report.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub engine: Engine,
    pub report: RunReport,
}

/// Loads, validates and executes a scenario file.
pub fn run_scenario(path: &Path) -> Result<ScenarioRun, ScenarioError> {
    let scenario = Scenario::load(path)?;
    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    let plan = scenario.validate(base_dir)?;
    Ok(run_plan(&plan))
}

/// Executes a validated plan on a fresh engine. Execution halts at the first failing step.
pub fn run_plan(plan: &Plan) -> ScenarioRun {
    let mut engine = Engine::new(plan.decimals).expect("validated decimals");
    for (id, role) in &plan.accounts {
        engine
            .open_account(id.clone(), *role)
            .expect("validated accounts are unique and non-escrow");
    }
    engine
        .ico_mint(plan.supply, &plan.fund)
        .expect("validated ICO cannot fail on a fresh engine");

    let mut sweeps = Vec::new();
    let mut failure = None;
    let mut steps_completed = 0;
    for (index, step) in plan.steps.iter().enumerate() {
        let result = match step {
            PlannedStep::AdvanceDays(days) => {
                engine.advance_clock(*days);
                Ok(())
            }
            PlannedStep::Buy { investor, amount } => engine.buy(investor, *amount),
            PlannedStep::Transfer { from, to, amount } => engine.transfer(from, to, *amount),
            PlannedStep::CreateContract {
                landowner,
                parcel,
                maturity_at,
                threshold,
            } => engine
                .create_contract(landowner, *parcel, *maturity_at, *threshold)
                .map(|_| ()),
            PlannedStep::Invest {
                investor,
                contract,
                amount,
            } => engine.invest(investor, contract, *amount).map(|_| ()),
            PlannedStep::Sweep => engine.run_annual_sweep().map(|r| sweeps.push(r)),
            PlannedStep::Settle { contract, oracle } => engine.settle(contract, oracle).map(|_| ()),
        };
        if let Err(error) = result {
            failure = Some(StepFailure {
                index,
                op: step.name(),
                error,
            });
            break;
        }
        steps_completed += 1;
    }

    let report = build_report(&engine, plan, sweeps, steps_completed, failure);
    ScenarioRun { engine, report }
}

fn build_report(
    engine: &Engine,
    plan: &Plan,
    sweeps: Vec<SweepReport>,
    steps_completed: usize,
    failure: Option<StepFailure>,
) -> RunReport {
    let d = engine.decimals();
    let ledger = engine.ledger();
    let balances: Vec<(AccountId, Role, TokenAmount)> = ledger
        .accounts()
        .map(|(id, a)| (id.clone(), a.role, a.balance))
        .collect();
    let contracts: Vec<ContractSummary> = engine
        .escrows()
        .iter()
        .map(|c| ContractSummary {
            id: c.id.clone(),
            landowner: c.landowner.clone(),
            state: c.state,
            escrow_balance: ledger.balance_of(&c.escrow_account).unwrap_or_default(),
            contributed: c.contributed(),
        })
        .collect();

    let mut expectations = Vec::new();
    for (id, expected) in &plan.expected_balances {
        let actual = ledger
            .balance_of(id)
            .map(|b| b.display(d).to_string())
            .unwrap_or_else(|_| "<missing>".into());
        expectations.push(ExpectationResult {
            subject: format!("balance {id}"),
            expected: expected.display(d).to_string(),
            actual,
        });
    }
    for (id, expected) in &plan.expected_contracts {
        let actual = engine
            .escrows()
            .get(id)
            .map(|c| c.state.to_string())
            .unwrap_or_else(|_| "<missing>".into());
        expectations.push(ExpectationResult {
            subject: format!("contract {id}"),
            expected: expected.to_string(),
            actual,
        });
    }

    RunReport {
        decimals: d,
        clock: engine.now(),
        total_supply: engine.total_supply(),
        balances,
        contracts,
        sweeps,
        head_hash: engine.head_hash(),
        events: engine.log().len(),
        steps_completed,
        failure,
        expectations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "ico": {"supply": "4000.00", "fund": "fund"},
        "accounts": [
            {"id": "fund", "role": "fund"},
            {"id": "alice", "role": "investor"},
            {"id": "land1", "role": "landowner"}
        ],
        "steps": STEPS
    }"#;

    fn with_steps(steps: &str) -> Scenario {
        Scenario::parse(&BASE.replace("STEPS", steps)).unwrap()
    }

    fn validate(s: &Scenario) -> Result<Plan, ScenarioError> {
        s.validate(Path::new("."))
    }

    #[test]
    fn empty_steps_report_post_ico_state() {
        let plan = validate(&with_steps("[]")).unwrap();
        let run = run_plan(&plan);
        assert!(run.report.passed());
        assert_eq!(
            run.report.balance("fund"),
            Some(TokenAmount::from_base_units(400_000))
        );
        assert_eq!(run.report.events, 1);
        assert_eq!(run.report.clock, SimTime(0));
    }

    #[test]
    fn validation_errors() {
        let cases = [
            r#"[{"op":"buy","investor":"ghost","amount":"1.00"}]"#,
            r#"[{"op":"invest","investor":"alice","contract":"c1","amount":"1.00"}]"#,
            r#"[{"op":"buy","investor":"alice","amount":"1.001"}]"#,
            r#"[{"op":"settle","contract":"c1","oracle":{"kind":"scripted","verdicts":{}}}]"#,
        ];
        for steps in cases {
            assert!(
                matches!(
                    validate(&with_steps(steps)),
                    Err(ScenarioError::Validation(_))
                ),
                "{steps}"
            );
        }
        let two_funds = BASE
            .replace("STEPS", "[]")
            .replace(r#""role": "investor""#, r#""role": "fund""#);
        assert!(matches!(
            validate(&Scenario::parse(&two_funds).unwrap()),
            Err(ScenarioError::Validation(_))
        ));
        let zero = BASE.replace("STEPS", "[]").replace("4000.00", "0");
        assert!(matches!(
            validate(&Scenario::parse(&zero).unwrap()),
            Err(ScenarioError::Validation(_))
        ));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Scenario::parse("{"), Err(ScenarioError::Parse(_))));
        assert!(matches!(
            Scenario::parse(&BASE.replace("STEPS", r#"[{"op":"mint"}]"#)),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn contract_ids_follow_creation_order() {
        let s = with_steps(
            r#"[
            {"op":"create_contract","landowner":"land1","parcel":{"lat_min":0,"lat_max":1,"lon_min":0,"lon_max":1},"maturity_at":10},
            {"op":"create_contract","landowner":"land1","parcel":{"lat_min":0,"lat_max":1,"lon_min":0,"lon_max":1},"maturity_at":10},
            {"op":"buy","investor":"alice","amount":"5"},
            {"op":"invest","investor":"alice","contract":"c2","amount":"5"}
        ]"#,
        );
        let run = run_plan(&validate(&s).unwrap());
        assert!(run.report.passed(), "{}", run.report);
        assert_eq!(
            run.report
                .contract("c2")
                .unwrap()
                .escrow_balance
                .base_units(),
            500
        );
        assert_eq!(
            run.report.contract("c1").unwrap().state,
            ContractState::Open
        );
    }

    #[test]
    fn halting_keeps_log_up_to_last_success() {
        let s = with_steps(
            r#"[
            {"op":"buy","investor":"alice","amount":"120.00"},
            {"op":"transfer","from":"alice","to":"land1","amount":"500.00"},
            {"op":"buy","investor":"alice","amount":"1.00"}
        ]"#,
        );
        let run = run_plan(&validate(&s).unwrap());
        let failure = run.report.failure.as_ref().unwrap();
        assert_eq!(failure.index, 1);
        assert_eq!(failure.op, "transfer");
        assert_eq!(run.report.steps_completed, 1);
        assert!(!run.report.passed());
        let last = run.engine.log().events().last().unwrap();
        assert_eq!(last.kind(), crate::auditlog::EventKind::Buy);
        assert_eq!(run.engine.log().len(), 2);
    }

    #[test]
    fn expectations_are_checked() {
        let text = BASE.replace(
            "STEPS",
            r#"[{"op":"buy","investor":"alice","amount":"120.00"}]"#,
        );
        let text = text.trim_end().trim_end_matches('}').to_string()
            + r#", "expectations": {"balances": {"alice": "120.00", "fund": "1.00"}}}"#;
        let run = run_plan(&validate(&Scenario::parse(&text).unwrap()).unwrap());
        assert_eq!(run.report.expectations.len(), 2);
        assert!(!run.report.passed());
        let alice = run
            .report
            .expectations
            .iter()
            .find(|e| e.subject == "balance alice")
            .unwrap();
        assert!(alice.passed());
    }
}
