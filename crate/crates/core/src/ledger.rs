//! Forward-pass overhead ledger.
//!
//! Every emitted word gets one [`StepCost`]. Generator and judge passes are
//! kept apart because they usually run on different hardware. Best-of-N
//! candidate requests are recorded separately from other generator passes so
//! that the same execution can be read under API accounting (one pass per
//! candidate request) or native accounting (one pass per candidate batch).

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    Api,
    Native,
}

impl AccountingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountingMode::Api => "api",
            AccountingMode::Native => "native",
        }
    }
}

impl std::str::FromStr for AccountingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "api" => Ok(AccountingMode::Api),
            "native" => Ok(AccountingMode::Native),
            other => Err(format!("unknown accounting mode '{other}'")),
        }
    }
}

/// Raw pass counts for one emitted word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCost {
    /// Generator requests other than Best-of-N candidates (generate, revise,
    /// audit, gate, and parse retries of those).
    pub gen_calls: u32,
    /// Individual Best-of-N candidate requests.
    pub candidate_calls: u32,
    /// Candidate batches that need their own forward pass under native
    /// accounting. A batch that reuses an earlier pass's distribution is not
    /// counted.
    pub candidate_batches: u32,
    /// Judge requests.
    pub judge_calls: u32,
}

impl StepCost {
    pub fn fp_g(&self, mode: AccountingMode) -> u32 {
        match mode {
            AccountingMode::Api => self.gen_calls + self.candidate_calls,
            AccountingMode::Native => self.gen_calls + self.candidate_batches,
        }
    }

    pub fn fp_j(&self) -> u32 {
        self.judge_calls
    }
}

impl AddAssign for StepCost {
    fn add_assign(&mut self, rhs: Self) {
        self.gen_calls += rhs.gen_calls;
        self.candidate_calls += rhs.candidate_calls;
        self.candidate_batches += rhs.candidate_batches;
        self.judge_calls += rhs.judge_calls;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("overhead ratios need at least one step")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadLedger {
    pub accounting_mode: AccountingMode,
    pub steps: Vec<StepCost>,
}

impl OverheadLedger {
    pub fn new(accounting_mode: AccountingMode) -> Self {
        Self { accounting_mode, steps: Vec::new() }
    }

    pub fn push(&mut self, step: StepCost) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The same steps read under another accounting mode.
    pub fn with_mode(&self, mode: AccountingMode) -> Self {
        Self { accounting_mode: mode, steps: self.steps.clone() }
    }

    pub fn fp_g(&self, index: usize) -> u32 {
        self.steps[index].fp_g(self.accounting_mode)
    }

    pub fn fp_j(&self, index: usize) -> u32 {
        self.steps[index].fp_j()
    }

    pub fn total_fp_g(&self) -> u64 {
        self.steps.iter().map(|s| u64::from(s.fp_g(self.accounting_mode))).sum()
    }

    pub fn total_fp_j(&self) -> u64 {
        self.steps.iter().map(|s| u64::from(s.fp_j())).sum()
    }

    pub fn ratios<T: Scalar>(&self) -> Result<Ratios<T>, LedgerError> {
        overhead_ratios(self)
    }
}

/// Per-word generator and judge overhead relative to plain greedy decoding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios<T> {
    pub r_g: T,
    pub r_j: T,
}

impl<T: Scalar> Ratios<T> {
    /// Total overhead, always `r_g + r_j`.
    pub fn r(&self) -> T {
        self.r_g + self.r_j
    }
}

pub fn overhead_ratios<T: Scalar>(ledger: &OverheadLedger) -> Result<Ratios<T>, LedgerError> {
    if ledger.steps.is_empty() {
        return Err(LedgerError::Empty);
    }
    let words = T::from_count(ledger.steps.len() as u64);
    Ok(Ratios { r_g: T::from_count(ledger.total_fp_g()) / words, r_j: T::from_count(ledger.total_fp_j()) / words })
}
