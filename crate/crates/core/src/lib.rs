//! Decoding-time debiasing for black-box language models.
//!
//! A generator proposes words; a process-reward-model judge scores them for
//! bias and utility. Four selection schemes (baseline, Best-of-N select,
//! sequential critique-and-revise, constitutional self-audit), their gated
//! variants, word-by-word open generation, and a benchmark harness are built
//! on a per-step forward-pass ledger that keeps generator and judge cost
//! apart.

pub mod bench;
pub mod config;
pub mod ledger;
pub mod model;
pub mod opengen;
pub mod prompt;
pub mod scalar;
pub mod schemes;
pub mod score;

pub use config::{ConfigOverrides, SchemeConfig, SchemeId};
pub use ledger::{overhead_ratios, AccountingMode, OverheadLedger, StepCost};
pub use prompt::{Category, Language, PromptRecord, TaskKind, BLANK_MARKER};
pub use scalar::{Exact, Scalar};
pub use score::{composite_score, ScoreError};

/// Judge rating with `f64` fields.
pub type JudgeScore = score::Score<f64>;
/// Composite weight with an `f64` alpha.
pub type CompositeWeights = score::Weights<f64>;
/// Overhead ratios in `f64`.
pub type OverheadRatios = ledger::Ratios<f64>;
