//! Scheme identifiers and hyperparameters.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::TaskKind;
use crate::score::Weights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Baseline,
    Select,
    Sequential,
    Constitutional,
    SelectOpt,
    SequentialOpt,
    ConstitutionalOpt,
}

impl SchemeId {
    pub const ALL: [SchemeId; 7] = [
        SchemeId::Baseline,
        SchemeId::Select,
        SchemeId::Sequential,
        SchemeId::Constitutional,
        SchemeId::SelectOpt,
        SchemeId::SequentialOpt,
        SchemeId::ConstitutionalOpt,
    ];

    /// The four schemes used on single-word fill-in prompts.
    pub const SINGLE_WORD: [SchemeId; 4] =
        [SchemeId::Baseline, SchemeId::Select, SchemeId::Sequential, SchemeId::Constitutional];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Baseline => "baseline",
            SchemeId::Select => "select",
            SchemeId::Sequential => "sequential",
            SchemeId::Constitutional => "constitutional",
            SchemeId::SelectOpt => "select_opt",
            SchemeId::SequentialOpt => "sequential_opt",
            SchemeId::ConstitutionalOpt => "constitutional_opt",
        }
    }

    pub fn is_gated(self) -> bool {
        matches!(self, SchemeId::SelectOpt | SchemeId::SequentialOpt | SchemeId::ConstitutionalOpt)
    }

    /// The scheme a gated variant runs when the gate fires.
    pub fn base(self) -> SchemeId {
        match self {
            SchemeId::SelectOpt => SchemeId::Select,
            SchemeId::SequentialOpt => SchemeId::Sequential,
            SchemeId::ConstitutionalOpt => SchemeId::Constitutional,
            other => other,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        SchemeId::ALL.into_iter().find(|id| id.as_str() == norm).ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("n must be at least 1")]
    ZeroCandidates,
    #[error("t_words must be at least 1")]
    ZeroWords,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfUnit { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    /// Best-of-N candidate count.
    pub n: u32,
    /// Maximum critique/audit rounds.
    pub k_max: u32,
    /// Sequential early-stop threshold on bias.
    pub tau: f64,
    /// Composite weight inside the selection loops.
    pub alpha_select: f64,
    /// Composite weight for reported metrics.
    pub alpha_report: f64,
    /// Open-generation word budget.
    pub t_words: u32,
    /// Re-asks after an unparseable judge or audit reply.
    pub parse_retries: u32,
    /// In gated Best-of-N, reuse the already generated word as candidate 1
    /// and request only n - 1 more.
    pub reuse_gate_candidate: bool,
    /// Constitutional without in-loop judge scoring: every audit-triggered
    /// revision is adopted.
    pub judge_free_constitutional: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            n: 8,
            k_max: 5,
            tau: 0.8,
            alpha_select: 0.6,
            alpha_report: 0.5,
            t_words: 20,
            parse_retries: 2,
            reuse_gate_candidate: true,
            judge_free_constitutional: false,
        }
    }
}

impl SchemeConfig {
    /// Defaults for a task kind and scheme: n = 8, K = 5 (Sequential) or 4
    /// (Constitutional) on fill-in prompts; n = 3, K = 2 on open generation.
    pub fn defaults_for(kind: TaskKind, scheme: SchemeId) -> Self {
        let base = Self::default();
        match kind {
            TaskKind::FillIn => Self { k_max: if scheme.base() == SchemeId::Constitutional { 4 } else { 5 }, ..base },
            TaskKind::OpenGen => Self { n: 3, k_max: 2, ..base },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::ZeroCandidates);
        }
        if self.t_words == 0 {
            return Err(ConfigError::ZeroWords);
        }
        for (name, value) in
            [("tau", self.tau), ("alpha_select", self.alpha_select), ("alpha_report", self.alpha_report)]
        {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfUnit { name, value });
            }
        }
        Ok(())
    }

    pub fn select_weights(&self) -> Weights<f64> {
        Weights::new(self.alpha_select).expect("validated alpha_select")
    }

    pub fn report_weights(&self) -> Weights<f64> {
        Weights::new(self.alpha_report).expect("validated alpha_report")
    }
}

/// Per-run overrides applied on top of [`SchemeConfig::defaults_for`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigOverrides {
    pub n: Option<u32>,
    pub k_max: Option<u32>,
    pub tau: Option<f64>,
    pub alpha_select: Option<f64>,
    pub alpha_report: Option<f64>,
    pub t_words: Option<u32>,
    pub parse_retries: Option<u32>,
    pub reuse_gate_candidate: Option<bool>,
    pub judge_free_constitutional: Option<bool>,
}

impl ConfigOverrides {
    pub fn resolve(&self, kind: TaskKind, scheme: SchemeId) -> Result<SchemeConfig, ConfigError> {
        let mut c = SchemeConfig::defaults_for(kind, scheme);
        if let Some(v) = self.n {
            c.n = v;
        }
        if let Some(v) = self.k_max {
            c.k_max = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.alpha_select {
            c.alpha_select = v;
        }
        if let Some(v) = self.alpha_report {
            c.alpha_report = v;
        }
        if let Some(v) = self.t_words {
            c.t_words = v;
        }
        if let Some(v) = self.parse_retries {
            c.parse_retries = v;
        }
        if let Some(v) = self.reuse_gate_candidate {
            c.reuse_gate_candidate = v;
        }
        if let Some(v) = self.judge_free_constitutional {
            c.judge_free_constitutional = v;
        }
        c.validate()?;
        Ok(c)
    }
}
