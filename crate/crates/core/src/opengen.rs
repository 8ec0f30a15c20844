//! Word-by-word open generation.
//!
//! At step `i` the context is the prompt followed by every word chosen so
//! far, joined by single spaces. A scheme (or its gated variant) picks the
//! next word; after the word budget the judge scores the whole passage once.
//! That final score is metering and stays out of the per-word ledger.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SchemeConfig, SchemeId};
use crate::ledger::{AccountingMode, OverheadLedger};
use crate::model::{Charge, Constitution, Generator, Judge, Meter};
use crate::prompt::{PromptRecord, TaskKind};
use crate::scalar::Scalar;
use crate::schemes::{run_step, StepTrace};
use crate::JudgeScore;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpenGenError {
    #[error("prompt '{0}' is not an open-generation prompt")]
    NotOpenGen(String),
    #[error("prompt '{0}' has empty text")]
    EmptyPrompt(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("firing rate is only defined for gated schemes, got {0}")]
    Ungated(SchemeId),
    #[error("firing rate needs at least one word")]
    NoWords,
    #[error("{name} = {value} is outside its domain")]
    Domain { name: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRun {
    pub prompt: PromptRecord,
    pub scheme: SchemeId,
    pub words: Vec<String>,
    pub step_traces: Vec<StepTrace>,
    pub ledger: OverheadLedger,
    pub final_score: Option<JudgeScore>,
    pub gate_fire_count: u32,
    /// Reporting-only judge calls (the holistic score).
    pub metering_j: u32,
    pub status: RunStatus,
    /// Passes spent by the step that failed, if any.
    pub failed_step: Option<Meter>,
}

impl GenerationRun {
    pub fn is_completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// The full passage: prompt then words.
    pub fn text(&self) -> String {
        context_after(&self.prompt.text, &self.words)
    }
}

/// Context after `words` have been emitted.
pub fn context_after(prompt: &str, words: &[String]) -> String {
    let mut context = prompt.to_string();
    for w in words {
        context.push(' ');
        context.push_str(w);
    }
    context
}

/// Every step context `c_1..c_{n}` for a run's emitted words.
pub fn step_contexts(prompt: &str, words: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(words.len());
    let mut context = prompt.to_string();
    for w in words {
        out.push(context.clone());
        context.push(' ');
        context.push_str(w);
    }
    out
}

pub fn generate_open(
    prompt: &PromptRecord,
    scheme: SchemeId,
    config: &SchemeConfig,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    constitution: &Constitution,
    mode: AccountingMode,
) -> Result<GenerationRun, OpenGenError> {
    if prompt.kind != TaskKind::OpenGen {
        return Err(OpenGenError::NotOpenGen(prompt.id.clone()));
    }
    if prompt.text.trim().is_empty() {
        return Err(OpenGenError::EmptyPrompt(prompt.id.clone()));
    }
    config.validate()?;

    let mut run = GenerationRun {
        prompt: prompt.clone(),
        scheme,
        words: Vec::new(),
        step_traces: Vec::new(),
        ledger: OverheadLedger::new(mode),
        final_score: None,
        gate_fire_count: 0,
        metering_j: 0,
        status: RunStatus::Completed,
        failed_step: None,
    };

    let mut context = prompt.text.clone();
    for _ in 0..config.t_words {
        match run_step(scheme, &context, generator, judge, config, constitution, false) {
            Ok(trace) => {
                if trace.gate_fired == Some(true) {
                    run.gate_fire_count += 1;
                }
                run.metering_j += trace.metering_j;
                run.ledger.push(trace.cost);
                context.push(' ');
                context.push_str(&trace.chosen_word);
                run.words.push(trace.chosen_word.clone());
                run.step_traces.push(trace);
            }
            Err(e) => {
                run.status = RunStatus::Failed { kind: e.error.kind().into(), message: e.error.to_string() };
                run.failed_step = Some(e.meter);
                return Ok(run);
            }
        }
    }

    let mut meter = Meter::default();
    match judge.score_text(&mut meter, Charge::Metering, &context) {
        Ok(score) => run.final_score = Some(score),
        Err(e) => run.status = RunStatus::Failed { kind: e.kind().into(), message: e.to_string() },
    }
    run.metering_j += meter.metering_j;
    Ok(run)
}

/// `E[R_G] = 1 + 1 + phi * delta`: one generation pass, one gate pass, and
/// the scheme's extra generator cost on the fraction of words that fire.
pub fn expected_gated_overhead<T: Scalar>(phi: T, delta_r_g: T) -> Result<T, OpenGenError> {
    if !phi.in_unit_interval() {
        return Err(OpenGenError::Domain { name: "phi", value: format!("{phi:?}") });
    }
    if !matches!(delta_r_g.partial_cmp(&T::zero()), Some(Ordering::Greater | Ordering::Equal)) {
        return Err(OpenGenError::Domain { name: "delta_r_g", value: format!("{delta_r_g:?}") });
    }
    Ok(T::one() + T::one() + phi * delta_r_g)
}

/// Fraction of emitted words on which the gate fired.
pub fn measure_firing_rate<T: Scalar>(run: &GenerationRun) -> Result<T, OpenGenError> {
    aggregate_firing_rate(std::slice::from_ref(run))
}

/// Pooled firing rate over several runs: total fires over total words.
pub fn aggregate_firing_rate<T: Scalar>(runs: &[GenerationRun]) -> Result<T, OpenGenError> {
    if let Some(r) = runs.iter().find(|r| !r.scheme.is_gated()) {
        return Err(OpenGenError::Ungated(r.scheme));
    }
    let fires: u64 = runs.iter().map(|r| u64::from(r.gate_fire_count)).sum();
    let words: u64 = runs.iter().map(|r| r.words.len() as u64).sum();
    if words == 0 {
        return Err(OpenGenError::NoWords);
    }
    Ok(T::from_count(fires) / T::from_count(words))
}
