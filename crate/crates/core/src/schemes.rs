//! Single-step word selection schemes.
//!
//! Each scheme picks one word for a context (a fill-in template or the running
//! open-generation text) and records a [`StepTrace`]: every candidate,
//! critique, audit and revision it saw, plus the passes it spent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{SchemeConfig, SchemeId};
use crate::ledger::StepCost;
use crate::model::{AuditResult, Charge, Constitution, Generator, Judge, Meter, ModelError};
use crate::{CompositeWeights, JudgeScore};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no usable candidate among {requested} requested")]
    SelectionFailure { requested: u32 },
    #[error("context is empty")]
    EmptyContext,
}

impl SchemeError {
    pub fn kind(&self) -> &'static str {
        match self {
            SchemeError::Model(e) => e.kind(),
            SchemeError::SelectionFailure { .. } => "SelectionFailure",
            SchemeError::EmptyContext => "EmptyContext",
        }
    }
}

/// A failed step together with what it had spent before failing.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct StepError {
    pub error: SchemeError,
    pub meter: Meter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub word: String,
    pub score: JudgeScore,
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub word: String,
    /// Absent when the revision was not judged (judge-free constitutional).
    pub score: Option<JudgeScore>,
}

/// Audit record of one emitted word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub scheme: SchemeId,
    /// The word the gate examined, for gated schemes.
    pub gate_candidate: Option<String>,
    pub gate_fired: Option<bool>,
    pub gate_parse_failure: bool,
    /// First word the scheme produced (first candidate for Select).
    pub initial_word: String,
    pub initial_score: Option<JudgeScore>,
    pub candidates: Vec<ScoredCandidate>,
    pub critiques: Vec<String>,
    pub audits: Vec<AuditResult>,
    pub audit_parse_failures: u32,
    pub revisions: Vec<Revision>,
    pub chosen_word: String,
    pub chosen_score: Option<JudgeScore>,
    /// Revision rounds performed.
    pub k_actual: u32,
    pub cost: StepCost,
    /// Judge calls made only for reporting.
    pub metering_j: u32,
}

impl StepTrace {
    fn new(scheme: SchemeId, initial_word: String) -> Self {
        Self {
            scheme,
            gate_candidate: None,
            gate_fired: None,
            gate_parse_failure: false,
            chosen_word: initial_word.clone(),
            initial_word,
            initial_score: None,
            candidates: Vec::new(),
            critiques: Vec::new(),
            audits: Vec::new(),
            audit_parse_failures: 0,
            revisions: Vec::new(),
            chosen_score: None,
            k_actual: 0,
            cost: StepCost::default(),
            metering_j: 0,
        }
    }

    fn finish(mut self, meter: &Meter) -> Self {
        self.cost = meter.cost;
        self.metering_j = meter.metering_j;
        self
    }
}

fn check_context(context: &str) -> Result<(), SchemeError> {
    if context.trim().is_empty() {
        Err(SchemeError::EmptyContext)
    } else {
        Ok(())
    }
}

fn baseline(
    meter: &mut Meter,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    report_score: bool,
) -> Result<StepTrace, SchemeError> {
    let word = generator.generate(meter, context)?;
    let mut trace = StepTrace::new(SchemeId::Baseline, word);
    if report_score {
        let score = judge.score_word(meter, Charge::Metering, context, &trace.initial_word)?;
        trace.initial_score = Some(score);
        trace.chosen_score = Some(score);
    }
    Ok(trace)
}

/// Scores candidates and keeps the first one with the highest composite.
fn select(
    meter: &mut Meter,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    n: u32,
    weights: CompositeWeights,
    reused: Option<&str>,
) -> Result<StepTrace, SchemeError> {
    let mut words: Vec<String> = reused.map(str::to_string).into_iter().collect();
    let fresh = n.saturating_sub(words.len() as u32);
    words.extend(generator.generate_n(meter, context, fresh, reused.is_none())?);
    if words.is_empty() {
        return Err(SchemeError::SelectionFailure { requested: n });
    }

    let mut candidates = Vec::with_capacity(words.len());
    for word in words {
        let score = judge.score_word(meter, Charge::Ledger, context, &word)?;
        candidates.push(ScoredCandidate { composite: score.composite(weights), word, score });
    }

    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        if c.composite > candidates[best].composite {
            best = i;
        }
    }

    let mut trace = StepTrace::new(SchemeId::Select, candidates[0].word.clone());
    trace.initial_score = Some(candidates[0].score);
    trace.chosen_word = candidates[best].word.clone();
    trace.chosen_score = Some(candidates[best].score);
    trace.candidates = candidates;
    Ok(trace)
}

/// Critique-and-revise with early stopping at `bias >= tau`. The loop always
/// continues from the latest revision; the best-scoring word seen is returned.
fn sequential(
    meter: &mut Meter,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    k_max: u32,
    weights: CompositeWeights,
    tau: f64,
) -> Result<StepTrace, SchemeError> {
    let mut word = generator.generate(meter, context)?;
    let mut score = judge.score_word(meter, Charge::Ledger, context, &word)?;

    let mut trace = StepTrace::new(SchemeId::Sequential, word.clone());
    trace.initial_score = Some(score);
    trace.chosen_score = Some(score);
    let mut best = score.composite(weights);

    for _ in 0..k_max {
        if score.bias() >= tau {
            break;
        }
        let critique = judge.critique(meter, context, &word)?;
        let revised = generator.revise(meter, context, &word, &critique)?;
        let revised_score = judge.score_word(meter, Charge::Ledger, context, &revised)?;
        trace.critiques.push(critique);
        trace.revisions.push(Revision { word: revised.clone(), score: Some(revised_score) });
        trace.k_actual += 1;

        let composite = revised_score.composite(weights);
        if composite > best {
            best = composite;
            trace.chosen_word = revised.clone();
            trace.chosen_score = Some(revised_score);
        }
        word = revised;
        score = revised_score;
    }
    Ok(trace)
}

/// Self-audit against the constitution. A revision replaces the current word
/// only when its composite beats the best so far, unless running judge-free,
/// where every audit-triggered revision is taken.
#[allow(clippy::too_many_arguments)]
fn constitutional(
    meter: &mut Meter,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    constitution: &Constitution,
    k_max: u32,
    weights: CompositeWeights,
    judge_free: bool,
) -> Result<StepTrace, SchemeError> {
    let mut word = generator.generate(meter, context)?;
    let mut trace = StepTrace::new(SchemeId::Constitutional, word.clone());
    let mut best = None;
    if !judge_free {
        let score = judge.score_word(meter, Charge::Ledger, context, &word)?;
        trace.initial_score = Some(score);
        trace.chosen_score = Some(score);
        best = Some(score.composite(weights));
    }

    for _ in 0..k_max {
        let (audit, parse_failed) = generator.audit(meter, context, &word, constitution)?;
        if parse_failed {
            trace.audit_parse_failures += 1;
        }
        let violates = audit.violates;
        let reason = audit.reason.clone().unwrap_or_default();
        trace.audits.push(audit);
        if !violates {
            break;
        }
        let revised = generator.revise(meter, context, &word, &reason)?;
        trace.k_actual += 1;
        match best {
            None => {
                trace.revisions.push(Revision { word: revised.clone(), score: None });
                word = revised;
            }
            Some(current) => {
                let score = judge.score_word(meter, Charge::Ledger, context, &revised)?;
                trace.revisions.push(Revision { word: revised.clone(), score: Some(score) });
                let composite = score.composite(weights);
                if composite > current {
                    best = Some(composite);
                    trace.chosen_score = Some(score);
                    word = revised;
                }
            }
        }
    }
    trace.chosen_word = word;
    Ok(trace)
}

fn wrap<F>(f: F) -> Result<(String, StepTrace), StepError>
where
    F: FnOnce(&mut Meter) -> Result<StepTrace, SchemeError>,
{
    let mut meter = Meter::default();
    match f(&mut meter) {
        Ok(trace) => {
            let trace = trace.finish(&meter);
            Ok((trace.chosen_word.clone(), trace))
        }
        Err(error) => Err(StepError { error, meter }),
    }
}

/// Greedy single generation. With `report_score`, the word is also judged for
/// metrics; that call is metering, not scheme cost.
pub fn run_baseline(
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    report_score: bool,
) -> Result<(String, StepTrace), StepError> {
    wrap(|m| {
        check_context(context)?;
        baseline(m, context, generator, judge, report_score)
    })
}

pub fn run_select(
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    n: u32,
    alpha_select: CompositeWeights,
) -> Result<(String, StepTrace), StepError> {
    wrap(|m| {
        check_context(context)?;
        select(m, context, generator, judge, n.max(1), alpha_select, None)
    })
}

pub fn run_sequential(
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    k_max: u32,
    alpha_select: CompositeWeights,
    tau: f64,
) -> Result<(String, StepTrace), StepError> {
    wrap(|m| {
        check_context(context)?;
        sequential(m, context, generator, judge, k_max, alpha_select, tau)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn run_constitutional(
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    constitution: &Constitution,
    k_max: u32,
    alpha_select: CompositeWeights,
    judge_free: bool,
) -> Result<(String, StepTrace), StepError> {
    wrap(|m| {
        check_context(context)?;
        constitutional(m, context, generator, judge, constitution, k_max, alpha_select, judge_free)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_base(
    meter: &mut Meter,
    scheme: SchemeId,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    config: &SchemeConfig,
    constitution: &Constitution,
    reused: Option<&str>,
    report_baseline: bool,
) -> Result<StepTrace, SchemeError> {
    let w = config.select_weights();
    match scheme.base() {
        SchemeId::Baseline => baseline(meter, context, generator, judge, report_baseline),
        SchemeId::Select => select(meter, context, generator, judge, config.n, w, reused),
        SchemeId::Sequential => sequential(meter, context, generator, judge, config.k_max, w, config.tau),
        SchemeId::Constitutional => constitutional(
            meter,
            context,
            generator,
            judge,
            constitution,
            config.k_max,
            w,
            config.judge_free_constitutional,
        ),
        _ => unreachable!("base() never returns a gated scheme"),
    }
}

#[allow(clippy::too_many_arguments)]
fn gated(
    meter: &mut Meter,
    scheme: SchemeId,
    context: &str,
    candidate: String,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    config: &SchemeConfig,
    constitution: &Constitution,
) -> Result<StepTrace, SchemeError> {
    let verdict = generator.gate(meter, context, &candidate)?;
    let mut trace = if verdict.fired {
        let reused = (scheme.base() == SchemeId::Select && config.reuse_gate_candidate).then_some(candidate.as_str());
        run_base(meter, scheme, context, generator, judge, config, constitution, reused, false)?
    } else {
        StepTrace::new(scheme, candidate.clone())
    };
    trace.scheme = scheme;
    trace.gate_candidate = Some(candidate);
    trace.gate_fired = Some(verdict.fired);
    trace.gate_parse_failure = verdict.parse_failure;
    Ok(trace)
}

/// Gate check on an already generated word (its generation pass is charged
/// by the caller). A NO lets the word through; a YES, or an unreadable reply,
/// runs the scheme's base procedure on the same context.
pub fn gated_step(
    context: &str,
    candidate_word: &str,
    scheme: SchemeId,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    config: &SchemeConfig,
    constitution: &Constitution,
) -> Result<(String, StepTrace), StepError> {
    wrap(|m| {
        check_context(context)?;
        gated(m, scheme, context, candidate_word.to_string(), generator, judge, config, constitution)
    })
}

/// Runs any of the seven schemes for one word. Gated schemes generate the
/// candidate first, then gate it.
pub fn run_step(
    scheme: SchemeId,
    context: &str,
    generator: &mut Generator<'_>,
    judge: &mut Judge<'_>,
    config: &SchemeConfig,
    constitution: &Constitution,
    report_baseline: bool,
) -> Result<StepTrace, StepError> {
    wrap(|m| {
        check_context(context)?;
        if scheme.is_gated() {
            let candidate = generator.generate(m, context)?;
            gated(m, scheme, context, candidate, generator, judge, config, constitution)
        } else {
            run_base(m, scheme, context, generator, judge, config, constitution, None, report_baseline)
        }
    })
    .map(|(_, trace)| trace)
}
