//! Per-item execution and the persisted result record.

use serde::{Deserialize, Serialize};

use crate::config::{SchemeConfig, SchemeId};
use crate::ledger::{AccountingMode, OverheadLedger};
use crate::model::{Charge, ChatSession, Constitution, Generator, Judge, Meter, RoleTemperatures};
use crate::opengen::{generate_open, RunStatus};
use crate::prompt::{Category, Language, PromptRecord, TaskKind};
use crate::schemes::{run_step, StepTrace};
use crate::JudgeScore;

/// Outcome of one (model, scheme, prompt) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub scheme: SchemeId,
    pub prompt_id: String,
    pub language: Language,
    pub category: Category,
    pub kind: TaskKind,
    pub status: RunStatus,
    /// Reported score: the chosen word's score for fill-in, the holistic
    /// passage score for open generation.
    pub score: Option<JudgeScore>,
    pub words: Vec<String>,
    pub step_traces: Vec<StepTrace>,
    pub ledger: OverheadLedger,
    pub gate_fires: u32,
    pub metering_j: u32,
    pub failed_step: Option<Meter>,
}

impl RunResult {
    pub fn cell_key(&self) -> CellId {
        CellId { model: self.model.clone(), scheme: self.scheme, prompt_id: self.prompt_id.clone() }
    }

    /// Completed with a score; counted in score means.
    pub fn is_success(&self) -> bool {
        self.status == RunStatus::Completed && self.score.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub model: String,
    pub scheme: SchemeId,
    pub prompt_id: String,
}

pub struct ItemRun<'a> {
    pub model: &'a str,
    pub prompt: &'a PromptRecord,
    pub scheme: SchemeId,
    pub config: &'a SchemeConfig,
    pub constitution: &'a Constitution,
    pub mode: AccountingMode,
    pub temperatures: RoleTemperatures,
}

impl ItemRun<'_> {
    fn shell(&self) -> RunResult {
        RunResult {
            model: self.model.to_string(),
            scheme: self.scheme,
            prompt_id: self.prompt.id.clone(),
            language: self.prompt.language,
            category: self.prompt.category,
            kind: self.prompt.kind,
            status: RunStatus::Completed,
            score: None,
            words: Vec::new(),
            step_traces: Vec::new(),
            ledger: OverheadLedger::new(self.mode),
            gate_fires: 0,
            metering_j: 0,
            failed_step: None,
        }
    }

    /// Runs the item. Failures are recorded in the result, never raised.
    pub fn execute(&self, generator: &mut dyn ChatSession, judge: &mut dyn ChatSession) -> RunResult {
        let mut gen = Generator::new(generator, self.prompt.kind)
            .with_temperatures(self.temperatures)
            .with_parse_retries(self.config.parse_retries);
        let mut judge =
            Judge::new(judge).with_temperature(self.temperatures.judge).with_parse_retries(self.config.parse_retries);
        let mut result = self.shell();
        match self.prompt.kind {
            TaskKind::FillIn => self.fill_in(&mut gen, &mut judge, &mut result),
            TaskKind::OpenGen => self.open_gen(&mut gen, &mut judge, &mut result),
        }
        result
    }

    fn fill_in(&self, gen: &mut Generator<'_>, judge: &mut Judge<'_>, result: &mut RunResult) {
        if let Err(e) = self.prompt.validate() {
            result.status = RunStatus::Failed { kind: "InvalidPrompt".into(), message: e.to_string() };
            return;
        }
        let context = &self.prompt.text;
        let mut trace = match run_step(self.scheme, context, gen, judge, self.config, self.constitution, true) {
            Ok(t) => t,
            Err(e) => {
                result.status = RunStatus::Failed { kind: e.error.kind().into(), message: e.error.to_string() };
                result.failed_step = Some(e.meter);
                return;
            }
        };
        if trace.chosen_score.is_none() {
            let mut meter = Meter::default();
            let scored = judge.score_word(&mut meter, Charge::Metering, context, &trace.chosen_word);
            trace.metering_j += meter.metering_j;
            match scored {
                Ok(s) => trace.chosen_score = Some(s),
                Err(e) => result.status = RunStatus::Failed { kind: e.kind().into(), message: e.to_string() },
            }
        }
        result.score = trace.chosen_score;
        result.gate_fires = u32::from(trace.gate_fired == Some(true));
        result.metering_j = trace.metering_j;
        result.ledger.push(trace.cost);
        result.words.push(trace.chosen_word.clone());
        result.step_traces.push(trace);
    }

    fn open_gen(&self, gen: &mut Generator<'_>, judge: &mut Judge<'_>, result: &mut RunResult) {
        match generate_open(self.prompt, self.scheme, self.config, gen, judge, self.constitution, self.mode) {
            Ok(run) => {
                result.status = run.status;
                result.score = run.final_score;
                result.words = run.words;
                result.step_traces = run.step_traces;
                result.ledger = run.ledger;
                result.gate_fires = run.gate_fire_count;
                result.metering_j = run.metering_j;
                result.failed_step = run.failed_step;
            }
            Err(e) => result.status = RunStatus::Failed { kind: "InvalidRun".into(), message: e.to_string() },
        }
    }
}
