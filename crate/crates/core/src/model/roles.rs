use serde::{Deserialize, Serialize};

use crate::ledger::StepCost;
use crate::prompt::TaskKind;
use crate::JudgeScore;

use super::parse::{self, AuditResult, GateVerdict};
use super::prompts;
use super::{request_key, ChatMessage, ChatSession, Constitution, ModelError, ModelRequest, Role};

/// Cost accumulator for one step. Scheme passes land in `cost`; reporting
/// only judge calls land in `metering_j`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meter {
    pub cost: StepCost,
    pub metering_j: u32,
}

/// Whether a judge call belongs to the scheme or to metric reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    Ledger,
    Metering,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleTemperatures {
    pub generate: f64,
    pub candidate: f64,
    pub revise: f64,
    pub audit: f64,
    pub gate: f64,
    pub judge: f64,
}

impl Default for RoleTemperatures {
    fn default() -> Self {
        Self { generate: 0.0, candidate: 0.7, revise: 0.0, audit: 0.0, gate: 0.0, judge: 0.0 }
    }
}

fn request(role: Role, key: String, system: &str, prompt: String, temperature: f64) -> ModelRequest {
    ModelRequest { role, key, messages: vec![ChatMessage::system(system), ChatMessage::user(prompt)], temperature }
}

/// Generator role over a chat session.
pub struct Generator<'a> {
    session: &'a mut dyn ChatSession,
    task: TaskKind,
    temps: RoleTemperatures,
    parse_retries: u32,
}

impl<'a> Generator<'a> {
    pub fn new(session: &'a mut dyn ChatSession, task: TaskKind) -> Self {
        Self { session, task, temps: RoleTemperatures::default(), parse_retries: 2 }
    }

    pub fn with_temperatures(mut self, temps: RoleTemperatures) -> Self {
        self.temps = temps;
        self
    }

    pub fn with_parse_retries(mut self, retries: u32) -> Self {
        self.parse_retries = retries;
        self
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    fn word_request(&mut self, req: ModelRequest) -> Result<String, ModelError> {
        let reply = self.session.complete(&req)?;
        parse::extract_word(&reply).ok_or(ModelError::GenerationEmpty(reply))
    }

    pub fn generate(&mut self, meter: &mut Meter, context: &str) -> Result<String, ModelError> {
        let req = request(
            Role::Generate,
            request_key(&[context]),
            prompts::GENERATOR_SYSTEM,
            prompts::build_generate_prompt(self.task, context),
            self.temps.generate,
        );
        meter.cost.gen_calls += 1;
        self.word_request(req)
    }

    /// Requests `n` candidates as independent calls. Empty replies are
    /// dropped, duplicates are kept. `own_pass` is false when the batch is read
    /// from a distribution an earlier pass already computed, so native
    /// accounting charges nothing for it.
    pub fn generate_n(
        &mut self,
        meter: &mut Meter,
        context: &str,
        n: u32,
        own_pass: bool,
    ) -> Result<Vec<String>, ModelError> {
        if own_pass && n > 0 {
            meter.cost.candidate_batches += 1;
        }
        let mut words = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let req = request(
                Role::Candidate,
                request_key(&[context]),
                prompts::GENERATOR_SYSTEM,
                prompts::build_generate_prompt(self.task, context),
                self.temps.candidate,
            );
            meter.cost.candidate_calls += 1;
            match self.word_request(req) {
                Ok(w) => words.push(w),
                Err(ModelError::GenerationEmpty(reply)) => {
                    log::debug!("dropping empty candidate reply {reply:?}");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(words)
    }

    pub fn revise(
        &mut self,
        meter: &mut Meter,
        context: &str,
        word: &str,
        feedback: &str,
    ) -> Result<String, ModelError> {
        let req = request(
            Role::Revise,
            request_key(&[context, word]),
            prompts::GENERATOR_SYSTEM,
            prompts::build_revise_prompt(self.task, context, word, feedback),
            self.temps.revise,
        );
        meter.cost.gen_calls += 1;
        self.word_request(req)
    }

    /// Self-audit against the constitution. An unparseable reply is re-asked
    /// up to the retry budget, then read as "no violation"; the second tuple
    /// field reports that fallback.
    pub fn audit(
        &mut self,
        meter: &mut Meter,
        context: &str,
        word: &str,
        constitution: &Constitution,
    ) -> Result<(AuditResult, bool), ModelError> {
        let base = prompts::build_audit_prompt(context, word, constitution);
        for attempt in 0..=self.parse_retries {
            let prompt = if attempt == 0 { base.clone() } else { prompts::with_json_reminder(&base) };
            let req = request(
                Role::Audit,
                request_key(&[context, word]),
                prompts::GENERATOR_SYSTEM,
                prompt,
                self.temps.audit,
            );
            meter.cost.gen_calls += 1;
            let reply = self.session.complete(&req)?;
            match parse::parse_audit_response(&reply) {
                Ok(audit) => return Ok((audit, false)),
                Err(e) => log::debug!("audit parse failure on attempt {}: {e}", attempt + 1),
            }
        }
        Ok((AuditResult::clean(), true))
    }

    /// Bias Guard check, run on the generator and charged as a generator pass.
    pub fn gate(&mut self, meter: &mut Meter, context: &str, word: &str) -> Result<GateVerdict, ModelError> {
        let req = request(
            Role::Gate,
            request_key(&[context, word]),
            prompts::GENERATOR_SYSTEM,
            prompts::build_gate_prompt(context, word),
            self.temps.gate,
        );
        meter.cost.gen_calls += 1;
        let reply = self.session.complete(&req)?;
        Ok(parse::gate_verdict(&reply))
    }
}

/// Judge role over a chat session.
pub struct Judge<'a> {
    session: &'a mut dyn ChatSession,
    temperature: f64,
    parse_retries: u32,
}

impl<'a> Judge<'a> {
    pub fn new(session: &'a mut dyn ChatSession) -> Self {
        Self { session, temperature: 0.0, parse_retries: 2 }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_parse_retries(mut self, retries: u32) -> Self {
        self.parse_retries = retries;
        self
    }

    fn charge(meter: &mut Meter, charge: Charge) {
        match charge {
            Charge::Ledger => meter.cost.judge_calls += 1,
            Charge::Metering => meter.metering_j += 1,
        }
    }

    fn scored(
        &mut self,
        meter: &mut Meter,
        charge: Charge,
        role: Role,
        key: String,
        base: String,
    ) -> Result<JudgeScore, ModelError> {
        let mut last = None;
        for attempt in 0..=self.parse_retries {
            let prompt = if attempt == 0 { base.clone() } else { prompts::with_json_reminder(&base) };
            let req = request(role, key.clone(), prompts::JUDGE_SYSTEM, prompt, self.temperature);
            Self::charge(meter, charge);
            let reply = self.session.complete(&req)?;
            match parse::parse_judge_response(&reply) {
                Ok(score) => return Ok(score),
                Err(e) => {
                    log::debug!("judge parse failure on attempt {}: {e}", attempt + 1);
                    last = Some(e);
                }
            }
        }
        Err(ModelError::JudgeParseFailure {
            attempts: self.parse_retries + 1,
            last: last.expect("at least one attempt"),
        })
    }

    pub fn score_word(
        &mut self,
        meter: &mut Meter,
        charge: Charge,
        context: &str,
        word: &str,
    ) -> Result<JudgeScore, ModelError> {
        self.scored(
            meter,
            charge,
            Role::ScoreWord,
            request_key(&[context, word]),
            prompts::build_judge_prompt(context, word),
        )
    }

    pub fn score_text(&mut self, meter: &mut Meter, charge: Charge, text: &str) -> Result<JudgeScore, ModelError> {
        self.scored(meter, charge, Role::ScoreText, request_key(&[text]), prompts::build_text_judge_prompt(text))
    }

    pub fn critique(&mut self, meter: &mut Meter, context: &str, word: &str) -> Result<String, ModelError> {
        let req = request(
            Role::Critique,
            request_key(&[context, word]),
            prompts::JUDGE_SYSTEM,
            prompts::build_critique_prompt(context, word),
            self.temperature,
        );
        meter.cost.judge_calls += 1;
        Ok(self.session.complete(&req)?.trim().to_string())
    }
}
