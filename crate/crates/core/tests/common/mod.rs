//! Shared scenario builders and independent oracles for the integration and
//! acceptance tests. Oracles work on plain numbers and never call the
//! engine's scheme code.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use debias_core::bench::dataset::{fill_in_sample, open_gen_fixture, Dataset};
use debias_core::bench::report::{plot_documents, render_csv};
use debias_core::bench::{aggregate, run_matrix, MatrixOptions, NamedBackend, ResultStore, RunMatrix, RunResult};
use debias_core::model::mock::{MockBackend, MockScript, MockSession, WILDCARD};
use debias_core::model::parse::{gate_verdict, parse_audit_response, parse_judge_response, AuditResult, ParseError};
use debias_core::model::prompts::build_generate_prompt;
use debias_core::model::{Constitution, Generator, Judge, Role, RoleTemperatures, Side};
use debias_core::opengen::{
    context_after, expected_gated_overhead, generate_open, measure_firing_rate, step_contexts, GenerationRun,
};
use debias_core::schemes::{run_step, StepTrace};
use debias_core::{
    composite_score, AccountingMode, Category, CompositeWeights, ConfigOverrides, Exact, JudgeScore, Language,
    OverheadLedger, PromptRecord, SchemeConfig, SchemeId, StepCost, TaskKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

pub const CTX: &str = "The new engineer was ___ during the review.";
pub const ALPHA: f64 = 0.6;

fn judge_reply(bias: f64, utility: f64) -> String {
    format!(r#"{{"bias": {bias}, "utility": {utility}}}"#)
}

fn oracle_composite(alpha: f64, (bias, utility): (f64, f64)) -> f64 {
    alpha * bias + (1.0 - alpha) * utility
}

/// Runs one fill-in step on fresh sessions over `script`.
pub fn run_fill(scheme: SchemeId, script: MockScript, config: &SchemeConfig) -> Result<StepTrace, String> {
    let mut g = MockSession::from_script(script.clone());
    let mut j = MockSession::from_script(script);
    let mut gen = Generator::new(&mut g, TaskKind::FillIn).with_parse_retries(config.parse_retries);
    let mut judge = Judge::new(&mut j).with_parse_retries(config.parse_retries);
    run_step(scheme, CTX, &mut gen, &mut judge, config, &Constitution::default(), false)
        .map_err(|e| format!("{scheme}: {}", e.error))
}

fn fill_config(scheme: SchemeId) -> SchemeConfig {
    SchemeConfig { alpha_select: ALPHA, ..SchemeConfig::defaults_for(TaskKind::FillIn, scheme) }
}

fn ledger_of(cost: StepCost, mode: AccountingMode) -> (u32, u32) {
    (cost.fp_g(mode), cost.fp_j())
}

// ---------------------------------------------------------------- Select

const SELECT_LEVELS: [(f64, f64); 3] = [(0.2, 0.9), (0.6, 0.5), (0.9, 0.6)];

/// Every weak ordering of three candidates, as level assignments.
fn select_cases() -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn select_oracle(levels: [usize; 3]) -> usize {
    let comps: Vec<f64> = levels.iter().map(|l| oracle_composite(ALPHA, SELECT_LEVELS[*l])).collect();
    let mut best = 0;
    for i in 1..3 {
        if comps[i] > comps[best] {
            best = i;
        }
    }
    best
}

fn select_script(levels: [usize; 3]) -> MockScript {
    let words = ["amber", "birch", "cedar"];
    let mut s = MockScript::new().on_seq(Role::Candidate, WILDCARD, words);
    for (w, l) in words.iter().zip(levels) {
        let (b, u) = SELECT_LEVELS[l];
        s = s.score(CTX, w, b, u);
    }
    s
}

// ------------------------------------------------------------ Sequential

const SEQ_LEVELS: [(f64, f64); 3] = [(0.3, 0.9), (0.6, 0.4), (0.9, 0.7)];
const SEQ_TAU: f64 = 0.8;
const SEQ_K: u32 = 5;

fn seq_cases() -> Vec<[usize; 6]> {
    (0..3usize.pow(6))
        .map(|mut code| {
            let mut levels = [0; 6];
            for l in levels.iter_mut() {
                *l = code % 3;
                code /= 3;
            }
            levels
        })
        .collect()
}

struct SeqOracle {
    chosen: usize,
    k: u32,
}

/// Replays critique-and-revise over word indices 0..=5.
fn seq_oracle(levels: [usize; 6]) -> SeqOracle {
    let score = |i: usize| SEQ_LEVELS[levels[i]];
    let mut current = 0;
    let mut best = (oracle_composite(ALPHA, score(0)), 0);
    let mut k = 0;
    while k < SEQ_K && score(current).0 < SEQ_TAU {
        current += 1;
        k += 1;
        let c = oracle_composite(ALPHA, score(current));
        if c > best.0 {
            best = (c, current);
        }
    }
    SeqOracle { chosen: best.1, k }
}

fn seq_word(i: usize) -> String {
    format!("word{i}")
}

fn seq_script(levels: [usize; 6]) -> MockScript {
    let mut s = MockScript::new()
        .on(Role::Generate, WILDCARD, seq_word(0))
        .on_seq(Role::Revise, WILDCARD, (1..6).map(seq_word))
        .on(Role::Critique, WILDCARD, "This word leans on a stereotype.");
    for (i, l) in levels.iter().enumerate() {
        let (b, u) = SEQ_LEVELS[*l];
        s = s.score(CTX, &seq_word(i), b, u);
    }
    s
}

// -------------------------------------------------------- Constitutional

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    /// Violation whose revision beats everything so far.
    Better,
    /// Violation whose revision is worse than the initial word.
    Worse,
    Clean,
    /// Unreadable audit; read as clean after the retry budget.
    Garbage,
}

/// All audit patterns of depth <= 4: violations, then an optional terminal
/// clean or unreadable audit.
pub fn audit_patterns() -> Vec<Vec<Round>> {
    let mut out = Vec::new();
    for depth in 0..=4usize {
        for bits in 0..(1u32 << depth) {
            let rounds: Vec<Round> =
                (0..depth).map(|i| if bits >> i & 1 == 1 { Round::Better } else { Round::Worse }).collect();
            if depth < 4 {
                for end in [Round::Clean, Round::Garbage] {
                    let mut r = rounds.clone();
                    r.push(end);
                    out.push(r);
                }
            } else {
                out.push(rounds);
            }
        }
    }
    out
}

const CONST_K: u32 = 4;
const RETRIES: u32 = 2;

fn revision_score(index: usize, round: Round) -> (f64, f64) {
    match round {
        Round::Better => (0.5 + 0.1 * (index as f64 + 1.0), 0.5),
        _ => (0.1, 0.2),
    }
}

struct ConstOracle {
    chosen: String,
    revisions: u32,
    audit_passes: u32,
    parse_failures: u32,
}

fn const_oracle(pattern: &[Round], judge_free: bool) -> ConstOracle {
    let mut word = "draft".to_string();
    let mut best = oracle_composite(ALPHA, (0.5, 0.5));
    let (mut revisions, mut audit_passes, mut parse_failures) = (0, 0, 0);
    for (round_no, round) in pattern.iter().enumerate().take(CONST_K as usize) {
        match round {
            Round::Clean => {
                audit_passes += 1;
                break;
            }
            Round::Garbage => {
                audit_passes += 1 + RETRIES;
                parse_failures += 1;
                break;
            }
            Round::Better | Round::Worse => {
                audit_passes += 1;
                revisions += 1;
                let candidate = format!("rev{}", round_no + 1);
                let c = oracle_composite(ALPHA, revision_score(round_no, *round));
                if judge_free {
                    word = candidate;
                } else if c > best {
                    best = c;
                    word = candidate;
                }
            }
        }
    }
    ConstOracle { chosen: word, revisions, audit_passes, parse_failures }
}

fn const_script(pattern: &[Round]) -> MockScript {
    let mut audits = Vec::new();
    for (i, round) in pattern.iter().enumerate() {
        match round {
            Round::Clean => audits.push(r#"{"violates": false}"#.to_string()),
            Round::Garbage => audits.push("I would rather not say.".to_string()),
            _ => audits.push(format!(
                r#"{{"violates": true, "principle": "gender", "reason": "round {} stereotype"}}"#,
                i + 1
            )),
        }
    }
    let mut s = MockScript::new()
        .on(Role::Generate, WILDCARD, "draft")
        .on_seq(Role::Audit, WILDCARD, audits)
        .on_seq(Role::Revise, WILDCARD, (1..=4).map(|i| format!("rev{i}")))
        .score(CTX, "draft", 0.5, 0.5);
    for (i, round) in pattern.iter().enumerate() {
        let (b, u) = revision_score(i, *round);
        s = s.score(CTX, &format!("rev{}", i + 1), b, u);
    }
    s
}

// ------------------------------------------------------------- criteria

/// Chosen words equal the oracles' for every scripted scenario.
pub fn criterion_1() -> Check {
    let mut scenarios = 0;
    for levels in select_cases() {
        let config = SchemeConfig { n: 3, ..fill_config(SchemeId::Select) };
        let trace = run_fill(SchemeId::Select, select_script(levels), &config)?;
        let expected = ["amber", "birch", "cedar"][select_oracle(levels)];
        ensure!(trace.chosen_word == expected, "select {levels:?}: chose {} expected {expected}", trace.chosen_word);
        scenarios += 1;
    }
    for levels in seq_cases() {
        let config = SchemeConfig { k_max: SEQ_K, tau: SEQ_TAU, ..fill_config(SchemeId::Sequential) };
        let trace = run_fill(SchemeId::Sequential, seq_script(levels), &config)?;
        let oracle = seq_oracle(levels);
        ensure!(
            trace.chosen_word == seq_word(oracle.chosen) && trace.k_actual == oracle.k,
            "sequential {levels:?}: chose {} after {} rounds, expected {} after {}",
            trace.chosen_word,
            trace.k_actual,
            seq_word(oracle.chosen),
            oracle.k
        );
        scenarios += 1;
    }
    for judge_free in [false, true] {
        for pattern in audit_patterns() {
            let config = SchemeConfig {
                k_max: CONST_K,
                parse_retries: RETRIES,
                judge_free_constitutional: judge_free,
                ..fill_config(SchemeId::Constitutional)
            };
            let trace = run_fill(SchemeId::Constitutional, const_script(&pattern), &config)?;
            let oracle = const_oracle(&pattern, judge_free);
            ensure!(
                trace.chosen_word == oracle.chosen
                    && trace.k_actual == oracle.revisions
                    && trace.audit_parse_failures == oracle.parse_failures,
                "constitutional {pattern:?} judge_free={judge_free}: chose {} ({} revisions), expected {} ({})",
                trace.chosen_word,
                trace.k_actual,
                oracle.chosen,
                oracle.revisions
            );
            scenarios += 1;
        }
    }
    Ok(format!("{scenarios} scenarios"))
}

/// Per-step forward-pass identities for every oracle scenario.
pub fn criterion_2() -> Check {
    let mut checked = 0;
    let baseline = run_fill(
        SchemeId::Baseline,
        MockScript::new().on(Role::Generate, WILDCARD, "calm").score(CTX, "calm", 0.9, 0.9),
        &fill_config(SchemeId::Baseline),
    )?;
    ensure!(ledger_of(baseline.cost, AccountingMode::Api) == (1, 0), "baseline cost {:?}", baseline.cost);
    checked += 1;

    for levels in select_cases() {
        let config = SchemeConfig { n: 3, ..fill_config(SchemeId::Select) };
        let trace = run_fill(SchemeId::Select, select_script(levels), &config)?;
        ensure!(ledger_of(trace.cost, AccountingMode::Api) == (3, 3), "select api {:?}", trace.cost);
        ensure!(ledger_of(trace.cost, AccountingMode::Native) == (1, 3), "select native {:?}", trace.cost);
        checked += 1;
    }
    for levels in seq_cases() {
        let config = SchemeConfig { k_max: SEQ_K, tau: SEQ_TAU, ..fill_config(SchemeId::Sequential) };
        let trace = run_fill(SchemeId::Sequential, seq_script(levels), &config)?;
        let k = seq_oracle(levels).k;
        for mode in [AccountingMode::Api, AccountingMode::Native] {
            ensure!(
                ledger_of(trace.cost, mode) == (1 + k, 1 + 2 * k),
                "sequential {levels:?} {mode:?}: {:?} for k={k}",
                trace.cost
            );
        }
        checked += 1;
    }
    for judge_free in [false, true] {
        for pattern in audit_patterns() {
            let config = SchemeConfig {
                k_max: CONST_K,
                parse_retries: RETRIES,
                judge_free_constitutional: judge_free,
                ..fill_config(SchemeId::Constitutional)
            };
            let trace = run_fill(SchemeId::Constitutional, const_script(&pattern), &config)?;
            let o = const_oracle(&pattern, judge_free);
            let fp_j = if judge_free { 0 } else { 1 + o.revisions };
            ensure!(
                ledger_of(trace.cost, AccountingMode::Api) == (1 + o.audit_passes + o.revisions, fp_j),
                "constitutional {pattern:?} judge_free={judge_free}: {:?}",
                trace.cost
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} step ledgers"))
}

fn firing_pattern(words: usize, fires: usize) -> Vec<bool> {
    // spread fires evenly: word i fires when floor((i+1)f/w) > floor(i f/w)
    (0..words).map(|i| (i + 1) * fires / words > i * fires / words).collect()
}

fn gated_open_run(scheme: SchemeId, words: usize, fires: usize, mode: AccountingMode) -> Result<GenerationRun, String> {
    let pattern = firing_pattern(words, fires);
    let gate: Vec<&str> = pattern.iter().map(|f| if *f { "YES" } else { "NO" }).collect();
    let script = MockScript::new()
        .on(Role::Generate, WILDCARD, "steady")
        .on(Role::Candidate, WILDCARD, "steady")
        .on_seq(Role::Gate, WILDCARD, gate)
        .on(Role::ScoreWord, WILDCARD, judge_reply(0.95, 0.9))
        .on(Role::ScoreText, WILDCARD, judge_reply(0.9, 0.9))
        .on(Role::Audit, WILDCARD, r#"{"violates": false}"#);
    let prompt = PromptRecord {
        id: "gate".into(),
        text: "Write about a nurse and a pilot.".into(),
        language: Language::English,
        category: Category::Gender,
        kind: TaskKind::OpenGen,
    };
    let config = ConfigOverrides { t_words: Some(words as u32), ..Default::default() }
        .resolve(TaskKind::OpenGen, scheme)
        .map_err(|e| e.to_string())?;
    let mut g = MockSession::from_script(script.clone());
    let mut j = MockSession::from_script(script);
    let mut gen = Generator::new(&mut g, TaskKind::OpenGen);
    let mut judge = Judge::new(&mut j);
    let run = generate_open(&prompt, scheme, &config, &mut gen, &mut judge, &Constitution::default(), mode)
        .map_err(|e| e.to_string())?;
    ensure!(run.is_completed(), "{scheme} run failed: {:?}", run.status);
    ensure!(run.gate_fire_count as usize == fires, "{scheme}: {} fires, scripted {fires}", run.gate_fire_count);
    Ok(run)
}

/// Gated overhead arithmetic and a measured run against it.
pub fn criterion_3() -> Check {
    for delta in [0.0, 1.0, 2.5, 7.0] {
        ensure!(expected_gated_overhead(0.0, delta) == Ok(2.0), "phi=0 delta={delta}");
    }
    ensure!(expected_gated_overhead(1.0, 3.0) == Ok(5.0), "(1, 3)");
    ensure!(expected_gated_overhead(0.13, 2.0) == Ok(2.26), "(0.13, 2) = {:?}", expected_gated_overhead(0.13, 2.0));
    let exact = expected_gated_overhead(Exact::new(13, 100), Exact::from_integer(2));
    ensure!(exact == Ok(Exact::new(226, 100)), "exact (13/100, 2) = {exact:?}");

    // per-fire generator cost: Select reuses the gate candidate and asks for
    // n-1 more; Sequential stops at once (bias over tau) and regenerates
    let mut detail = Vec::new();
    for (scheme, delta) in [(SchemeId::SelectOpt, 2.0), (SchemeId::SequentialOpt, 1.0)] {
        let run = gated_open_run(scheme, 100, 13, AccountingMode::Api)?;
        let phi: f64 = measure_firing_rate(&run).map_err(|e| e.to_string())?;
        let r_g = run.ledger.ratios::<f64>().map_err(|e| e.to_string())?.r_g;
        let predicted = expected_gated_overhead(phi, delta).map_err(|e| e.to_string())?;
        ensure!((r_g - predicted).abs() < 1e-12, "{scheme}: measured R_G {r_g}, predicted {predicted}");
        detail.push(format!("{scheme} R_G={r_g:.2}"));
    }
    Ok(detail.join(", "))
}

/// Firing rates 13/100 and 191/200 read back exactly.
pub fn criterion_4() -> Check {
    for (words, fires, expected) in [(100, 13, 0.13), (200, 191, 0.955)] {
        let run = gated_open_run(SchemeId::SelectOpt, words, fires, AccountingMode::Native)?;
        let phi: f64 = measure_firing_rate(&run).map_err(|e| e.to_string())?;
        ensure!(phi == expected, "phi {phi} != {expected}");
        let exact: Exact = measure_firing_rate(&run).map_err(|e| e.to_string())?;
        ensure!(exact == Exact::new(fires as i64, words as i64), "exact phi {exact}");
    }
    Ok("0.13 and 0.955".into())
}

/// Composite score arithmetic and its projections.
pub fn criterion_5() -> Check {
    let half = CompositeWeights::new(0.5).map_err(|e| e.to_string())?;
    let s = JudgeScore::new(0.916, 0.988).map_err(|e| e.to_string())?;
    let c = composite_score(s, half);
    ensure!((c - 0.952).abs() < 1e-12 && format!("{c:.3}") == "0.952", "composite {c}");
    let exact = debias_core::score::Score::new(Exact::new(916, 1000), Exact::new(988, 1000)).unwrap();
    let exact_c = composite_score(exact, debias_core::score::Weights::new(Exact::new(1, 2)).unwrap());
    ensure!(exact_c == Exact::new(952, 1000), "exact composite {exact_c}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let s = JudgeScore::new(rng.gen(), rng.gen()).unwrap();
        ensure!(composite_score(s, CompositeWeights::new(1.0).unwrap()) == s.bias(), "alpha=1 on {s:?}");
        ensure!(composite_score(s, CompositeWeights::new(0.0).unwrap()) == s.utility(), "alpha=0 on {s:?}");
    }
    Ok("0.952".into())
}

// ----------------------------------------------------------- aggregation

pub fn random_results(rng: &mut ChaCha8Rng, count: usize) -> Vec<RunResult> {
    let models = ["m-a", "m-b"];
    let schemes = [SchemeId::Baseline, SchemeId::Select, SchemeId::SequentialOpt];
    let languages = [Language::English, Language::Urdu];
    let kinds = [TaskKind::FillIn, TaskKind::OpenGen];
    (0..count)
        .map(|i| {
            let mode = if rng.gen_bool(0.5) { AccountingMode::Api } else { AccountingMode::Native };
            let mut ledger = OverheadLedger::new(mode);
            let steps = rng.gen_range(1..6);
            for _ in 0..steps {
                ledger.push(StepCost {
                    gen_calls: rng.gen_range(1..4),
                    candidate_calls: rng.gen_range(0..5),
                    candidate_batches: rng.gen_range(0..2),
                    judge_calls: rng.gen_range(0..6),
                });
            }
            let failed = rng.gen_bool(0.15);
            let scheme = schemes[rng.gen_range(0..schemes.len())];
            RunResult {
                model: models[rng.gen_range(0..2)].into(),
                scheme,
                prompt_id: format!("p{i}"),
                language: languages[rng.gen_range(0..2)],
                category: Category::ALL[rng.gen_range(0..Category::ALL.len())],
                kind: kinds[rng.gen_range(0..2)],
                status: if failed {
                    debias_core::opengen::RunStatus::Failed { kind: "JudgeParseFailure".into(), message: "x".into() }
                } else {
                    debias_core::opengen::RunStatus::Completed
                },
                score: (!failed).then(|| JudgeScore::new(rng.gen(), rng.gen()).unwrap()),
                words: (0..steps).map(|s| format!("w{s}")).collect(),
                step_traces: Vec::new(),
                ledger,
                gate_fires: if scheme.is_gated() { rng.gen_range(0..=steps as u32) } else { 0 },
                metering_j: 1,
                failed_step: None,
            }
        })
        .collect()
}

type ReKey = (String, String, String, String, String);

#[derive(Default)]
struct ReSums {
    n: usize,
    bias: f64,
    utility: f64,
    composite: f64,
    r_g: f64,
    r_j: f64,
}

/// Independent re-reader: walks the persisted JSON lines by hand.
fn reread_means(jsonl: &str, alpha: f64) -> Result<BTreeMap<ReKey, ReSums>, String> {
    let mut sums: BTreeMap<ReKey, ReSums> = BTreeMap::new();
    for line in jsonl.lines() {
        let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let text = |k: &str| v[k].as_str().unwrap_or_default().to_string();
        if v["status"]["status"] != "completed" || v["score"].is_null() {
            continue;
        }
        let bias = v["score"]["bias"].as_f64().ok_or("bias")?;
        let utility = v["score"]["utility"].as_f64().ok_or("utility")?;
        let native = v["ledger"]["accounting_mode"] == "native";
        let steps = v["ledger"]["steps"].as_array().ok_or("steps")?;
        let (mut g, mut j) = (0u64, 0u64);
        for s in steps {
            let f = |k: &str| s[k].as_u64().unwrap_or(0);
            g += f("gen_calls") + if native { f("candidate_batches") } else { f("candidate_calls") };
            j += f("judge_calls");
        }
        let t = steps.len() as f64;
        for category in [text("category"), "all".to_string()] {
            let key = (text("model"), text("scheme"), text("kind"), text("language"), category);
            let e = sums.entry(key).or_default();
            e.n += 1;
            e.bias += bias;
            e.utility += utility;
            e.composite += alpha * bias + (1.0 - alpha) * utility;
            e.r_g += g as f64 / t;
            e.r_j += j as f64 / t;
        }
    }
    Ok(sums)
}

pub fn persist(dir: &Path, results: &[RunResult]) -> Result<String, String> {
    let mut store = ResultStore::open(dir, "random").map_err(|e| e.to_string())?;
    for r in results {
        store.append(r.clone()).map_err(|e| e.to_string())?;
    }
    std::fs::read_to_string(dir.join("results.jsonl")).map_err(|e| e.to_string())
}

/// Aggregated means against a re-reader, and the 0.522 CSV rendering.
pub fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let alpha = 0.5;
    let mut compared = 0;
    for size in [1usize, 2, 7, 50, 137, 500] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let results = random_results(&mut rng, size);
        let jsonl = persist(dir.path(), &results)?;
        let loaded = ResultStore::load(dir.path()).map_err(|e| e.to_string())?;
        let report = aggregate(&loaded, CompositeWeights::new(alpha).unwrap());
        let oracle = reread_means(&jsonl, alpha)?;
        for cell in &report.cells {
            let k = &cell.key;
            let key = (
                k.model.clone(),
                k.scheme.to_string(),
                k.kind.to_string(),
                k.language.to_string(),
                k.category.map(|c| c.to_string()).unwrap_or_else(|| "all".into()),
            );
            let s = &cell.stats;
            match oracle.get(&key) {
                None => ensure!(s.n_items == 0 && s.mean_bias.is_none(), "{key:?}: engine has items, oracle none"),
                Some(o) => {
                    ensure!(s.n_items == o.n, "{key:?}: n {} vs {}", s.n_items, o.n);
                    let n = o.n as f64;
                    for (name, got, want) in [
                        ("bias", s.mean_bias, o.bias / n),
                        ("utility", s.mean_utility, o.utility / n),
                        ("composite", s.mean_composite, o.composite / n),
                        ("r_g", s.mean_r_g, o.r_g / n),
                        ("r_j", s.mean_r_j, o.r_j / n),
                    ] {
                        let got = got.ok_or(format!("{key:?}: missing {name}"))?;
                        ensure!((got - want).abs() < 1e-12, "{key:?} {name}: {got} vs {want}");
                    }
                    compared += 1;
                }
            }
        }
        ensure!(
            oracle.keys().all(|k| report.cells.iter().any(|c| c.key.model == k.0 && c.key.scheme.to_string() == k.1)),
            "oracle cell missing from report"
        );
    }

    let fixture: Vec<RunResult> = [0.5, 0.52, 0.546]
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut r = random_results(&mut ChaCha8Rng::seed_from_u64(i as u64), 1).remove(0);
            r.model = "fixture".into();
            r.scheme = SchemeId::Baseline;
            r.kind = TaskKind::FillIn;
            r.language = Language::English;
            r.prompt_id = format!("f{i}");
            r.status = debias_core::opengen::RunStatus::Completed;
            r.score = Some(JudgeScore::new(*b, 0.9).unwrap());
            r
        })
        .collect();
    let csv = render_csv(&aggregate(&fixture, CompositeWeights::new(alpha).unwrap()));
    let pooled = csv
        .lines()
        .find(|l| l.starts_with("fixture,baseline,fill_in,english,all,"))
        .ok_or("pooled fixture row missing")?;
    ensure!(pooled.split(',').nth(7) == Some("0.522"), "row {pooled}");
    Ok(format!("{compared} cells within 1e-12; fixture row reads 0.522"))
}

// ----------------------------------------------------------- determinism

/// A script exercising every role with varied replies.
pub fn matrix_script(flavour: u64) -> MockScript {
    let mut rng = ChaCha8Rng::seed_from_u64(flavour);
    let words = ["kind", "able", "firm", "bold", "wise", "fair", "calm", "keen"];
    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
        (0..n).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
    };
    let scores: Vec<String> = (0..12)
        .map(|_| judge_reply((rng.gen_range(0..=100) as f64) / 100.0, (rng.gen_range(0..=100) as f64) / 100.0))
        .collect();
    let audits = vec![
        r#"{"violates": true, "principle": "gender", "reason": "gendered assumption"}"#.to_string(),
        r#"{"violates": false}"#.to_string(),
    ];
    MockScript::new()
        .on_seq(Role::Generate, WILDCARD, pick(&mut rng, 9))
        .on_seq(Role::Candidate, WILDCARD, pick(&mut rng, 11))
        .on_seq(Role::Revise, WILDCARD, pick(&mut rng, 7))
        .on_seq(Role::Gate, WILDCARD, ["YES", "NO", "no.", "maybe", "NO"])
        .on_seq(Role::Audit, WILDCARD, audits)
        .on(Role::Critique, WILDCARD, "Reads as a stereotype.")
        .on_seq(Role::ScoreWord, WILDCARD, scores)
        .on(Role::ScoreText, WILDCARD, judge_reply(0.8, 0.85))
}

pub fn mixed_dataset() -> Dataset {
    let mut text = fill_in_sample().to_jsonl();
    text.push_str(&open_gen_fixture().to_jsonl());
    Dataset::parse("mixed", &text).expect("fixtures are valid")
}

pub fn mock_matrix(dataset: Dataset, parallelism: usize) -> RunMatrix {
    RunMatrix {
        generators: vec![
            NamedBackend::new("mock-a", Arc::new(MockBackend::new("mock-a", matrix_script(1)))),
            NamedBackend::new("mock-b", Arc::new(MockBackend::new("mock-b", matrix_script(2)))),
        ],
        judge: Arc::new(MockBackend::new("judge", matrix_script(3))),
        schemes: SchemeId::ALL.to_vec(),
        dataset,
        overrides: ConfigOverrides { t_words: Some(4), ..Default::default() },
        accounting_mode: AccountingMode::Api,
        seed: 11,
        parallelism,
        constitution: Constitution::default(),
        temperatures: RoleTemperatures::default(),
    }
}

/// Runs `matrix` into `dir`, optionally stopping after `limit` cells.
pub fn run_into(matrix: &RunMatrix, dir: &Path, limit: Option<usize>) -> Result<usize, String> {
    let mut store = ResultStore::open(dir, &matrix.fingerprint()).map_err(|e| e.to_string())?;
    let summary = run_matrix(matrix, &mut store, MatrixOptions { limit }).map_err(|e| e.to_string())?;
    Ok(summary.executed)
}

/// Store and rendered reports as bytes.
pub fn snapshot(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let results = ResultStore::load(dir).map_err(|e| e.to_string())?;
    let report = aggregate(&results, CompositeWeights::new(0.5).unwrap());
    let mut out = vec![
        ("results.jsonl".to_string(), std::fs::read(dir.join("results.jsonl")).map_err(|e| e.to_string())?),
        ("report.csv".to_string(), render_csv(&report).into_bytes()),
    ];
    for (name, doc) in plot_documents(&report) {
        out.push((name.to_string(), serde_json::to_vec_pretty(&doc).unwrap()));
    }
    Ok(out)
}

/// Repeat runs, parallel runs and interrupted runs agree byte for byte.
pub fn criterion_7() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let reference = root.path().join("reference");
    let total = run_into(&mock_matrix(mixed_dataset(), 1), &reference, None)?;
    let expected = snapshot(&reference)?;

    let again = root.path().join("again");
    run_into(&mock_matrix(mixed_dataset(), 1), &again, None)?;
    ensure!(snapshot(&again)? == expected, "repeat run differs");
    let parallel = root.path().join("parallel");
    run_into(&mock_matrix(mixed_dataset(), 4), &parallel, None)?;
    ensure!(snapshot(&parallel)? == expected, "parallel run differs");

    let mut prefixes: Vec<usize> = (0..=total).step_by(13).collect();
    prefixes.extend([1, total - 1, total]);
    for (i, prefix) in prefixes.iter().enumerate() {
        let dir = root.path().join(format!("resume-{i}"));
        run_into(&mock_matrix(mixed_dataset(), 1 + i % 3), &dir, Some(*prefix))?;
        if i % 2 == 0 {
            // simulate a crash mid-write
            let mut f = std::fs::OpenOptions::new().append(true).open(dir.join("results.jsonl")).unwrap();
            std::io::Write::write_all(&mut f, br#"{"model":"mock-a","sch"#).unwrap();
        }
        run_into(&mock_matrix(mixed_dataset(), 1), &dir, None)?;
        ensure!(snapshot(&dir)? == expected, "resume after {prefix} cells differs");
        ensure!(run_into(&mock_matrix(mixed_dataset(), 1), &dir, None)? == 0, "rerun after {prefix} did work");
    }
    Ok(format!("{total} cells, {} resume points", prefixes.len()))
}

// ---------------------------------------------------------------- parsers

pub enum Expect {
    Score(f64, f64),
    Err(fn(&ParseError) -> bool),
}

pub fn judge_cases() -> Vec<(&'static str, Expect)> {
    use Expect::*;
    vec![
        (r#"{"bias": 0.8, "utility": 0.9}"#, Score(0.8, 0.9)),
        ("```json\n{\"bias\": 0.7, \"utility\": 0.6}\n```", Score(0.7, 0.6)),
        (r#"Sure! Here is my rating: {"bias": 1, "utility": 0} Hope that helps."#, Score(1.0, 0.0)),
        (r#"{"utility": 0.25, "bias": 0.75, "reason": "fine"}"#, Score(0.75, 0.25)),
        (r#"{"bias": 0.5, "utility": 0.5, "note": {"nested": true}}"#, Score(0.5, 0.5)),
        (r#"{not json} then {"bias": 0.4, "utility": 0.3}"#, Score(0.4, 0.3)),
        ("{\n  \"bias\" : 0.9 ,\n  \"utility\" : 1.0\n}", Score(0.9, 1.0)),
        (r#"{"bias": 1e-1, "utility": 5E-1}"#, Score(0.1, 0.5)),
        (r#"{"bias": 1.2, "utility": 0.9}"#, Err(|e| matches!(e, ParseError::OutOfRange { .. }))),
        (r#"{"bias": -0.1, "utility": 0.9}"#, Err(|e| matches!(e, ParseError::OutOfRange { .. }))),
        (r#"{"bias": 0.5}"#, Err(|e| matches!(e, ParseError::MissingField(_)))),
        (r#"{"Bias": 0.5, "Utility": 0.5}"#, Err(|e| matches!(e, ParseError::MissingField(_)))),
        (r#"{"bias": "high", "utility": 0.5}"#, Err(|e| matches!(e, ParseError::MissingField(_)))),
        ("bias: 0.8, utility: 0.9", Err(|e| matches!(e, ParseError::NoJsonFound))),
        ("", Err(|e| matches!(e, ParseError::NoJsonFound))),
        ("I cannot rate this.", Err(|e| matches!(e, ParseError::NoJsonFound))),
        (r#"[{"bias": 0.5, "utility": 0.5}]"#, Score(0.5, 0.5)),
        (r#"{"bias": null, "utility": 0.5}"#, Err(|e| matches!(e, ParseError::MissingField(_)))),
    ]
}

pub fn gate_cases() -> Vec<(&'static str, bool, bool)> {
    // (reply, fired, parse_failure)
    vec![
        ("YES", true, false),
        ("NO", false, false),
        ("yes", true, false),
        ("No.", false, false),
        ("  **NO**", false, false),
        ("Yes, the word is stereotyped.", true, false),
        ("no - the word is neutral", false, false),
        ("\"YES\"", true, false),
        ("Answer: NO", true, true),
        ("maybe", true, true),
        ("", true, true),
        ("Nope", true, true),
        ("YESNO", true, true),
        ("42", true, true),
        ("```\nNO\n```", false, false),
    ]
}

pub fn audit_cases() -> Vec<(&'static str, Option<bool>)> {
    vec![
        (r#"{"violates": false}"#, Some(false)),
        (r#"{"violates": true, "principle": "gender", "reason": "assumes men lead"}"#, Some(true)),
        ("```json\n{\"violates\": \"TRUE\", \"reason\": \"ageist\"}\n```", Some(true)),
        (r#"Checking... {"violates": "false", "principle": null}"#, Some(false)),
        (r#"{"violates": true}"#, None),
        (r#"{"violates": true, "reason": "   "}"#, None),
        (r#"{"violates": "perhaps"}"#, None),
        ("No violation found.", None),
    ]
}

/// Parser suite plus randomised garbage through the gate.
pub fn criterion_8() -> Check {
    let mut count = 0;
    for (raw, expect) in judge_cases() {
        let got = parse_judge_response(raw);
        match expect {
            Expect::Score(b, u) => ensure!(got == Ok(JudgeScore::new(b, u).unwrap()), "judge {raw:?}: {got:?}"),
            Expect::Err(pred) => ensure!(matches!(&got, Err(e) if pred(e)), "judge {raw:?}: {got:?}"),
        }
        count += 1;
    }
    for (raw, fired, failure) in gate_cases() {
        let v = gate_verdict(raw);
        ensure!(v.fired == fired && v.parse_failure == failure, "gate {raw:?}: {v:?}");
        count += 1;
    }
    for (raw, expect) in audit_cases() {
        let got = parse_audit_response(raw);
        match expect {
            Some(violates) => ensure!(matches!(&got, Ok(a) if a.violates == violates), "audit {raw:?}: {got:?}"),
            None => ensure!(got.is_err(), "audit {raw:?} accepted: {got:?}"),
        }
        count += 1;
    }
    ensure!(count >= 30, "only {count} adversarial cases");

    // unreadable audits end the loop as clean after the retries
    let script = MockScript::new()
        .on(Role::Generate, WILDCARD, "draft")
        .on(Role::Audit, WILDCARD, "no comment")
        .score(CTX, "draft", 0.5, 0.5);
    let trace = run_fill(SchemeId::Constitutional, script, &fill_config(SchemeId::Constitutional))?;
    ensure!(
        trace.audits == vec![AuditResult::clean()] && trace.audit_parse_failures == 1,
        "audit fallback {:?}",
        trace.audits
    );

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyzYESNO .,!?{}\"'-_\n0123456789".chars().collect();
    let mut garbage = 0;
    while garbage < 2000 {
        let len = rng.gen_range(0..24);
        let s: String = (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        let token: String = s.chars().skip_while(|c| !c.is_alphabetic()).take_while(|c| c.is_alphabetic()).collect();
        if matches!(token.to_lowercase().as_str(), "yes" | "no") {
            continue;
        }
        ensure!(gate_verdict(&s).fired, "garbage {s:?} did not fire");
        garbage += 1;
    }
    Ok(format!("{count} adversarial replies, {garbage} random gate replies"))
}

// -------------------------------------------------------------- contexts

fn context_script() -> MockScript {
    let words = ["Every", "morning", "the", "crew", "checks", "each", "gauge", "twice"];
    let scores: Vec<String> =
        [(0.9, 0.8), (0.4, 0.9), (0.7, 0.7), (0.95, 0.6)].iter().map(|(b, u)| judge_reply(*b, *u)).collect();
    MockScript::new()
        .on_seq(Role::Generate, WILDCARD, words)
        .on_seq(Role::Candidate, WILDCARD, ["quietly", "carefully", "then"])
        .on_seq(Role::Revise, WILDCARD, ["plainly", "again"])
        .on_seq(Role::Gate, WILDCARD, ["NO", "YES", "NO", "unsure"])
        .on_seq(
            Role::Audit,
            WILDCARD,
            [r#"{"violates": true, "principle": "age", "reason": "ageist"}"#, r#"{"violates": false}"#],
        )
        .on(Role::Critique, WILDCARD, "Too loaded.")
        .on_seq(Role::ScoreWord, WILDCARD, scores)
        .on(Role::ScoreText, WILDCARD, judge_reply(0.9, 0.9))
}

/// Rebuilding each step context from the trace reproduces the requests.
pub fn criterion_9() -> Check {
    let prompt = open_gen_fixture().records[0].clone();
    let mut steps_checked = 0;
    for scheme in SchemeId::ALL {
        let script = context_script();
        let config = ConfigOverrides { t_words: Some(20), ..Default::default() }
            .resolve(TaskKind::OpenGen, scheme)
            .map_err(|e| e.to_string())?;
        let mut g = MockSession::from_script(script.clone());
        let mut j = MockSession::from_script(script);
        let run = {
            let mut gen = Generator::new(&mut g, TaskKind::OpenGen);
            let mut judge = Judge::new(&mut j);
            generate_open(&prompt, scheme, &config, &mut gen, &mut judge, &Constitution::default(), AccountingMode::Api)
                .map_err(|e| e.to_string())?
        };
        ensure!(run.is_completed() && run.words.len() == 20, "{scheme}: {:?}", run.status);
        let contexts = step_contexts(&prompt.text, &run.words);
        let (mut gi, mut ji) = (0, 0);
        for (i, (c, step)) in contexts.iter().zip(&run.ledger.steps).enumerate() {
            let gen_reqs = &g.log()[gi..gi + (step.gen_calls + step.candidate_calls) as usize];
            let judge_reqs = &j.log()[ji..ji + step.judge_calls as usize];
            gi += gen_reqs.len();
            ji += judge_reqs.len();
            let first = gen_reqs.first().ok_or(format!("{scheme} step {i}: no generator request"))?;
            ensure!(
                first.key == *c && first.prompt() == build_generate_prompt(TaskKind::OpenGen, c),
                "{scheme} step {i}: first request does not match the rebuilt context"
            );
            let prefix = format!("{c} | ");
            for r in gen_reqs.iter().chain(judge_reqs) {
                ensure!(
                    r.key == *c || r.key.starts_with(&prefix),
                    "{scheme} step {i}: {:?} request keyed {:?}",
                    r.role,
                    r.key
                );
                ensure!(r.prompt().contains(c.as_str()), "{scheme} step {i}: {:?} prompt lacks context", r.role);
            }
            steps_checked += 1;
        }
        ensure!(gi == g.requests_on(Side::Generator), "{scheme}: unaccounted generator requests");
        let last = j.log().last().ok_or("no judge requests")?;
        ensure!(
            last.role == Role::ScoreText && last.key == context_after(&prompt.text, &run.words),
            "{scheme}: final passage mismatch"
        );
    }
    Ok(format!("{steps_checked} steps"))
}

/// Live round trip through every single-word scheme. Skipped unless
/// `DEBIAS_API_KEY` and `DEBIAS_MODEL` are set.
pub fn criterion_10() -> Option<Check> {
    use debias_core::model::http::{BackendConfig, HttpBackend};
    use debias_core::model::Backend;
    let config = BackendConfig::from_env();
    if config.api_key.is_empty() || config.model_name.is_empty() {
        return None;
    }
    Some((|| {
        let backend = HttpBackend::new(config).map_err(|e| e.to_string())?;
        let prompt = &fill_in_sample().records[0];
        for scheme in SchemeId::SINGLE_WORD {
            let sc = SchemeConfig::defaults_for(TaskKind::FillIn, scheme);
            let mut g = backend.open_session();
            let mut j = backend.open_session();
            let mut gen = Generator::new(g.as_mut(), TaskKind::FillIn);
            let mut judge = Judge::new(j.as_mut());
            let trace = run_step(scheme, &prompt.text, &mut gen, &mut judge, &sc, &Constitution::default(), true)
                .map_err(|e| format!("{scheme}: {}", e.error))?;
            let score = trace.chosen_score.ok_or(format!("{scheme}: no score"))?;
            ensure!(
                (0.0..=1.0).contains(&score.bias()) && (0.0..=1.0).contains(&score.utility()),
                "{scheme}: {score:?}"
            );
        }
        Ok("4 schemes live".to_string())
    })())
}
