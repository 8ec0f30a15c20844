//! Dataset files: one JSON prompt record per line.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{Category, Language, PromptError, PromptRecord};

const OPEN_GEN_FIXTURE: &str = include_str!("../../data/open_gen_prompts.jsonl");
const FILL_IN_FIXTURE: &str = include_str!("../../data/fill_in_sample.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineIssue {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id '{id}' (first seen on line {first})")]
    DuplicateId { line: usize, id: String, first: usize },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: PromptError },
}

impl LineIssue {
    pub fn line(&self) -> usize {
        match self {
            LineIssue::Parse { line, .. } | LineIssue::DuplicateId { line, .. } | LineIssue::Invalid { line, .. } => {
                *line
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("{} invalid line(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<LineIssue>),
    #[error("dataset has no records")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<PromptRecord>,
    /// SHA-256 of the source bytes, hex encoded.
    pub checksum: String,
}

impl Dataset {
    /// Parses and validates every line, collecting all problems before failing.
    pub fn parse(name: &str, contents: &str) -> Result<Self, DatasetError> {
        let mut records = Vec::new();
        let mut issues = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (idx, raw) in contents.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: PromptRecord = match serde_json::from_str(raw) {
                Ok(r) => r,
                Err(e) => {
                    issues.push(LineIssue::Parse { line, message: e.to_string() });
                    continue;
                }
            };
            if let Err(source) = record.validate() {
                issues.push(LineIssue::Invalid { line, source });
                continue;
            }
            if let Some(&first) = seen.get(&record.id) {
                issues.push(LineIssue::DuplicateId { line, id: record.id.clone(), first });
                continue;
            }
            seen.insert(record.id.clone(), line);
            records.push(record);
        }
        if !issues.is_empty() {
            return Err(DatasetError::Invalid(issues));
        }
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        Ok(Self { name: name.to_string(), records, checksum: hex::encode(Sha256::digest(contents.as_bytes())) })
    }

    /// Serialises back to the line format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    /// Record counts per (category, language).
    pub fn balance(&self) -> Balance {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry((r.category, r.language)).or_insert(0) += 1;
        }
        Balance { counts }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let contents = std::fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
    Dataset::parse(&name, &contents)
}

/// The ten open-generation prompts, one file line each.
pub fn open_gen_fixture() -> Dataset {
    Dataset::parse("open_gen_prompts", OPEN_GEN_FIXTURE).expect("bundled fixture is valid")
}

/// Synthetic fill-in sample: one template per category per language. Not the
/// original benchmark items.
pub fn fill_in_sample() -> Dataset {
    Dataset::parse("fill_in_sample", FILL_IN_FIXTURE).expect("bundled fixture is valid")
}

pub fn fixture_text(name: &str) -> Option<&'static str> {
    match name {
        "open_gen_prompts" => Some(OPEN_GEN_FIXTURE),
        "fill_in_sample" => Some(FILL_IN_FIXTURE),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Balance {
    pub counts: BTreeMap<(Category, Language), usize>,
}

impl Balance {
    pub fn is_balanced(&self) -> bool {
        let mut values = self.counts.values();
        match values.next() {
            Some(first) => values.all(|v| v == first),
            None => true,
        }
    }
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ((category, language), n) in &self.counts {
            writeln!(f, "{category:<20} {language:<8} {n}")?;
        }
        Ok(())
    }
}
