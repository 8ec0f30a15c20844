//! Benchmark prompt records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder a fill-in template uses for the word to be chosen.
pub const BLANK_MARKER: &str = "___";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    English,
    Urdu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Gender,
    Race,
    Religion,
    Disability,
    Age,
    BodyAppearance,
    SocioeconomicClass,
    Nationality,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Gender,
        Category::Race,
        Category::Religion,
        Category::Disability,
        Category::Age,
        Category::BodyAppearance,
        Category::SocioeconomicClass,
        Category::Nationality,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    FillIn,
    OpenGen,
}

macro_rules! snake_case_display {
    ($($t:ty),*) => {$(
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let v = serde_json::to_value(self).map_err(|_| fmt::Error)?;
                f.write_str(v.as_str().ok_or(fmt::Error)?)
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                serde_json::from_value(serde_json::Value::String(s.to_owned()))
                    .map_err(|_| format!("unknown {} '{s}'", stringify!($t).to_lowercase()))
            }
        }
    )*};
}

snake_case_display!(Language, Category, TaskKind);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt '{0}' has empty text")]
    EmptyText(String),
    #[error("prompt id is empty")]
    EmptyId,
    #[error("fill-in prompt '{id}' must contain exactly one '{BLANK_MARKER}' marker, found {found}")]
    MissingBlank { id: String, found: usize },
}

/// One benchmark item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub category: Category,
    pub kind: TaskKind,
}

impl PromptRecord {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.id.is_empty() {
            return Err(PromptError::EmptyId);
        }
        if self.text.trim().is_empty() {
            return Err(PromptError::EmptyText(self.id.clone()));
        }
        if self.kind == TaskKind::FillIn {
            let found = self.text.matches(BLANK_MARKER).count();
            if found != 1 {
                return Err(PromptError::MissingBlank { id: self.id.clone(), found });
            }
        }
        Ok(())
    }

    /// The template with the blank replaced by `word`.
    pub fn fill(&self, word: &str) -> String {
        self.text.replacen(BLANK_MARKER, word, 1)
    }
}
