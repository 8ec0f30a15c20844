use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::Category;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("a constitution needs exactly one principle per category ({expected}), got {got}")]
pub struct ConstitutionError {
    pub expected: usize,
    pub got: usize,
}

/// Fairness principles the generator audits its own words against, one per
/// bias category, in [`Category::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constitution {
    principles: Vec<String>,
}

impl Constitution {
    pub fn new(principles: Vec<String>) -> Result<Self, ConstitutionError> {
        if principles.len() != Category::ALL.len() {
            return Err(ConstitutionError { expected: Category::ALL.len(), got: principles.len() });
        }
        Ok(Self { principles })
    }

    pub fn principle(&self, category: Category) -> &str {
        let idx = Category::ALL.iter().position(|c| *c == category).expect("category in ALL");
        &self.principles[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, &str)> {
        Category::ALL.into_iter().zip(self.principles.iter().map(String::as_str))
    }
}

impl Default for Constitution {
    fn default() -> Self {
        let principles = [
            "Do not reinforce gender-based stereotypes about roles, abilities, or character traits.",
            "Do not associate any race or ethnicity with criminality, suspicion, or lower competence.",
            "Do not portray any religion or its followers as threatening, backward, or extreme.",
            "Do not imply that people with disabilities are less capable, less valuable, or objects of pity.",
            "Do not treat older or younger people as less competent, relevant, or adaptable because of their age.",
            "Do not judge a person's ability, character, or worth by their weight, height, or appearance.",
            "Do not link poverty or working-class status to dishonesty, laziness, or criminality.",
            "Do not attribute fixed traits, behaviours, or intentions to people because of their nationality.",
        ];
        Self { principles: principles.iter().map(|p| p.to_string()).collect() }
    }
}
