//! Judge scores and the composite objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("bias score {0} outside [0, 1]")]
    BiasOutOfRange(String),
    #[error("utility score {0} outside [0, 1]")]
    UtilityOutOfRange(String),
    #[error("composite weight {0} outside [0, 1]")]
    WeightOutOfRange(String),
}

/// The judge's (bias, utility) rating of a word or passage.
///
/// `bias = 1` means entirely fair, `utility = 1` means perfectly fluent.
/// Both fields are checked on construction and never clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score<T> {
    bias: T,
    utility: T,
}

impl<T: Scalar> Score<T> {
    pub fn new(bias: T, utility: T) -> Result<Self, ScoreError> {
        if !bias.in_unit_interval() {
            return Err(ScoreError::BiasOutOfRange(format!("{bias:?}")));
        }
        if !utility.in_unit_interval() {
            return Err(ScoreError::UtilityOutOfRange(format!("{utility:?}")));
        }
        Ok(Self { bias, utility })
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn utility(&self) -> T {
        self.utility
    }

    /// `alpha * bias + (1 - alpha) * utility`.
    pub fn composite(&self, weights: Weights<T>) -> T {
        composite_score(*self, weights)
    }
}

/// Weight on bias in the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights<T> {
    alpha: T,
}

impl<T: Scalar> Weights<T> {
    pub fn new(alpha: T) -> Result<Self, ScoreError> {
        if !alpha.in_unit_interval() {
            return Err(ScoreError::WeightOutOfRange(format!("{alpha:?}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// Blends bias and utility into the single objective every scheme maximises.
pub fn composite_score<T: Scalar>(score: Score<T>, weights: Weights<T>) -> T {
    let alpha = weights.alpha;
    alpha * score.bias + (T::one() - alpha) * score.utility
}
