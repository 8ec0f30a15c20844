//! Roll-up of run results into per-cell means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::result::RunResult;
use crate::config::SchemeId;
use crate::prompt::{Category, Language, TaskKind};
use crate::{CompositeWeights, OverheadRatios};

/// Aggregation cell. `category: None` pools all categories.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub model: String,
    pub scheme: SchemeId,
    pub kind: TaskKind,
    pub language: Language,
    pub category: Option<Category>,
}

/// Means over successful items. Score and ratio means are `None` when the
/// cell has no successful item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n_items: usize,
    pub n_failures: usize,
    pub mean_bias: Option<f64>,
    pub mean_utility: Option<f64>,
    pub mean_composite: Option<f64>,
    pub mean_r_g: Option<f64>,
    pub mean_r_j: Option<f64>,
    pub mean_r: Option<f64>,
    /// Pooled gate firing rate, gated schemes only.
    pub gate_phi: Option<f64>,
    /// Generator and judge passes spent by failed items.
    pub failed_fp_g: u64,
    pub failed_fp_j: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub key: CellKey,
    pub stats: CellStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub alpha_report: f64,
    /// Sorted by key.
    pub cells: Vec<Cell>,
}

impl AggregateReport {
    pub fn get(&self, key: &CellKey) -> Option<&CellStats> {
        self.cells.binary_search_by(|c| c.key.cmp(key)).ok().map(|i| &self.cells[i].stats)
    }
}

#[derive(Default)]
struct Acc {
    n_items: usize,
    n_failures: usize,
    bias: f64,
    utility: f64,
    composite: f64,
    r_g: f64,
    r_j: f64,
    r: f64,
    fires: u64,
    words: u64,
    failed_fp_g: u64,
    failed_fp_j: u64,
    gated: bool,
}

impl Acc {
    fn add(&mut self, r: &RunResult, weights: CompositeWeights) {
        self.gated = r.scheme.is_gated();
        let ratios: Option<OverheadRatios> = r.ledger.ratios().ok();
        match (r.is_success(), r.score, ratios) {
            (true, Some(score), Some(ratios)) => {
                self.n_items += 1;
                self.bias += score.bias();
                self.utility += score.utility();
                self.composite += score.composite(weights);
                self.r_g += ratios.r_g;
                self.r_j += ratios.r_j;
                self.r += ratios.r();
                self.fires += u64::from(r.gate_fires);
                self.words += r.words.len() as u64;
            }
            _ => {
                self.n_failures += 1;
                let partial = r.failed_step.map(|m| m.cost);
                self.failed_fp_g +=
                    r.ledger.total_fp_g() + partial.map_or(0, |c| u64::from(c.fp_g(r.ledger.accounting_mode)));
                self.failed_fp_j += r.ledger.total_fp_j() + partial.map_or(0, |c| u64::from(c.fp_j()));
            }
        }
    }

    fn finish(&self) -> CellStats {
        let n = self.n_items as f64;
        let mean = |sum: f64| (self.n_items > 0).then(|| sum / n);
        CellStats {
            n_items: self.n_items,
            n_failures: self.n_failures,
            mean_bias: mean(self.bias),
            mean_utility: mean(self.utility),
            mean_composite: mean(self.composite),
            mean_r_g: mean(self.r_g),
            mean_r_j: mean(self.r_j),
            mean_r: mean(self.r),
            gate_phi: (self.gated && self.words > 0).then(|| self.fires as f64 / self.words as f64),
            failed_fp_g: self.failed_fp_g,
            failed_fp_j: self.failed_fp_j,
        }
    }
}

/// Arithmetic means per (model, scheme, kind, language), pooled and per
/// category. Failed items count toward `n_failures` only.
pub fn aggregate(results: &[RunResult], alpha_report: CompositeWeights) -> AggregateReport {
    let mut cells: BTreeMap<CellKey, Acc> = BTreeMap::new();
    for r in results {
        let pooled =
            CellKey { model: r.model.clone(), scheme: r.scheme, kind: r.kind, language: r.language, category: None };
        let by_category = CellKey { category: Some(r.category), ..pooled.clone() };
        cells.entry(pooled).or_default().add(r, alpha_report);
        cells.entry(by_category).or_default().add(r, alpha_report);
    }
    AggregateReport {
        alpha_report: alpha_report.alpha(),
        cells: cells.into_iter().map(|(key, acc)| Cell { key, stats: acc.finish() }).collect(),
    }
}
