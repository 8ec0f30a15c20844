//! Run-matrix execution over backends × schemes × prompts.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::dataset::Dataset;
use super::result::{CellId, ItemRun, RunResult};
use super::store::{ResultStore, StoreError};
use crate::config::{ConfigError, ConfigOverrides, SchemeId};
use crate::ledger::AccountingMode;
use crate::model::{Backend, Constitution, RoleTemperatures};

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix needs at least one generator backend")]
    NoBackends,
    #[error("matrix needs at least one scheme")]
    NoSchemes,
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("duplicate backend name '{0}'")]
    DuplicateBackend(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Clone)]
pub struct NamedBackend {
    pub name: String,
    pub backend: Arc<dyn Backend>,
}

impl NamedBackend {
    pub fn new(name: impl Into<String>, backend: Arc<dyn Backend>) -> Self {
        Self { name: name.into(), backend }
    }
}

pub struct RunMatrix {
    pub generators: Vec<NamedBackend>,
    pub judge: Arc<dyn Backend>,
    pub schemes: Vec<SchemeId>,
    pub dataset: Dataset,
    pub overrides: ConfigOverrides,
    pub accounting_mode: AccountingMode,
    pub seed: u64,
    pub parallelism: usize,
    pub constitution: Constitution,
    pub temperatures: RoleTemperatures,
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    generators: Vec<&'a str>,
    judge: &'a str,
    schemes: &'a [SchemeId],
    dataset: &'a str,
    dataset_checksum: &'a str,
    overrides: &'a ConfigOverrides,
    accounting_mode: AccountingMode,
    seed: u64,
    constitution: &'a Constitution,
}

impl RunMatrix {
    pub fn validate(&self) -> Result<(), MatrixError> {
        if self.generators.is_empty() {
            return Err(MatrixError::NoBackends);
        }
        if self.schemes.is_empty() {
            return Err(MatrixError::NoSchemes);
        }
        if self.parallelism == 0 {
            return Err(MatrixError::ZeroParallelism);
        }
        let mut names = std::collections::BTreeSet::new();
        for g in &self.generators {
            if !names.insert(g.name.as_str()) {
                return Err(MatrixError::DuplicateBackend(g.name.clone()));
            }
        }
        for prompt in &self.dataset.records {
            for scheme in &self.schemes {
                self.overrides.resolve(prompt.kind, *scheme)?;
            }
        }
        Ok(())
    }

    /// Identifies the work a store belongs to. Parallelism is excluded: it
    /// does not change results.
    pub fn fingerprint(&self) -> String {
        let fp = Fingerprint {
            generators: self.generators.iter().map(|g| g.name.as_str()).collect(),
            judge: self.judge.name(),
            schemes: &self.schemes,
            dataset: &self.dataset.name,
            dataset_checksum: &self.dataset.checksum,
            overrides: &self.overrides,
            accounting_mode: self.accounting_mode,
            seed: self.seed,
            constitution: &self.constitution,
        };
        hex::encode(Sha256::digest(serde_json::to_vec(&fp).expect("fingerprint serialises")))
    }

    /// Every cell as (backend index, scheme, prompt index), shuffled by the seed.
    pub fn work_order(&self) -> Vec<(usize, SchemeId, usize)> {
        let mut cells = Vec::new();
        for g in 0..self.generators.len() {
            for &s in &self.schemes {
                for p in 0..self.dataset.records.len() {
                    cells.push((g, s, p));
                }
            }
        }
        cells.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        cells
    }

    fn cell_id(&self, (g, s, p): (usize, SchemeId, usize)) -> CellId {
        CellId { model: self.generators[g].name.clone(), scheme: s, prompt_id: self.dataset.records[p].id.clone() }
    }

    fn execute_cell(&self, (g, s, p): (usize, SchemeId, usize)) -> RunResult {
        let prompt = &self.dataset.records[p];
        let config = self.overrides.resolve(prompt.kind, s).expect("validated before execution");
        let item = ItemRun {
            model: &self.generators[g].name,
            prompt,
            scheme: s,
            config: &config,
            constitution: &self.constitution,
            mode: self.accounting_mode,
            temperatures: self.temperatures,
        };
        let mut gen_session = self.generators[g].backend.open_session();
        let mut judge_session = self.judge.open_session();
        item.execute(gen_session.as_mut(), judge_session.as_mut())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatrixOptions {
    /// Stop after this many new results.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixSummary {
    pub total_cells: usize,
    pub already_done: usize,
    pub executed: usize,
    pub failed: usize,
    pub remaining: usize,
}

/// Executes all cells not yet in the store, appending results in work order.
/// Cell failures are recorded in their results and never stop the matrix.
pub fn run_matrix(
    matrix: &RunMatrix,
    store: &mut ResultStore,
    options: MatrixOptions,
) -> Result<MatrixSummary, MatrixError> {
    matrix.validate()?;
    let order = matrix.work_order();
    let total_cells = order.len();
    let mut pending: Vec<_> = order.into_iter().filter(|c| !store.contains(&matrix.cell_id(*c))).collect();
    let already_done = total_cells - pending.len();
    if let Some(limit) = options.limit {
        pending.truncate(limit);
    }

    let mut failed = 0;
    let mut write = |store: &mut ResultStore, r: RunResult| -> Result<(), MatrixError> {
        if !r.is_success() {
            failed += 1;
            log::warn!("cell {}/{}/{} failed: {:?}", r.model, r.scheme, r.prompt_id, r.status);
        }
        store.append(r)?;
        Ok(())
    };

    if matrix.parallelism == 1 || pending.len() <= 1 {
        for cell in &pending {
            write(store, matrix.execute_cell(*cell))?;
        }
    } else {
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, RunResult)>();
        let workers = matrix.parallelism.min(pending.len());
        std::thread::scope(|scope| -> Result<(), MatrixError> {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let pending = &pending;
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(cell) = pending.get(i) else { break };
                    if tx.send((i, matrix.execute_cell(*cell))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            // results are persisted in work order regardless of finishing order
            let mut parked = BTreeMap::new();
            let mut cursor = 0;
            for (i, result) in rx {
                parked.insert(i, result);
                while let Some(r) = parked.remove(&cursor) {
                    if let Err(e) = write(store, r) {
                        next.store(pending.len(), Ordering::SeqCst);
                        return Err(e);
                    }
                    cursor += 1;
                }
            }
            Ok(())
        })?;
    }

    let executed = pending.len();
    Ok(MatrixSummary { total_cells, already_done, executed, failed, remaining: total_cells - already_done - executed })
}
