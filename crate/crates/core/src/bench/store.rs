//! Append-only results store.
//!
//! A store directory holds `results.jsonl`, one [`RunResult`] per line in
//! work order, and `index.json`, which names the matrix the results belong to
//! and how many lines are complete. A torn trailing line left by a crash is
//! dropped on open.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::result::{CellId, RunResult};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt result record on line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("store belongs to a different matrix (fingerprint {found}, expected {expected})")]
    MatrixMismatch { found: String, expected: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub fingerprint: String,
    pub completed: usize,
}

pub struct ResultStore {
    dir: PathBuf,
    fingerprint: String,
    results: Vec<RunResult>,
    done: BTreeSet<CellId>,
    writer: BufWriter<File>,
}

impl ResultStore {
    /// Opens or creates the store for the matrix identified by `fingerprint`.
    pub fn open(dir: &Path, fingerprint: &str) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let index: StoreIndex = serde_json::from_str(&fs::read_to_string(&index_path)?)
                .map_err(|e| StoreError::Corrupt { line: 0, message: format!("index: {e}") })?;
            if index.fingerprint != fingerprint {
                return Err(StoreError::MatrixMismatch { found: index.fingerprint, expected: fingerprint.into() });
            }
        }

        let results_path = dir.join(RESULTS_FILE);
        let (results, valid_len) =
            if results_path.exists() { read_prefix(&fs::read_to_string(&results_path)?)? } else { (Vec::new(), 0) };
        let mut file = OpenOptions::new().create(true).truncate(false).write(true).open(&results_path)?;
        file.set_len(valid_len as u64)?;
        file.seek(SeekFrom::End(0))?;

        let done = results.iter().map(RunResult::cell_key).collect();
        let mut store = Self {
            dir: dir.to_path_buf(),
            fingerprint: fingerprint.into(),
            results,
            done,
            writer: BufWriter::new(file),
        };
        store.write_index()?;
        Ok(store)
    }

    /// Read-only load of every complete record in a store directory.
    pub fn load(dir: &Path) -> Result<Vec<RunResult>, StoreError> {
        Ok(read_prefix(&fs::read_to_string(dir.join(RESULTS_FILE))?)?.0)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn results(&self) -> &[RunResult] {
        &self.results
    }

    pub fn contains(&self, cell: &CellId) -> bool {
        self.done.contains(cell)
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn append(&mut self, result: RunResult) -> Result<(), StoreError> {
        let line = serde_json::to_string(&result).expect("result serialises");
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        self.done.insert(result.cell_key());
        self.results.push(result);
        self.write_index()
    }

    fn write_index(&mut self) -> Result<(), StoreError> {
        let index = StoreIndex { fingerprint: self.fingerprint.clone(), completed: self.results.len() };
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(&index).expect("index serialises");
        text.push('\n');
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.dir.join(INDEX_FILE))?;
        Ok(())
    }
}

/// Parses newline-terminated lines. A final line without a newline is a torn
/// write and is dropped; any other unparseable line is corruption.
fn read_prefix(text: &str) -> Result<(Vec<RunResult>, usize), StoreError> {
    let mut results = Vec::new();
    let mut offset = 0;
    for (idx, chunk) in text.split_inclusive('\n').enumerate() {
        let complete = chunk.ends_with('\n');
        let line = chunk.trim_end_matches('\n');
        if line.trim().is_empty() {
            offset += chunk.len();
            continue;
        }
        if !complete {
            break;
        }
        let r = serde_json::from_str::<RunResult>(line)
            .map_err(|e| StoreError::Corrupt { line: idx + 1, message: e.to_string() })?;
        results.push(r);
        offset += chunk.len();
    }
    Ok((results, offset))
}
