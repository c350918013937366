//! Append-only JSONL record store.
//!
//! Every line is one [`RunRecord`]. On open, a trailing line that does not
//! parse (an interrupted write) is cut off; a malformed line anywhere else, or
//! a record written under a different configuration hash, is an error.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RECORD_FILE: &str = "records.jsonl";

/// Crossing scan of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenRecord {
    pub n: usize,
    pub realization: u64,
    pub seed: u64,
    pub crossing_count: usize,
    pub ground_crossing_count: usize,
    pub refined_taus: Vec<f64>,
    /// Set when the scan failed; such instances are excluded from statistics.
    pub error: Option<String>,
    pub wall_time: f64,
    pub config_hash: String,
}

/// Final energy of one instance under one protocol and total time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub n: usize,
    pub realization: u64,
    pub seed: u64,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub protocol: String,
    pub final_energy: f64,
    pub energy_fraction: f64,
    pub error: Option<String>,
    pub wall_time: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RunRecord {
    Screen(ScreenRecord),
    Energy(EnergyRecord),
}

/// Identity of a record; `T` is stored by its bit pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordKey {
    Screen { n: usize, seed: u64 },
    Energy { n: usize, seed: u64, t_bits: u64, protocol: String },
}

impl RunRecord {
    pub fn key(&self) -> RecordKey {
        match self {
            RunRecord::Screen(r) => RecordKey::Screen { n: r.n, seed: r.seed },
            RunRecord::Energy(r) => {
                RecordKey::Energy { n: r.n, seed: r.seed, t_bits: r.total_time.to_bits(), protocol: r.protocol.clone() }
            }
        }
    }

    pub fn config_hash(&self) -> &str {
        match self {
            RunRecord::Screen(r) => &r.config_hash,
            RunRecord::Energy(r) => &r.config_hash,
        }
    }
}

/// Completed records, optionally mirrored to a JSONL file.
pub struct RecordStore {
    hash: String,
    done: Mutex<HashMap<RecordKey, RunRecord>>,
    writer: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl RecordStore {
    /// A store that keeps records in memory only.
    pub fn in_memory(hash: &str) -> Self {
        RecordStore { hash: hash.to_string(), done: Mutex::new(HashMap::new()), writer: None, path: None }
    }

    /// Opens (or creates) `dir/records.jsonl` for records under `hash`.
    pub fn open(dir: &Path, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RECORD_FILE);
        let mut done = HashMap::new();
        if path.exists() {
            let good_len = load_records(&path, hash, &mut done)?;
            let actual = fs::metadata(&path)?.len();
            if good_len < actual {
                log::warn!(
                    "discarding {} bytes of an incomplete trailing record in {}",
                    actual - good_len,
                    path.display()
                );
                OpenOptions::new().write(true).open(&path)?.set_len(good_len)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(RecordStore {
            hash: hash.to_string(),
            done: Mutex::new(done),
            writer: Some(Mutex::new(file)),
            path: Some(path),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &RecordKey) -> Option<RunRecord> {
        self.done.lock().expect("store lock").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.done.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every stored record, ordered by key.
    pub fn records(&self) -> Vec<RunRecord> {
        let done = self.done.lock().expect("store lock");
        let mut keys: Vec<&RecordKey> = done.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| done[k].clone()).collect()
    }

    /// Appends a record; one line per record, flushed immediately.
    pub fn append(&self, record: RunRecord) -> Result<()> {
        if record.config_hash() != self.hash {
            return Err(Error::Ensemble("record carries a different configuration hash".into()));
        }
        if let Some(writer) = &self.writer {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let mut file = writer.lock().expect("writer lock");
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        self.done.lock().expect("store lock").insert(record.key(), record);
        Ok(())
    }
}

/// Reads records into `done` and returns the byte length of the valid prefix.
fn load_records(path: &Path, hash: &str, done: &mut HashMap<RecordKey, RunRecord>) -> Result<u64> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut offset = 0u64;
    let mut line = String::new();
    let mut line_no = 0usize;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            return Ok(offset);
        }
        line_no += 1;
        let complete = line.ends_with('\n');
        match serde_json::from_str::<RunRecord>(line.trim_end()) {
            Ok(record) if complete => {
                if record.config_hash() != hash {
                    return Err(Error::Ensemble(format!(
                        "{} holds records for configuration {} but this run has {}; use a new output directory",
                        path.display(),
                        record.config_hash(),
                        hash
                    )));
                }
                done.insert(record.key(), record);
                offset += read as u64;
            }
            _ => {
                // only the final line may be damaged
                let mut rest = String::new();
                reader.read_line(&mut rest)?;
                if !rest.is_empty() {
                    return Err(Error::Ensemble(format!("{} line {line_no} is not a valid record", path.display())));
                }
                return Ok(offset);
            }
        }
    }
}
