//! Engine state kept next to the personicle inside the store directory.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use hse_core::gnb::GraphBlock;
use hse_core::knowledge::{parse_knowledge, KnowledgeBase};
use hse_core::loadmetrics::AthleteProfile;

use crate::error::{CliError, Result};
use crate::pipeline::DailyReport;

const STATE_DIR: &str = "hse";
const LOCK_FILE: &str = "hse.lock";

/// What `init` decided: the lamina, profile and genotypes the block was
/// built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub intent: String,
    pub lamina: String,
    pub profile: AthleteProfile,
    pub genotypes: BTreeMap<String, String>,
}

/// A day's report together with the block state it was read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub report: DailyReport,
    pub block: GraphBlock,
}

#[derive(Debug, Clone)]
pub struct Workspace {
    store: PathBuf,
}

impl Workspace {
    pub fn new(store: impl Into<PathBuf>) -> Self {
        Self {
            store: store.into(),
        }
    }

    pub fn store(&self) -> &Path {
        &self.store
    }

    fn dir(&self) -> PathBuf {
        self.store.join(STATE_DIR)
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir().join(name)
    }

    fn days_dir(&self) -> PathBuf {
        self.dir().join("days")
    }

    pub fn is_initialized(&self) -> bool {
        self.file("meta.json").exists()
    }

    fn require_init(&self) -> Result<()> {
        if !self.is_initialized() {
            return Err(CliError::State(format!(
                "store {} is not initialized; run `hse init` first",
                self.store.display()
            )));
        }
        Ok(())
    }

    /// Takes the store's writer lock; released when the guard drops.
    pub fn lock(&self) -> Result<LockGuard> {
        fs::create_dir_all(&self.store).map_err(|e| CliError::io(self.store.display(), e))?;
        let path = self.store.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::State(format!(
                    "store is locked by another command ({}); remove it if no command is running",
                    path.display()
                )))
            }
            Err(e) => Err(CliError::io(path.display(), e)),
        }
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })?;
        write_atomic(path, text.as_bytes())
    }

    fn read_json<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    /// Writes a fresh state, discarding any previous days and learned data.
    pub fn initialize(&self, meta: &Meta, knowledge_text: &str, block: &GraphBlock) -> Result<()> {
        let dir = self.dir();
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
        }
        fs::create_dir_all(self.days_dir()).map_err(|e| CliError::io(dir.display(), e))?;
        write_atomic(&self.file("knowledge.json"), knowledge_text.as_bytes())?;
        self.write_json(&self.file("block0.json"), block)?;
        self.write_json(&self.file("meta.json"), meta)
    }

    pub fn meta(&self) -> Result<Meta> {
        self.require_init()?;
        self.read_json(&self.file("meta.json"))
    }

    pub fn knowledge(&self) -> Result<KnowledgeBase> {
        self.require_init()?;
        let path = self.file("knowledge.json");
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        Ok(parse_knowledge(&text)?)
    }

    pub fn initial_block(&self) -> Result<GraphBlock> {
        self.require_init()?;
        self.read_json(&self.file("block0.json"))
    }

    pub fn save_initial_block(&self, block: &GraphBlock) -> Result<()> {
        self.write_json(&self.file("block0.json"), block)
    }

    fn day_path(&self, day: NaiveDate) -> PathBuf {
        self.days_dir().join(format!("{day}.json"))
    }

    pub fn days(&self) -> Result<Vec<NaiveDate>> {
        self.require_init()?;
        let dir = self.days_dir();
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| CliError::io(dir.display(), e))? {
            let entry = entry.map_err(|e| CliError::io(dir.display(), e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(d) = name
                .strip_suffix(".json")
                .and_then(|s| s.parse::<NaiveDate>().ok())
            {
                out.push(d);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn day(&self, day: NaiveDate) -> Result<DayRecord> {
        self.require_init()?;
        let path = self.day_path(day);
        if !path.exists() {
            return Err(CliError::State(format!(
                "day {day} has not been updated; run `hse update --from {day} --to {day}`"
            )));
        }
        self.read_json(&path)
    }

    pub fn save_day(&self, record: &DayRecord) -> Result<()> {
        self.write_json(&self.day_path(record.report.date), record)
    }

    pub fn remove_days_after(&self, day: NaiveDate) -> Result<()> {
        for d in self.days()?.into_iter().filter(|d| *d > day) {
            let p = self.day_path(d);
            fs::remove_file(&p).map_err(|e| CliError::io(p.display(), e))?;
        }
        Ok(())
    }

    pub fn fusion(&self) -> Result<BTreeMap<NaiveDate, f64>> {
        let path = self.file("fusion.json");
        if !path.exists() {
            return Ok(BTreeMap::new());
        }
        self.read_json(&path)
    }

    pub fn save_fusion(&self, fused: &BTreeMap<NaiveDate, f64>) -> Result<()> {
        self.write_json(&self.file("fusion.json"), fused)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path.display(), e))
}

/// Removes the lock file on drop.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        if let Err(e) = fs::remove_file(&self.path) {
            tracing::warn!(path = %self.path.display(), error = %e, "could not remove lock file");
        }
    }
}

/// Reads an input file, naming it in the error.
pub fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))
}
