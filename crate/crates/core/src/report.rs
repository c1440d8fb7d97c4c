//! JSON-lines progress records.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Build identifier baked in at compile time (`git describe` when
/// available).
pub const BUILD_ID: &str = env!("MMNAS_BUILD_ID");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Valid,
    Eval,
}

/// One per-epoch, per-phase record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub phase: Phase,
    pub mean_loss: f64,
    pub lr: f64,
    pub wallclock_ms: u64,
    /// Lowest checkpoint loss so far; absent before the first checkpoint.
    pub best_so_far: Option<f64>,
    pub config_hash: String,
    pub build_id: String,
}

/// Summary of one completed stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub metrics: BTreeMap<String, f64>,
    pub genotype_hash: Option<String>,
    pub seed: u64,
    pub duration_ms: u64,
    pub config_hash: String,
    pub build_id: String,
    /// The full effective configuration of the run.
    pub config: serde_json::Value,
}

/// Either record kind, tagged with `"kind"` in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Record {
    Epoch(EpochRecord),
    Stage(StageReport),
}

pub trait ReportSink {
    fn emit(&mut self, record: &EpochRecord) -> Result<()>;

    fn stage(&mut self, _report: &StageReport) -> Result<()> {
        Ok(())
    }
}

/// Discards records.
#[derive(Debug, Default)]
pub struct NullSink;

impl ReportSink for NullSink {
    fn emit(&mut self, _: &EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<EpochRecord>,
    pub stages: Vec<StageReport>,
}

impl ReportSink for MemorySink {
    fn emit(&mut self, record: &EpochRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn stage(&mut self, report: &StageReport) -> Result<()> {
        self.stages.push(report.clone());
        Ok(())
    }
}

/// Appends one JSON object per line to a file.
pub struct JsonlSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(JsonlSink {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write_value<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let line = serde_json::to_string(value)?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

impl ReportSink for JsonlSink {
    fn emit(&mut self, record: &EpochRecord) -> Result<()> {
        self.write_value(&Record::Epoch(record.clone()))
    }

    fn stage(&mut self, report: &StageReport) -> Result<()> {
        self.write_value(&Record::Stage(report.clone()))
    }
}

/// Parses a JSON-lines report file.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
