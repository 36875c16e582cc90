//! `manifest.json`: per-stage record of the files written, their hashes and
//! the seeds behind them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub setting: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Complete,
    /// Outputs are written, but some fit did not converge.
    Nonconverged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Digest of the configuration sections the stage depends on.
    pub inputs: String,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nonconverged_replicates: Vec<usize>,
    pub files: Vec<FileRecord>,
    /// Digest over the status and every `(path, sha256)` pair.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cohort_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_seed: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl StageRecord {
    pub fn new(inputs: &str, files: Vec<FileRecord>, nonconverged_replicates: Vec<usize>) -> Self {
        let status = if nonconverged_replicates.is_empty() {
            StageStatus::Complete
        } else {
            StageStatus::Nonconverged
        };
        let mut text = format!("{inputs}\n{status:?}\n");
        for f in &files {
            text.push_str(&format!("{} {}\n", f.path, f.sha256));
        }
        StageRecord {
            inputs: inputs.to_string(),
            status,
            nonconverged_replicates,
            files,
            digest: sha256_hex(text.as_bytes()),
        }
    }

    /// Files that belong to a replicate, in replicate order.
    pub fn replicate_files(&self) -> Vec<&FileRecord> {
        let mut files: Vec<&FileRecord> = self.files.iter().filter(|f| f.replicate.is_some()).collect();
        files.sort_by_key(|f| f.replicate);
        files
    }

    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }
}

impl Manifest {
    pub fn load_or_default(out: &Path) -> Result<Self, CliError> {
        let path = out.join(MANIFEST_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| CliError::io(&path, e.into())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(CliError::io(&path, e)),
        }
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(out, MANIFEST_FILE, text.as_bytes()).map(|_| ())
    }

    /// The record of `upstream`, provided it was produced from the same inputs.
    pub fn require(&self, stage: &'static str, upstream: &'static str, inputs: &str) -> Result<&StageRecord, CliError> {
        let dependency = |reason: String| CliError::StageDependency {
            stage,
            upstream,
            reason,
        };
        let record = self.stages.get(upstream).ok_or_else(|| {
            dependency(format!(
                "no `{upstream}` results in {MANIFEST_FILE}; run `msm {upstream}` first"
            ))
        })?;
        if record.inputs != inputs {
            return Err(dependency(format!(
                "`{upstream}` results were produced with a different configuration; rerun `msm {upstream}`"
            )));
        }
        Ok(record)
    }
}

/// Writes `bytes` to `out/rel`, creating directories as needed.
pub fn write_file(out: &Path, rel: &str, bytes: &[u8]) -> Result<FileRecord, CliError> {
    let path = out.join(rel);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
    Ok(FileRecord {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        replicate: None,
        cohort_seed: None,
        test_seed: None,
    })
}

/// Reads an upstream file and checks it against its recorded hash.
pub fn read_verified(
    out: &Path,
    file: &FileRecord,
    stage: &'static str,
    upstream: &'static str,
) -> Result<Vec<u8>, CliError> {
    let path = out.join(&file.path);
    let bytes = fs::read(&path).map_err(|e| CliError::StageDependency {
        stage,
        upstream,
        reason: format!("cannot read {}: {e}", file.path),
    })?;
    if sha256_hex(&bytes) != file.sha256 {
        return Err(CliError::StageDependency {
            stage,
            upstream,
            reason: format!("{} changed after `{upstream}` wrote it", file.path),
        });
    }
    Ok(bytes)
}
