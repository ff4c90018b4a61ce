//! Append-only review log.
//!
//! One record per line: eight hex digits of CRC-32 over the JSON text, a
//! space, then the JSON record. Each append is flushed to disk before it is
//! acknowledged. On open, a final line without its newline or with a bad
//! checksum is a torn write and is cut off; a bad line anywhere else is
//! corruption and refuses to open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use octx_core::{Class, NUM_CLASSES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panels::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Override,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub sha256: String,
    pub path: String,
}

/// The explanation the reviewer looked at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplanationUsed {
    pub method: Method,
    pub samples: usize,
    pub features: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub record_id: String,
    pub image: ImageRef,
    pub predicted_label: Class,
    pub probabilities: [f32; NUM_CLASSES],
    pub explanation: Option<ExplanationUsed>,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrected_label: Option<Class>,
    pub note: String,
    pub timestamp: DateTime<Utc>,
}

impl ReviewRecord {
    /// An override names a different class; an accept names none.
    pub fn check_decision(&self) -> Result<(), String> {
        match (self.decision, self.corrected_label) {
            (Decision::Accept, None) => Ok(()),
            (Decision::Accept, Some(_)) => Err("accept takes no corrected_label".into()),
            (Decision::Override, None) => Err("override requires corrected_label".into()),
            (Decision::Override, Some(c)) if c == self.predicted_label => {
                Err(format!("corrected_label {c} equals the predicted label"))
            }
            (Decision::Override, Some(_)) => Ok(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("audit log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("audit log {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
}

pub fn encode_line(record: &ReviewRecord) -> String {
    let json = serde_json::to_string(record).expect("serialisable");
    format!("{:08x} {json}\n", crc32fast::hash(json.as_bytes()))
}

/// Parses one line without its trailing newline.
pub fn decode_line(line: &str) -> Result<ReviewRecord, String> {
    let (crc, json) = line.split_once(' ').ok_or("missing checksum field")?;
    let stored = u32::from_str_radix(crc, 16).map_err(|_| format!("bad checksum field {crc:?}"))?;
    let computed = crc32fast::hash(json.as_bytes());
    if stored != computed || crc.len() != 8 {
        return Err(format!("checksum mismatch: stored {crc}, computed {computed:08x}"));
    }
    serde_json::from_str(json).map_err(|e| e.to_string())
}

struct Inner {
    file: File,
    records: Vec<ReviewRecord>,
}

pub struct AuditLog {
    path: PathBuf,
    inner: Mutex<Inner>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, AuditError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| AuditError::Io { path: path.clone(), source };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io)?;
        let mut text = Vec::new();
        file.read_to_end(&mut text).map_err(io)?;

        let mut records = Vec::new();
        let mut good = 0usize;
        let mut rest = &text[..];
        let mut line_no = 0;
        while !rest.is_empty() {
            line_no += 1;
            let (line, complete) = match rest.iter().position(|&b| b == b'\n') {
                Some(i) => (&rest[..i], true),
                None => (rest, false),
            };
            let last = !complete || line.len() + 1 == rest.len();
            let parsed = std::str::from_utf8(line).map_err(|e| e.to_string()).and_then(decode_line);
            match parsed {
                Ok(r) if complete => {
                    records.push(r);
                    good += line.len() + 1;
                    rest = &rest[line.len() + 1..];
                }
                _ if last => {
                    log::warn!("{}: dropping torn final line {line_no}", path.display());
                    break;
                }
                Err(reason) => {
                    return Err(AuditError::Corrupt {
                        path,
                        line: line_no,
                        reason,
                    })
                }
                Ok(_) => unreachable!("an incomplete line is always the last"),
            }
        }
        if good < text.len() {
            file.set_len(good as u64).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(Self {
            path,
            inner: Mutex::new(Inner { file, records }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and syncs one record. Appends are serialised by a lock.
    pub fn append(&self, record: ReviewRecord) -> Result<ReviewRecord, AuditError> {
        let line = encode_line(&record);
        let mut inner = self.inner.lock().expect("audit lock");
        let io = |source| AuditError::Io {
            path: self.path.clone(),
            source,
        };
        inner.file.write_all(line.as_bytes()).map_err(io)?;
        inner.file.sync_data().map_err(io)?;
        inner.records.push(record.clone());
        Ok(record)
    }

    pub fn newest_first(&self) -> Vec<ReviewRecord> {
        let inner = self.inner.lock().expect("audit lock");
        inner.records.iter().rev().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("audit lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
