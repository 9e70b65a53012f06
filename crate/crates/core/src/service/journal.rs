//! Append-only NDJSON event log, one file per study.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::study::{GroupAssignment, StudyConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    StudyCreated {
        study_id: String,
        config: StudyConfig,
        groups: GroupAssignment,
        /// Source path → content hash of the prepared rendition.
        audio: BTreeMap<String, String>,
    },
    SessionCreated {
        session_id: String,
        participant_id: String,
        group_id: usize,
        trial_order: Vec<String>,
        timestamp: u64,
    },
    RatingAccepted {
        session_id: String,
        trial_index: usize,
        stimulus_id: String,
        rating: u8,
        timestamp: u64,
    },
}

pub struct Journal {
    file: File,
}

impl Journal {
    /// Creates a new log; fails if it already exists.
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).create_new(true).open(path)?;
        if let Some(dir) = path.parent() {
            File::open(dir)?.sync_all()?;
        }
        Ok(Self { file })
    }

    /// Reads every complete event. A trailing line without its newline is the
    /// remains of an interrupted append; it is dropped and the file truncated so
    /// later appends start on a clean line.
    pub fn replay(path: &Path) -> Result<(Vec<Event>, Self), ServiceError> {
        let bytes = std::fs::read(path)?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let mut events = Vec::new();
        for (i, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let event = serde_json::from_slice(line).map_err(|e| ServiceError::Journal {
                path: PathBuf::from(path),
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(event);
        }
        let file = OpenOptions::new().append(true).open(path)?;
        if complete < bytes.len() {
            log::warn!("{}: dropping {} bytes of a partial record", path.display(), bytes.len() - complete);
            file.set_len(complete as u64)?;
            file.sync_data()?;
        }
        Ok((events, Self { file }))
    }

    /// Writes one event and waits until it is on stable storage.
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()
    }
}
