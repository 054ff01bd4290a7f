//! Append-only round journal.
//!
//! One JSON object per line:
//!
//! ```text
//! {"event":"open","round":0,"queries":[{"sample_id":7,"domain":"HA","features":[0.1,0.2]}]}
//! {"event":"label","round":0,"sample_id":7,"label":1,"annotator":"ann"}
//! {"event":"close","round":0}
//! {"event":"abort","round":0}
//! ```
//!
//! `label`, `close` and `abort` refer to the most recent `open`. A line is
//! flushed and synced to disk before the call that wrote it returns.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssada_core::data::SampleId;
use ssada_core::labeler::QueryItem;

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Open { round: usize, queries: Vec<QueryItem> },
    Label { round: usize, sample_id: SampleId, label: u8, annotator: String },
    Close { round: usize },
    Abort { round: usize },
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens `path` for appending, creating it if needed, and returns the
    /// events already in it.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Event>)> {
        let path = path.as_ref().to_path_buf();
        let events = if path.exists() { read_events(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((Self { path, file }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let reader = BufReader::new(File::open(path)?);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => events.push(e),
            // A torn final line means the write never completed, so it was never acknowledged.
            Err(_) if is_last_line(path, i)? => break,
            Err(e) => {
                return Err(ServiceError::Journal(format!(
                    "{}:{}: {e}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(events)
}

fn is_last_line(path: &Path, index: usize) -> Result<bool> {
    let count = BufReader::new(File::open(path)?).lines().count();
    Ok(index + 1 == count)
}
