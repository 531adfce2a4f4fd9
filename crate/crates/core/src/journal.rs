//! Line-oriented append logs.
//!
//! Every store in the crate persists its records as one compact JSON object
//! per line and rebuilds its in-memory state by replaying the log at startup.
//! [`MemoryJournal`] keeps the lines in memory and is what tests use;
//! [`FileJournal`] appends to a single file on disk.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("journal I/O failed: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt journal record at line {line}: {source}")]
    Corrupt {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record could not be encoded: {0}")]
    Encode(#[source] serde_json::Error),
}

/// Append-only storage of text lines.
pub trait Journal: Send + Sync {
    /// Append one line. The line must not contain `\n`.
    fn append(&self, line: &str) -> io::Result<()>;

    /// All lines appended so far, oldest first.
    fn lines(&self) -> io::Result<Vec<String>>;

    fn flush(&self) -> io::Result<()> {
        Ok(())
    }
}

/// Encode `record` as compact JSON and append it.
pub fn append_record<T: Serialize>(journal: &dyn Journal, record: &T) -> Result<(), JournalError> {
    let line = serde_json::to_string(record).map_err(JournalError::Encode)?;
    journal.append(&line)?;
    Ok(())
}

/// Decode every line of `journal`, skipping blank lines.
pub fn replay<T: DeserializeOwned>(journal: &dyn Journal) -> Result<Vec<T>, JournalError> {
    let mut out = Vec::new();
    for (idx, line) in journal.lines()?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| JournalError::Corrupt {
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct MemoryJournal {
    lines: Mutex<Vec<String>>,
}

impl MemoryJournal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            lines: Mutex::new(lines.into_iter().map(Into::into).collect()),
        }
    }
}

impl Journal for MemoryJournal {
    fn append(&self, line: &str) -> io::Result<()> {
        self.lines.lock().push(line.to_owned());
        Ok(())
    }

    fn lines(&self) -> io::Result<Vec<String>> {
        Ok(self.lines.lock().clone())
    }
}

/// A journal backed by one append-mode file.
#[derive(Debug)]
pub struct FileJournal {
    path: PathBuf,
    file: Mutex<File>,
}

impl FileJournal {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Journal for FileJournal {
    fn append(&self, line: &str) -> io::Result<()> {
        debug_assert!(!line.contains('\n'));
        let mut buf = Vec::with_capacity(line.len() + 1);
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
        let mut file = self.file.lock();
        // single write so a crash leaves at most one partial trailing line
        file.write_all(&buf)?;
        file.flush()
    }

    fn lines(&self) -> io::Result<Vec<String>> {
        let _guard = self.file.lock();
        let reader = BufReader::new(File::open(&self.path)?);
        let mut lines: Vec<String> = reader.lines().collect::<io::Result<_>>()?;
        // a torn final write is dropped rather than failing the replay
        if let Some(last) = lines.last() {
            if !last.is_empty() && serde_json::from_str::<serde::de::IgnoredAny>(last).is_err() {
                lines.pop();
            }
        }
        Ok(lines)
    }

    fn flush(&self) -> io::Result<()> {
        self.file.lock().sync_all()
    }
}
