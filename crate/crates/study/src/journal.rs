//! Append-only JSON-lines write-ahead log.
//!
//! Each record is one line, flushed and fsynced before `append` returns.
//! A crash can leave at most one torn record at the tail; `open` drops it
//! and truncates the file back to the last complete line.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, StudyError};

#[derive(Debug)]
pub struct Journal<E> {
    path: PathBuf,
    file: File,
    _record: PhantomData<fn(E)>,
}

impl<E: Serialize + DeserializeOwned> Journal<E> {
    /// Opens (creating if needed) and returns every complete record.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<E>)> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| StudyError::journal_io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| StudyError::journal_io(&path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)
            .map_err(|e| StudyError::journal_io(&path, e))?;

        let mut records = Vec::new();
        let mut good_len = 0usize;
        let mut lines = bytes.split_inclusive(|&b| b == b'\n').peekable();
        let mut line_no = 0;
        while let Some(line) = lines.next() {
            line_no += 1;
            let complete = line.ends_with(b"\n");
            let is_last = lines.peek().is_none();
            let body = line.strip_suffix(b"\n").unwrap_or(line);
            if body.iter().all(u8::is_ascii_whitespace) && complete {
                good_len += line.len();
                continue;
            }
            match serde_json::from_slice::<E>(body) {
                Ok(rec) if complete => {
                    records.push(rec);
                    good_len += line.len();
                }
                // A torn tail: the writer died before the newline hit disk.
                _ if is_last && !complete => {
                    log::warn!("{}: dropping torn final record ({} bytes)", path.display(), line.len());
                }
                Ok(_) => unreachable!("only the final line can lack a newline"),
                Err(e) if is_last => {
                    log::warn!("{}: dropping unreadable final record: {e}", path.display());
                }
                Err(e) => {
                    return Err(StudyError::Journal {
                        path,
                        message: format!("line {line_no}: {e}"),
                    })
                }
            }
        }
        if good_len < bytes.len() {
            file.set_len(good_len as u64)
                .map_err(|e| StudyError::journal_io(&path, e))?;
            file.sync_all().map_err(|e| StudyError::journal_io(&path, e))?;
        }
        Ok((
            Self {
                path,
                file,
                _record: PhantomData,
            },
            records,
        ))
    }

    /// Durably appends one record.
    pub fn append(&mut self, record: &E) -> Result<()> {
        let mut line = serde_json::to_vec(record).map_err(|e| StudyError::Journal {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        line.push(b'\n');
        let len = self
            .file
            .metadata()
            .map_err(|e| StudyError::journal_io(&self.path, e))?
            .len();
        let written = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        if let Err(e) = written {
            // Do not leave a torn record in front of later appends.
            let _ = self.file.set_len(len);
            return Err(StudyError::journal_io(&self.path, e));
        }
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
