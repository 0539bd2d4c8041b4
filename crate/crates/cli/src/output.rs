//! All-or-nothing output: files are staged next to their destination and only
//! renamed into place once every output has been produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use crate::CliError;

#[derive(Default)]
pub struct Staged {
    files: Vec<(NamedTempFile, PathBuf)>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::with_code("io", format!("{}: {e}", path.display()))
}

impl Staged {
    pub fn add(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| io_error(&dir, e))?;
        tmp.write_all(bytes)
            .and_then(|_| tmp.flush())
            .map_err(|e| io_error(path, e))?;
        self.files.push((tmp, path.to_path_buf()));
        Ok(())
    }

    /// Moves every staged file into place. On failure, files already moved are removed.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done: Vec<PathBuf> = Vec::new();
        for (tmp, dest) in self.files {
            if let Err(e) = tmp.persist(&dest) {
                for p in &done {
                    let _ = fs::remove_file(p);
                }
                return Err(io_error(&dest, e.error));
            }
            done.push(dest);
        }
        Ok(done)
    }
}
