use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

/// Output files held in memory until the command has succeeded.
///
/// `commit` first writes every file to a temporary sibling and only then
/// renames them into place, so a failing command leaves no partial outputs.
#[derive(Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: &Path, bytes: Vec<u8>) {
        self.files.push((path.to_path_buf(), bytes));
    }

    pub fn add_with<F>(&mut self, path: &Path, write: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> coredn::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf).with_context(|| format!("rendering {}", path.display()))?;
        self.add(path, buf);
        Ok(())
    }

    pub fn commit(self) -> Result<()> {
        let mut temps = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p,
                _ => Path::new("."),
            };
            let mut tmp = NamedTempFile::new_in(dir)
                .with_context(|| format!("creating temporary file next to {}", path.display()))?;
            tmp.write_all(bytes)?;
            tmp.flush()?;
            temps.push((tmp, path));
        }
        for (tmp, path) in temps {
            tmp.persist(path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}
