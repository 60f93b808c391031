//! All-or-nothing output: every file is staged next to its target and renamed into
//! place only after all of them were written.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn commit(self) -> anyhow::Result<()> {
        let mut staged = Vec::with_capacity(self.files.len());
        for (path, bytes) in &self.files {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => PathBuf::from("."),
            };
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("staging {}", path.display()))?;
            tmp.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, path));
        }
        let mut done: Vec<&PathBuf> = Vec::new();
        for (tmp, path) in staged {
            if let Err(e) = tmp.persist(path) {
                for p in done {
                    let _ = std::fs::remove_file(p);
                }
                return Err(e.error).with_context(|| format!("moving {} into place", path.display()));
            }
            done.push(path);
        }
        Ok(())
    }
}
