use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Writes files into one directory, each via a temporary file and rename so
/// readers never see a partial artifact.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&root)?;
        Ok(OutDir { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
        let dest = self.path(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(contents)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &dest)?;
        log::info!("wrote {}", dest.display());
        Ok(dest)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(optql_core::Error::from)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
