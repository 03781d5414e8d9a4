use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid_model::{read_case, GridCase};

/// Case files (`*.json`) in a snapshot directory, in lexicographic order.
pub fn snapshot_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every snapshot in a directory as `(file stem, case)`.
pub fn load_snapshot_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, GridCase)>> {
    snapshot_paths(dir)?
        .into_iter()
        .map(|path| {
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, read_case(&path)?))
        })
        .collect()
}
