use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExportError;
use crate::canonical::to_canonical_bytes;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_SCHEMA: u32 = 1;

/// A file to place in a bundle, path relative to the bundle root with `/` separators.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleFile {
    pub path: String,
    pub bytes: Vec<u8>,
}

impl BundleFile {
    pub fn new(path: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            path: path.into(),
            bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub name: String,
    pub seed: u64,
    pub passed: bool,
    pub converged: bool,
    pub frames: usize,
    pub exit_code: i32,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    /// SHA-256 of the configuration bytes the bundle was produced from.
    pub config_hash: String,
    pub scenes: Vec<SceneEntry>,
    /// Sorted by path.
    pub files: Vec<FileEntry>,
    /// Worst exit code over all scenes.
    pub exit_code: i32,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: std::io::Error) -> ExportError {
    ExportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes `bytes` to a sibling temporary file, syncs it and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), ExportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// Writes `files` under `dir` and returns their manifest entries.
pub fn write_files(dir: &Path, files: &[BundleFile]) -> Result<Vec<FileEntry>, ExportError> {
    files
        .iter()
        .map(|f| {
            atomic_write(&dir.join(&f.path), &f.bytes)?;
            Ok(FileEntry {
                path: f.path.clone(),
                bytes: f.bytes.len() as u64,
                sha256: sha256_hex(&f.bytes),
            })
        })
        .collect()
}

/// Sorts the file entries, writes the canonical manifest under `dir` and
/// re-reads every listed file against its recorded length and hash.
pub fn write_manifest(dir: &Path, mut manifest: Manifest) -> Result<(Manifest, Vec<u8>), ExportError> {
    manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
    if let Some(w) = manifest.files.windows(2).find(|w| w[0].path == w[1].path) {
        return Err(ExportError::Verify {
            path: w[0].path.clone(),
            message: "listed twice".into(),
        });
    }
    let bytes = to_canonical_bytes(&manifest).map_err(|e| ExportError::Format {
        format: "manifest",
        message: e.to_string(),
    })?;
    atomic_write(&dir.join(MANIFEST_NAME), &bytes)?;
    verify_bundle(dir, &manifest)?;
    Ok((manifest, bytes))
}

/// [`write_files`] then [`write_manifest`]; `manifest.files` is replaced.
pub fn write_bundle(dir: &Path, files: &[BundleFile], mut manifest: Manifest) -> Result<(Manifest, Vec<u8>), ExportError> {
    manifest.files = write_files(dir, files)?;
    write_manifest(dir, manifest)
}

/// Checks that every manifest entry exists with the recorded length and hash.
pub fn verify_bundle(dir: &Path, manifest: &Manifest) -> Result<(), ExportError> {
    for e in &manifest.files {
        let path = dir.join(&e.path);
        let bytes = fs::read(&path).map_err(|err| io_err(&path, err))?;
        let fail = |message: String| ExportError::Verify {
            path: e.path.clone(),
            message,
        };
        if bytes.len() as u64 != e.bytes {
            return Err(fail(format!("{} bytes on disk, {} recorded", bytes.len(), e.bytes)));
        }
        if sha256_hex(&bytes) != e.sha256 {
            return Err(fail("content hash differs".into()));
        }
    }
    Ok(())
}
