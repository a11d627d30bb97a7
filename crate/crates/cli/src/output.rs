//! Staged output directories and run manifests.
//!
//! Every file is written into a hidden temporary directory next to the
//! destination. Only when the command succeeds is it renamed into place, so
//! a failed run leaves nothing behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tempfile::TempDir;

use crate::args::Command;
use crate::error::CliError;

pub struct Staging {
    dir: TempDir,
    dest: PathBuf,
    force: bool,
    files: Vec<String>,
}

impl Staging {
    pub fn new(dest: &Path, force: bool) -> Result<Self, CliError> {
        if dest.exists() && !force {
            let empty_dir = dest.is_dir() && fs::read_dir(dest).map_err(|e| CliError::io(dest, e))?.next().is_none();
            if !empty_dir {
                return Err(CliError::Arg(format!(
                    "output directory {} already exists; pass --force to replace it",
                    dest.display()
                )));
            }
        }
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".tensorm-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Self {
            dir,
            dest: dest.to_path_buf(),
            force,
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Opens `name` for writing inside the staging directory.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Writes `name` with `fill`, mapping library errors through.
    pub fn write(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut BufWriter<File>) -> tensorm::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = self.create(name)?;
        fill(&mut w)?;
        w.flush().map_err(|e| CliError::io(&self.path(name), e))?;
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Moves the staged directory to its destination.
    pub fn commit(self) -> Result<PathBuf, CliError> {
        if self.dest.exists() {
            if self.dest.is_dir() {
                fs::remove_dir_all(&self.dest).map_err(|e| CliError::io(&self.dest, e))?;
            } else if self.force {
                fs::remove_file(&self.dest).map_err(|e| CliError::io(&self.dest, e))?;
            }
        }
        let staged = self.dir.keep();
        fs::rename(&staged, &self.dest).map_err(|e| {
            let _ = fs::remove_dir_all(&staged);
            CliError::io(&self.dest, e)
        })?;
        Ok(self.dest)
    }
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Everything needed to repeat a run. The `run` field holds the command
/// and its fully resolved arguments, seed included.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    #[serde(flatten)]
    pub run: &'a Command,
    pub seed: Option<u64>,
    pub threads: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub const MANIFEST: &str = "manifest.json";

pub fn write_manifest(staging: &mut Staging, manifest: &Manifest<'_>) -> Result<(), CliError> {
    let path = staging.path(MANIFEST);
    let mut w = staging.create(MANIFEST)?;
    serde_json::to_writer_pretty(&mut w, manifest).map_err(|e| CliError::io(&path, e.into()))?;
    w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
    w.flush().map_err(|e| CliError::io(&path, e))?;
    Ok(())
}
