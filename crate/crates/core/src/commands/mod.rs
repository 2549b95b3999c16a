//! Batch subcommands behind the `bevdet` binary.
//!
//! Frames are processed on the current rayon pool; results are collected in
//! input order so artifacts and logs match a sequential run.

mod bench;
mod encode;
mod eval;
mod oracle;
mod viz;

use std::path::{Path, PathBuf};

pub use bench::{cmd_bench, synthetic_cloud, BenchReport, StageTiming, BENCH_POINTS};
pub use encode::{cmd_encode, Manifest, ManifestFrame};
pub use eval::{cmd_eval, load_label_dir};
pub use oracle::cmd_oracle;
pub use viz::{cmd_viz, VizReport};

use crate::error::{Error, Result};

/// Environment variable holding the worker count for batch commands.
pub const WORKERS_ENV: &str = "BEVDET_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        _ => EXIT_DATA,
    }
}

/// Outcome of a per-frame batch; failed frames do not stop the batch.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct BatchReport {
    pub written: Vec<PathBuf>,
    pub failures: Vec<(String, String)>,
}

impl BatchReport {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            EXIT_OK
        } else {
            EXIT_DATA
        }
    }
}

/// Reads a split file: one frame id per line, blank lines and `#` comments
/// skipped.
pub fn read_split(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// Sorted stems of the files with `ext` in `dir`.
pub fn list_ids(dir: impl AsRef<Path>, ext: &str) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Per-frame seed derived from the run seed and the frame id (FNV-1a).
pub fn frame_seed(seed: u64, frame_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in frame_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
